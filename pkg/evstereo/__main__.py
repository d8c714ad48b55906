from evstereo.cli import main

main()
