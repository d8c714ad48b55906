"""API blueprints for the Flask application."""
