"""Flask route blueprints."""
