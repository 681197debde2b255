"""Flask app factory."""

from __future__ import annotations

from flask import Flask, jsonify

from .errors import ErrorCode, create_error_response
from .routes.checks import checks_bp
from .routes.health import health_bp
from .routes.theory import theory_bp


def create_app() -> Flask:
    app = Flask(__name__)

    app.register_blueprint(checks_bp)
    app.register_blueprint(health_bp)
    app.register_blueprint(theory_bp)

    @app.errorhandler(404)
    def not_found(_error):
        return jsonify(create_error_response(ErrorCode.NOT_FOUND, "Route not found")), 404

    @app.errorhandler(405)
    def method_not_allowed(_error):
        return jsonify(create_error_response("METHOD_NOT_ALLOWED", "Method not allowed")), 405

    return app
