"""Endpoints evaluating energies, projections, Gaussian identities and schedules."""

from __future__ import annotations

import logging
import math

from flask import Blueprint, jsonify, request

from ..config import DOF_CAP
from ..errors import ErrorCode, InvalidParameters, LabError, create_error_response, error_code_for
from ..services.energy import free_energy
from ..services.experiments import ExperimentSchedule, validate_schedule
from ..services.gaussian import log_partition_ratio_21
from ..services.mesh import Field, build_grid
from ..services.scalar_theory import load_potential, solve_profile
from ..services.tubular import project

logger = logging.getLogger(__name__)

checks_bp = Blueprint("checks", __name__)


def _cors_headers() -> dict:
    return {
        "Access-Control-Allow-Origin": "*",
        "Access-Control-Allow-Headers": "Content-Type, Authorization",
        "Access-Control-Allow-Methods": "GET, POST, OPTIONS",
    }


def _status_for_error(code: str) -> int:
    if code in (
        ErrorCode.INADMISSIBLE_POTENTIAL,
        ErrorCode.AMBIGUOUS_PROJECTION,
        ErrorCode.NO_CONVERGENCE,
        ErrorCode.DENOMINATOR_NEAR_ZERO,
    ):
        return 422
    if code == ErrorCode.NOT_FOUND:
        return 404
    if code in (ErrorCode.INTERNAL_ERROR, ErrorCode.IDENTITY_VIOLATED):
        return 500
    return 400


def _failure(exc: Exception):
    code = error_code_for(exc)
    if not isinstance(exc, LabError):
        logger.exception("unhandled error in checks route")
    return jsonify(create_error_response(code, str(exc))), _status_for_error(code), _cors_headers()


def _json_body() -> dict:
    if not request.is_json:
        raise InvalidParameters("JSON body required")
    body = request.get_json(silent=True)
    if not isinstance(body, dict):
        raise InvalidParameters("JSON object body required")
    return body


def _field_from(body: dict) -> Field:
    data = body.get("field")
    if not isinstance(data, dict):
        raise InvalidParameters("body must carry a 'field' object")
    field = Field.from_dict(data)
    if field.grid.N > DOF_CAP:
        raise InvalidParameters(f"field has N={field.grid.N} above the cap {DOF_CAP}")
    return field


@checks_bp.route("/api/energy", methods=["POST", "OPTIONS"])
def energy_route():
    if request.method == "OPTIONS":
        return ("", 204, _cors_headers())
    try:
        body = _json_body()
        report = free_energy(_field_from(body), load_potential(body.get("potential") or "quartic"))
        return jsonify({"success": True, "data": report.to_dict()}), 200, _cors_headers()
    except Exception as exc:
        return _failure(exc)


@checks_bp.route("/api/project", methods=["POST", "OPTIONS"])
def project_route():
    if request.method == "OPTIONS":
        return ("", 204, _cors_headers())
    try:
        body = _json_body()
        profile = solve_profile(load_potential(body.get("potential") or "quartic"))
        coords = project(_field_from(body), profile, body.get("xi0"))
        return jsonify({"success": True, "data": coords.to_dict()}), 200, _cors_headers()
    except Exception as exc:
        return _failure(exc)


@checks_bp.route("/api/gaussian/ratio21", methods=["GET", "OPTIONS"])
def ratio21_route():
    if request.method == "OPTIONS":
        return ("", 204, _cors_headers())
    try:
        try:
            d, L, n = int(request.args["d"]), float(request.args["L"]), int(request.args["n"])
            eps = float(request.args["eps"])
        except KeyError as exc:
            raise InvalidParameters(f"missing query parameter {exc}") from exc
        except ValueError as exc:
            raise InvalidParameters(f"invalid query parameter: {exc}") from exc
        if eps <= 0.0:
            raise InvalidParameters(f"eps must be positive, got {eps}")
        grid = build_grid(d, L, n)
        value = log_partition_ratio_21(grid, eps)
        closed = -0.5 * grid.N * math.log(eps) + (1.0 / grid.L) * (1.0 / eps - 1.0)
        data = {"value": value, "closed_form": closed, "N": grid.N, "L": grid.L}
        return jsonify({"success": True, "data": data}), 200, _cors_headers()
    except Exception as exc:
        return _failure(exc)


@checks_bp.route("/api/schedule/validate", methods=["POST", "OPTIONS"])
def schedule_route():
    if request.method == "OPTIONS":
        return ("", 204, _cors_headers())
    try:
        checked = validate_schedule(ExperimentSchedule.from_dict(_json_body()))
        return jsonify({"success": True, "data": checked.to_dict()}), 200, _cors_headers()
    except TypeError as exc:
        return _failure(InvalidParameters(f"malformed schedule: {exc}"))
    except Exception as exc:
        return _failure(exc)
