"""Read-only endpoints for profiles, surface tension and lattice sizes."""

from __future__ import annotations

import logging

import numpy as np
from flask import Blueprint, jsonify, request

from ..errors import ErrorCode, InvalidParameters, LabError, create_error_response, error_code_for
from ..services.mesh import assemble, build_grid
from ..services.scalar_theory import analytic_surface_tension, load_potential, solve_profile, surface_tension

logger = logging.getLogger(__name__)

theory_bp = Blueprint("theory", __name__)

MAX_PROFILE_POINTS = 2001


def _cors_headers() -> dict:
    return {
        "Access-Control-Allow-Origin": "*",
        "Access-Control-Allow-Headers": "Content-Type, Authorization",
        "Access-Control-Allow-Methods": "GET, OPTIONS",
        "Cache-Control": "public, max-age=300",
    }


def _status_for_error(code: str) -> int:
    if code == ErrorCode.INADMISSIBLE_POTENTIAL:
        return 422
    if code == ErrorCode.NOT_FOUND:
        return 404
    if code == ErrorCode.INTERNAL_ERROR:
        return 500
    return 400


def _arg(name: str, cast, default=None):
    raw = request.args.get(name)
    if raw is None or raw == "":
        if default is None:
            raise InvalidParameters(f"missing query parameter {name!r}")
        return default
    try:
        return cast(raw)
    except ValueError as exc:
        raise InvalidParameters(f"query parameter {name!r} is invalid: {raw!r}") from exc


def _failure(exc: Exception):
    code = error_code_for(exc)
    if not isinstance(exc, LabError):
        logger.exception("unhandled error in theory route")
    return jsonify(create_error_response(code, str(exc))), _status_for_error(code), _cors_headers()


@theory_bp.route("/api/profile", methods=["GET", "OPTIONS"])
def profile_route():
    if request.method == "OPTIONS":
        return ("", 204, _cors_headers())
    try:
        potential = load_potential(_arg("potential", str, "quartic"))
        xmax = _arg("xmax", float, 10.0)
        samples = _arg("samples", int, 201)
        if not 2 <= samples <= MAX_PROFILE_POINTS:
            raise InvalidParameters(f"samples must lie in [2, {MAX_PROFILE_POINTS}]")
        profile = solve_profile(potential)
        x = np.linspace(-xmax, xmax, samples)
        data = {
            "c1": profile.c1,
            "c2": profile.c2,
            "surface_tension": profile.surface_tension,
            "x": x.tolist(),
            "m": profile.value(x).tolist(),
            "dm": profile.derivative(x).tolist(),
            "d2m": profile.second_derivative(x).tolist(),
        }
        return jsonify({"success": True, "data": data}), 200, _cors_headers()
    except Exception as exc:
        return _failure(exc)


@theory_bp.route("/api/surface-tension", methods=["GET", "OPTIONS"])
def surface_tension_route():
    if request.method == "OPTIONS":
        return ("", 204, _cors_headers())
    try:
        potential = load_potential(_arg("potential", str, "quartic"))
        data = {"value": surface_tension(potential), "analytic": analytic_surface_tension(potential)}
        return jsonify({"success": True, "data": data}), 200, _cors_headers()
    except Exception as exc:
        return _failure(exc)


@theory_bp.route("/api/mesh", methods=["GET", "OPTIONS"])
def mesh_route():
    if request.method == "OPTIONS":
        return ("", 204, _cors_headers())
    try:
        grid = build_grid(_arg("d", int), _arg("L", float), _arg("n", int))
        data = grid.to_dict()
        if request.args.get("assemble") == "1":
            fem = assemble(grid)
            data.update({"ramp_energy": fem.ramp_energy, "stiffness_nnz": int(fem.stiffness.nnz)})
        return jsonify({"success": True, "data": data}), 200, _cors_headers()
    except Exception as exc:
        return _failure(exc)
