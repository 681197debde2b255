"""Centralized configuration, tolerances and potential registry."""

from __future__ import annotations

import logging
import os

SERVER_PORT = int(os.environ.get("ACLAB_SERVER_PORT", "5000"))
DEBUG = os.environ.get("ACLAB_DEBUG", "false").lower() == "true"
LOG_LEVEL = os.environ.get("ACLAB_LOG_LEVEL", "INFO").upper()
WORKERS = max(1, int(os.environ.get("ACLAB_WORKERS", "4")))
DOF_CAP = int(float(os.environ.get("ACLAB_DOF_CAP", "200000")))
SLOW_TESTS = os.environ.get("ACLAB_SLOW_TESTS", "0").lower() in ("1", "true", "yes")

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

POTENTIAL_CONFIG = {
    "quartic": {
        "coefficients": (0.25, 0.0, -0.5, 0.0, 0.25),
        "kind": "quartic",
        "description": "(u^2 - 1)^2 / 4",
    },
    "sextic": {
        "coefficients": (0.25, 0.0, -0.25, 0.0, -0.25, 0.0, 0.25),
        "kind": "custom",
        "description": "(u^2 - 1)^2 (u^2 + 1) / 4",
    },
}

POTENTIALS = list(POTENTIAL_CONFIG)
CLOSED_FORM_POTENTIALS = [name for name, cfg in POTENTIAL_CONFIG.items() if cfg["kind"] == "quartic"]

# Landscape radii
DELTA_0 = 0.3
DELTA_3 = 0.2

# Profile ODE
ODE_RTOL = 1e-10
ODE_XMAX = 100.0
TAIL_SWITCH = 1e-6
TAIL_SAFETY = 1e-3
TAIL_C1_INFLATION = 1.01
SURFACE_TENSION_TOL = 1e-12

# Quadrature orders (points per collapsed direction)
PROFILE_QUAD_ORDER = 5
EXTERIOR_SPAN = 40.0

# Projection onto the minimizer manifold
NEWTON_TOL = 1e-12
NEWTON_MAX_STEPS = 50
AMBIGUITY_RATIO = 1.01
DENOMINATOR_FLOOR = 0.1
ORTHOGONALITY_TOL = 1e-8

# Eigen solves
EIGEN_TOL = 1e-12
EIGEN_MAX_ITER = 10000
EIGEN_MAX_DOF = 20000

# Monte Carlo
MC_SLACK_SE = 3.0
SAMPLE_CHUNK = 1000
IDENTITY_RTOL = 1e-8

# Landscape checks
LANDSCAPE_SLACK_CONST = 1.0
PROBE_MAX_ITER = 200

# Sampler
ACCEPT_LOW = 0.2
ACCEPT_HIGH = 0.8
ACCEPT_COLLAPSE = 0.05
ADAPT_WINDOW = 50
BLOWUP_THRESHOLD = 1e3
RHAT_MAX = 1.1
IAT_WINDOW = 5.0
BURN_IN_IAT_FACTOR = 10.0
TAIL_BATCHES = 20
MIN_ESS = 50.0
IS_RADIUS_FACTOR = 1.2
TI_SLACK = 0.15
TI_MIN_RUNGS = 8

# Experiments
MAIN_THEOREM_SLACK = 0.3
RATE_TOLERANCE = 0.15

DEFAULT_SCHEDULE = {
    "d": 1,
    "lambda": 0.3,
    "alpha": 0.2,
    "lambda1": 0.15,
    "delta": 0.3,
    "eps_list": [0.5, 0.3, 0.2, 0.1],
    "seed": 0,
    "samples": 2000,
    "slack": MAIN_THEOREM_SLACK,
    "L_scale": 4.0,
    "a_scale": 0.5,
    "trials": 5,
    "method": "direct",
    "potential": "quartic",
    "precondition": "stiffness_shifted",
    "step": 0.5,
    "burn_in": 500,
    "thin": 2,
    "kappa": 1.0,
    "certify": False,
    "rate_eps": [0.5, 0.35, 0.25, 0.18],
    "rate_L_scale": 12.0,
    "rate_a_scale": 0.1,
    "cutoff_scale": 8.0,
    "logz_eps": [0.5, 0.3, 0.2],
    "logz_L_scale": 2.0,
    "logz_rungs": 12,
    "logz_samples": 2000,
}

MAIN_THEOREM_COLUMNS = [
    "eps", "L", "n", "N", "delta", "p_hat", "ci_low", "ci_high", "eps_log_p", "c0_delta_sq", "informative", "pass",
]
BATTERY_COLUMNS = ["check", "eps", "value", "bound", "pass", "hard", "detail"]
TRACE_COLUMNS = ["iter", "dist", "energy", "accept"]


def detect_potential(name: str) -> str | None:
    key = (name or "").strip().lower()
    return key if key in POTENTIAL_CONFIG else None


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(level=(level or LOG_LEVEL).upper(), format=LOG_FORMAT)
