"""Command-line entry point: `python -m aclab <subcommand>`."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .config import (
    BATTERY_COLUMNS,
    DEBUG,
    DEFAULT_SCHEDULE,
    MAIN_THEOREM_COLUMNS,
    SERVER_PORT,
    TRACE_COLUMNS,
    configure_logging,
)
from .errors import InvalidParameters, LabError, create_error_response, error_code_for
from .services.energy import free_energy, landscape_lower_probe
from .services.experiments import ExperimentSchedule, mesh_divisions, run_main_theorem, run_verification_battery
from .services.gaussian import (
    concentration_h1_check,
    concentration_sup_check,
    log_partition_ratio_21,
    log_partition_ratio_31,
    make_gaussian,
    sample_batch,
)
from .services.mesh import Field, assemble, build_grid, dump_matrices
from .services.reports import write_csv, write_json
from .services.sampler import ChainConfig, LangevinChain, estimate_log_Z, estimate_tail, unadjusted_langevin
from .services.scalar_theory import load_potential, solve_profile
from .services.tubular import dist_to_manifold, project


def _emit(payload: dict, out: str | None = None) -> None:
    if out:
        write_json(payload, out)
    print(json.dumps(payload, indent=2, default=float))


def _read_field(path: str) -> Field:
    try:
        return Field.from_dict(json.loads(Path(path).read_text()))
    except (OSError, json.JSONDecodeError) as exc:
        raise InvalidParameters(f"cannot read field {path}: {exc}") from exc


def _grid_args(parser: argparse.ArgumentParser, d: int = 0, L: float = 4.0, n: int = 4) -> None:
    parser.add_argument("--d", type=int, default=d)
    parser.add_argument("--L", type=float, default=L)
    parser.add_argument("--n", type=int, default=n)


def _scheduled_grid(args):
    L = args.L_scale * args.eps ** (-args.lam)
    return build_grid(args.d, L, mesh_divisions(args.a_scale * args.eps**args.alpha))


def cmd_profile(args) -> int:
    profile = solve_profile(load_potential(args.potential))
    x = np.linspace(-args.xmax, args.xmax, args.samples)
    rows = [
        {"x": xi, "m": m, "m'": dm, "m''": d2m}
        for xi, m, dm, d2m in zip(x, profile.value(x), profile.derivative(x), profile.second_derivative(x))
    ]
    if args.out:
        write_csv(rows, ["x", "m", "m'", "m''"], args.out)
    _emit({"c1": profile.c1, "c2": profile.c2, "surface_tension": profile.surface_tension})
    return 0


def cmd_mesh(args) -> int:
    grid = build_grid(args.d, args.L, args.n)
    fem = assemble(grid)
    payload = grid.to_dict()
    payload["ramp_energy"] = fem.ramp_energy
    if args.dump_matrices:
        stiffness, mass = dump_matrices(fem, args.dump_matrices)
        payload["files"] = [str(stiffness), str(mass)]
    _emit(payload)
    return 0


def cmd_energy(args) -> int:
    report = free_energy(_read_field(args.field), load_potential(args.potential))
    _emit(report.to_dict(), args.report)
    return 0


def cmd_landscape(args) -> int:
    grid = build_grid(args.d, args.L, args.n)
    potential = load_potential(args.potential)
    rows = []
    for delta in args.delta:
        probe = landscape_lower_probe(delta, potential, grid, args.trials, args.seed)
        rows.append({"delta": delta, "c0_estimate": probe.c0_estimate, "min_energy": probe.min_energy})
    if args.out:
        write_csv(rows, ["delta", "c0_estimate", "min_energy"], args.out)
    _emit({"rows": rows})
    return 0


def cmd_project(args) -> int:
    field = _read_field(args.field)
    coords = project(field, solve_profile(load_potential(args.potential)))
    _emit(coords.to_dict(), args.out)
    return 0


def cmd_gaussian(args) -> int:
    grid = build_grid(args.d, args.L, args.n)
    if args.check == "ratio21":
        result = {"check": "ratio21", "value": log_partition_ratio_21(grid, args.eps), "pass": True}
    elif args.check == "ratio31":
        r31 = log_partition_ratio_31(grid, args.eps, args.kappa)
        result = {"check": "ratio31", **r31._asdict(), "pass": r31.passed}
    elif args.check == "sup":
        check = concentration_sup_check(grid, args.eps, args.kappa, args.delta, args.samples, args.seed)
        result = {"check": "sup", **check._asdict()}
    elif args.check == "h1":
        check = concentration_h1_check(grid, args.eps, args.kappa, args.r, args.samples, args.seed)
        result = {"check": "h1", **check._asdict()}
    else:
        spec = make_gaussian(args.measure, grid, args.eps, args.kappa)
        result = {"measure": args.measure, "N": grid.N, "logdet": spec.logdet, "log_norm": spec.log_norm}
        if args.out:
            draws = sample_batch(spec, args.samples, args.seed)
            columns = ["sample"] + [f"h{i}" for i in range(grid.N)]
            rows = [{"sample": k, **{f"h{i}": v for i, v in enumerate(row)}} for k, row in enumerate(draws)]
            write_csv(rows, columns, args.out)
        _emit(result)
        return 0
    if args.out:
        write_csv([result], list(result), args.out)
    _emit(result)
    return 0 if result.get("pass", result.get("passed", True)) else 1


def cmd_mcmc(args) -> int:
    grid = _scheduled_grid(args)
    potential = load_potential(args.potential)
    profile = solve_profile(potential)
    config = ChainConfig(
        eps=args.eps,
        step=args.step,
        precondition=args.precondition,
        burn_in=args.burn_in,
        thin=args.thin,
        seed=args.seed,
        n_samples=args.samples,
    )
    rows = []
    if args.method == "ula":
        for k, field in enumerate(unadjusted_langevin(config, grid, potential)):
            energy = free_energy(field, potential).total_raw
            rows.append({"iter": k, "dist": dist_to_manifold(field, profile), "energy": energy, "accept": 1})
    else:
        chain = LangevinChain(config, grid, potential)
        for k, field in enumerate(chain.samples()):
            rows.append({"iter": k, "dist": dist_to_manifold(field, profile), "energy": chain.energy,
                         "accept": int(chain.last_accept)})
    if args.out:
        write_csv(rows, TRACE_COLUMNS, args.out)
    summary = {"grid": grid.to_dict(), "samples": len(rows)}
    if rows:
        summary["median_dist"] = float(np.median([r["dist"] for r in rows]))
    if args.method == "mala" and args.delta is not None:
        summary["tail"] = estimate_tail(config, args.delta, grid, potential, "direct", profile).to_dict()
    _emit(summary)
    return 0


def cmd_logz(args) -> int:
    grid = _scheduled_grid(args)
    value = estimate_log_Z(grid, load_potential(args.potential), args.eps, args.rungs, args.samples_per_rung, args.seed)
    _emit({"eps": args.eps, "N": grid.N, "eps_log_Z": value})
    return 0


def _schedule_from(args) -> ExperimentSchedule:
    return ExperimentSchedule.from_json(args.config) if args.config else ExperimentSchedule()


def cmd_experiment(args) -> int:
    report = run_main_theorem(_schedule_from(args))
    if args.out:
        write_json(report, args.out)
    if args.csv:
        write_csv(report.rows, MAIN_THEOREM_COLUMNS, args.csv)
    payload = report.to_dict()
    _emit({"passed": report.passed, "verdict": payload["verdict"], "rows": payload["rows"]})
    return 0 if report.passed else 1


def cmd_battery(args) -> int:
    report = run_verification_battery(_schedule_from(args))
    if args.out:
        write_json(report, args.out)
    if args.csv:
        write_csv(report.rows, BATTERY_COLUMNS, args.csv)
    _emit({"passed": report.passed, "hard_failures": report.hard_failures})
    return 1 if report.hard_failures else 0


def cmd_serve(args) -> int:
    from .app import create_app

    create_app().run(host="0.0.0.0", port=args.port, debug=args.debug)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aclab", description="Allen-Cahn Gibbs-measure laboratory")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("profile", help="transition profile samples")
    p.add_argument("--potential", default="quartic")
    p.add_argument("--xmax", type=float, default=10.0)
    p.add_argument("--samples", type=int, default=201)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("mesh", help="lattice sizes and P1 matrices")
    _grid_args(p)
    p.add_argument("--dump-matrices", dest="dump_matrices")
    p.set_defaults(func=cmd_mesh)

    p = sub.add_parser("energy", help="free energy of a field")
    p.add_argument("--field", required=True)
    p.add_argument("--potential", default="quartic")
    p.add_argument("--report")
    p.set_defaults(func=cmd_energy)

    p = sub.add_parser("landscape", help="lower landscape probe")
    _grid_args(p)
    p.add_argument("--potential", default="quartic")
    p.add_argument("--delta", type=float, nargs="+", default=[0.1])
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_landscape)

    p = sub.add_parser("project", help="tubular coordinates of a field")
    p.add_argument("--field", required=True)
    p.add_argument("--potential", default="quartic")
    p.add_argument("--out")
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("gaussian", help="Gaussian reference measures and checks")
    _grid_args(p)
    p.add_argument("--measure", choices=["nu1", "nu2", "rho"], default="nu1")
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--kappa", type=float, default=1.0)
    p.add_argument("--samples", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=float, default=0.3)
    p.add_argument("--r", type=float, default=1.0)
    p.add_argument("--check", choices=["sup", "h1", "ratio21", "ratio31"])
    p.add_argument("--out")
    p.set_defaults(func=cmd_gaussian)

    for name, helptext in (("mcmc", "Langevin chains"), ("logz", "thermodynamic integration")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--eps", type=float, required=True)
        p.add_argument("--d", type=int, default=0)
        p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_SCHEDULE["lambda"])
        p.add_argument("--alpha", type=float, default=DEFAULT_SCHEDULE["alpha"])
        p.add_argument("--L-scale", dest="L_scale", type=float, default=DEFAULT_SCHEDULE["L_scale"])
        p.add_argument("--a-scale", dest="a_scale", type=float, default=DEFAULT_SCHEDULE["a_scale"])
        p.add_argument("--potential", default="quartic")
        p.add_argument("--seed", type=int, default=0)
    mcmc, logz = sub.choices["mcmc"], sub.choices["logz"]
    mcmc.add_argument("--delta", type=float)
    mcmc.add_argument("--samples", type=int, default=1000)
    mcmc.add_argument("--method", choices=["mala", "ula"], default="mala")
    mcmc.add_argument("--precondition", choices=["none", "stiffness_shifted"], default="stiffness_shifted")
    mcmc.add_argument("--step", type=float, default=DEFAULT_SCHEDULE["step"])
    mcmc.add_argument("--burn-in", dest="burn_in", type=int, default=DEFAULT_SCHEDULE["burn_in"])
    mcmc.add_argument("--thin", type=int, default=DEFAULT_SCHEDULE["thin"])
    mcmc.add_argument("--out")
    mcmc.set_defaults(func=cmd_mcmc)
    logz.add_argument("--rungs", type=int, default=12)
    logz.add_argument("--samples-per-rung", dest="samples_per_rung", type=int, default=1000)
    logz.set_defaults(func=cmd_logz)

    for name, func in (("experiment", cmd_experiment), ("battery", cmd_battery)):
        p = sub.add_parser(name, help=f"run the {name} from a schedule JSON")
        p.add_argument("--config")
        p.add_argument("--out")
        p.add_argument("--csv")
        p.set_defaults(func=func)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--port", type=int, default=SERVER_PORT)
    p.add_argument("--debug", action="store_true", default=DEBUG)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        return args.func(args)
    except (LabError, ValueError) as exc:
        print(json.dumps(create_error_response(error_code_for(exc), str(exc))), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
