import json
import math
import os
import tempfile
import unittest
from unittest import mock

import numpy as np

from aclab.config import SLOW_TESTS
from aclab.errors import ChainDivergence, InvalidExponents, InvalidParameters
from aclab.services.energy import ProbeResult
from aclab.services.experiments import (
    LANDSCAPE_FIELDS,
    SLICE_DIVISIONS,
    ExperimentSchedule,
    _partition_rows,
    _rate_rows,
    battery_cutoff_scale,
    fit_rate,
    gap_nonincreasing,
    mesh_divisions,
    nonincreasing_up_to_overlap,
    run_main_theorem,
    run_verification_battery,
    validate_schedule,
)
from aclab.services.gaussian import log_partition_ratio_21
from aclab.services.sampler import LogZEstimate, TailEstimate, partition_floor
from aclab.services.scalar_theory import cutoff_window, make_quartic_potential, solve_profile


def tiny_schedule(**overrides) -> ExperimentSchedule:
    values = {
        "d": 0, "lambda": 0.3, "alpha": 0.2, "lambda1": 0.15, "delta": 0.3,
        "eps_list": [0.5, 0.3], "samples": 100, "burn_in": 50, "trials": 2,
    }
    values.update(overrides)
    return ExperimentSchedule.from_dict(values)


class ScheduleTests(unittest.TestCase):
    def test_admissible_exponents(self):
        checked = validate_schedule(tiny_schedule(d=1))
        self.assertEqual(len(checked.rows), 2)
        self.assertEqual(len(checked.grids), 2)
        self.assertAlmostEqual(checked.n_exponent_expected, -0.3 - 2 * 0.2)
        for row, grid in zip(checked.rows, checked.grids):
            self.assertEqual(row["N"], grid.N)
            self.assertGreaterEqual(row["n"], 2)

    def test_rejects_too_fast_mesh(self):
        with self.assertRaises(InvalidExponents) as ctx:
            validate_schedule(tiny_schedule(d=1, **{"lambda": 0.5}, alpha=0.3))
        self.assertIn("lambda + (d+1)*alpha < 1 violated", str(ctx.exception))

    def test_rejects_cutoff_exponent_at_cap(self):
        with self.assertRaises(InvalidExponents) as ctx:
            validate_schedule(tiny_schedule(lambda1=0.3))
        self.assertIn("0 < lambda1 < min(2*alpha, lambda) violated", str(ctx.exception))

    def test_rejects_bad_eps_and_method(self):
        with self.assertRaises(InvalidParameters):
            validate_schedule(tiny_schedule(eps_list=[1.5]))
        with self.assertRaises(InvalidParameters):
            validate_schedule(tiny_schedule(method="bridge"))

    def test_unknown_keys_are_rejected(self):
        with self.assertRaises(InvalidParameters):
            ExperimentSchedule.from_dict({"gamma": 1.0})

    def test_json_roundtrip(self):
        schedule = tiny_schedule()
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "schedule.json")
            with open(path, "w") as handle:
                json.dump(schedule.to_dict(), handle)
            self.assertEqual(ExperimentSchedule.from_json(path), schedule)
        self.assertIn("lambda", schedule.to_dict())
        with self.assertRaises(InvalidParameters):
            ExperimentSchedule.from_json("/no/such/schedule.json")

    def test_auxiliary_grids_are_one_dimensional(self):
        checked = validate_schedule(ExperimentSchedule())
        self.assertEqual(len(checked.rate_grids), 4)
        self.assertEqual(len(checked.logz_grids), 3)
        self.assertTrue(all(g.d == 0 for g in checked.rate_grids + checked.logz_grids))
        divisions = [g.n for g in checked.rate_grids]
        self.assertEqual(divisions, sorted(set(divisions)))
        self.assertIn("rate_rows", checked.to_dict())
        self.assertIn("logz_rows", checked.to_dict())

    def test_rejects_bad_auxiliary_keys(self):
        for overrides in (
            {"rate_eps": [0.5, 0.5]},
            {"logz_eps": []},
            {"cutoff_scale": 0.0},
            {"rate_a_scale": -1.0},
            {"logz_rungs": 3},
        ):
            with self.assertRaises(InvalidParameters, msg=str(overrides)):
                validate_schedule(tiny_schedule(**overrides))

    def test_mesh_divisions(self):
        self.assertEqual(mesh_divisions(0.26), 4)
        self.assertEqual(mesh_divisions(0.9), 2)


class RateTests(unittest.TestCase):
    def test_fit_rate_recovers_power(self):
        eps = np.array([0.5, 0.25, 0.125])
        self.assertAlmostEqual(fit_rate(eps, eps**2), 2.0)
        self.assertAlmostEqual(fit_rate(eps, 3.0 * eps**-0.5), -0.5)

    def test_fit_rate_needs_distinct_positive_data(self):
        with self.assertRaises(InvalidParameters):
            fit_rate([0.5, 0.5], [1.0, 2.0])
        with self.assertRaises(InvalidParameters):
            fit_rate([0.5, 0.25], [1.0, 0.0])

    def test_gap_trend_tolerates_noise(self):
        target = -1.0
        shrinking = [(0.5, -0.80, 0.01), (0.3, -0.85, 0.01), (0.2, -0.90, 0.01)]
        self.assertTrue(gap_nonincreasing(shrinking, target))
        noisy = [(0.5, -0.80, 0.02), (0.3, -0.78, 0.02)]
        self.assertTrue(gap_nonincreasing(noisy, target))
        growing = [(0.3, -0.60, 0.01), (0.5, -0.80, 0.01)]
        self.assertFalse(gap_nonincreasing(growing, target))

    def test_cutoff_rates_on_default_schedule(self):
        schedule = ExperimentSchedule()
        checked = validate_schedule(schedule)
        rows = {r["check"]: r for r in _rate_rows(schedule, checked, solve_profile(make_quartic_potential()))}
        self.assertEqual(set(rows), {"cutoff_rate_l2", "cutoff_rate_h1", "cutoff_tangent_rate"})
        alpha = fit_rate(schedule.rate_eps, [g.a for g in checked.rate_grids])
        self.assertGreater(alpha, 0.0)
        self.assertAlmostEqual(rows["cutoff_rate_l2"]["bound"], 2.0 * alpha - schedule.lambda1 / 2.0)
        self.assertAlmostEqual(rows["cutoff_rate_h1"]["bound"], alpha - schedule.lambda1 / 2.0)
        for name, row in rows.items():
            self.assertTrue(row["pass"], msg=f"{name}: {row}")
        self.assertLess(abs(rows["cutoff_rate_l2"]["value"] - rows["cutoff_rate_l2"]["bound"]), 0.15)
        self.assertLess(abs(rows["cutoff_rate_h1"]["value"] - rows["cutoff_rate_h1"]["bound"]), 0.15)

    def test_monotonicity_up_to_overlap(self):
        rows = [
            {"eps": 0.5, "eps_log_p": -0.10, "ci_low": math.exp(-0.3), "ci_high": math.exp(-0.1)},
            {"eps": 0.25, "eps_log_p": -0.20, "ci_low": math.exp(-1.0), "ci_high": math.exp(-0.6)},
        ]
        self.assertTrue(nonincreasing_up_to_overlap(rows))
        overlapping = [dict(rows[0]), dict(rows[1], eps_log_p=-0.09)]
        self.assertTrue(nonincreasing_up_to_overlap(overlapping))
        rising = [dict(rows[0]), {"eps": 0.25, "eps_log_p": -0.01, "ci_low": 0.99, "ci_high": 1.0}]
        self.assertFalse(nonincreasing_up_to_overlap(rising))


class MainTheoremTests(unittest.TestCase):
    def setUp(self):
        self.probe = ProbeResult(1.0, None, 0.09, 0.3, (0.09, 0.1))

    def test_rows_and_verdict(self):
        estimate = TailEstimate(0.2, 0.1, 0.3, -0.2, "direct")
        with mock.patch("aclab.services.experiments.landscape_lower_probe", return_value=self.probe), \
                mock.patch("aclab.services.experiments.estimate_tail", return_value=estimate) as tail:
            report = run_main_theorem(tiny_schedule())
        self.assertEqual(tail.call_count, 2)
        self.assertEqual([r["eps"] for r in report.rows], [0.5, 0.3])
        for row in report.rows:
            self.assertAlmostEqual(row["c0_delta_sq"], -0.09)
            self.assertTrue(row["pass"])
        self.assertTrue(report.passed)
        self.assertEqual(report.verdict, "pass")
        self.assertTrue(all(r["informative"] for r in report.rows))
        self.assertEqual(report.provenance["probe"]["c0_estimate"], 1.0)
        self.assertEqual(len(report.provenance["seeds"]), 2)

    def test_failed_row_is_recorded(self):
        def flaky(config, *args, **kwargs):
            if config.eps < 0.4:
                raise ChainDivergence("ULA blew up")
            return TailEstimate(0.2, 0.1, 0.3, -0.2, "direct")

        with mock.patch("aclab.services.experiments.landscape_lower_probe", return_value=self.probe), \
                mock.patch("aclab.services.experiments.estimate_tail", side_effect=flaky):
            report = run_main_theorem(tiny_schedule())
        self.assertFalse(report.passed)
        self.assertTrue(report.rows[1]["error"].startswith("CHAIN_DIVERGED"))

    def test_zero_delta_is_uninformative(self):
        estimate = TailEstimate(1.0, 1.0, 1.0, 0.0, "direct")
        with mock.patch("aclab.services.experiments.landscape_lower_probe") as probe, \
                mock.patch("aclab.services.experiments.estimate_tail", return_value=estimate):
            report = run_main_theorem(tiny_schedule(delta=0.0))
        probe.assert_not_called()
        self.assertFalse(report.passed)
        self.assertEqual(report.verdict, "uninformative")
        self.assertEqual(report.to_dict()["verdict"], "uninformative")
        self.assertFalse(any(r["informative"] for r in report.rows))
        self.assertIsNone(report.provenance["probe"])

    def test_unit_probability_at_smallest_eps_is_uninformative(self):
        def by_eps(config, *args, **kwargs):
            if config.eps < 0.4:
                return TailEstimate(1.0, 0.9, 1.0, 0.0, "direct")
            return TailEstimate(0.2, 0.1, 0.3, -0.2, "direct")

        with mock.patch("aclab.services.experiments.landscape_lower_probe", return_value=self.probe), \
                mock.patch("aclab.services.experiments.estimate_tail", side_effect=by_eps):
            with self.assertLogs("aclab.services.experiments", level="WARNING"):
                report = run_main_theorem(tiny_schedule())
        self.assertEqual([r["informative"] for r in report.rows], [True, False])
        self.assertEqual(report.verdict, "uninformative")
        self.assertFalse(report.passed)
        self.assertEqual(report.provenance["verdict"], "uninformative")

    def test_small_run_end_to_end(self):
        schedule = tiny_schedule(delta=0.1)
        report = run_main_theorem(schedule)
        self.assertEqual([r["eps"] for r in report.rows], [0.5, 0.3])
        c0 = report.provenance["probe"]["c0_estimate"]
        self.assertGreater(c0, 0.0)
        for row in report.rows:
            self.assertIsNone(row.get("error"))
            self.assertLessEqual(row["ci_low"], row["p_hat"])
            self.assertLessEqual(row["p_hat"], row["ci_high"])
            self.assertAlmostEqual(row["c0_delta_sq"], -c0 * 0.01)
            if not row["upper_bound_only"]:
                self.assertAlmostEqual(row["eps_log_p"], row["eps"] * math.log(row["p_hat"]))
            self.assertEqual(row["pass"], row["eps_log_p"] <= row["c0_delta_sq"] + schedule.slack)
            self.assertEqual(row["informative"], row["p_hat"] < 1.0)
        smallest = report.rows[-1]
        if not smallest["informative"]:
            self.assertEqual(report.verdict, "uninformative")
            self.assertFalse(report.passed)
        else:
            self.assertEqual(report.verdict, "pass" if report.passed else "fail")
            self.assertEqual(report.passed, smallest["pass"] and nonincreasing_up_to_overlap(report.rows))

    def test_certified_bound_column(self):
        estimate = TailEstimate(0.2, 0.1, 0.3, -0.2, "direct")
        with mock.patch("aclab.services.experiments.landscape_lower_probe", return_value=self.probe), \
                mock.patch("aclab.services.experiments.estimate_tail", return_value=estimate), \
                mock.patch("aclab.services.experiments.estimate_log_Z", return_value=-0.5) as log_z:
            report = run_main_theorem(tiny_schedule(certify=True))
        self.assertEqual(log_z.call_count, 2)
        grids = validate_schedule(tiny_schedule()).grids
        tension = solve_profile(make_quartic_potential()).surface_tension
        for row, grid in zip(report.rows, grids):
            eps = row["eps"]
            expected = eps * log_partition_ratio_21(grid, eps) - tension - 0.09 - eps * 0.09 + 0.5
            self.assertAlmostEqual(row["chain_bound"], expected)


class BatteryTests(unittest.TestCase):
    def test_hard_failures_are_listed(self):
        rows = [
            {"check": "ratio21", "eps": 0.5, "value": 1.0, "bound": 1.0, "pass": False, "hard": True, "detail": ""},
            {"check": "ratio31", "eps": 0.5, "value": 1.0, "bound": 2.0, "pass": True, "hard": False, "detail": ""},
        ]
        with mock.patch("aclab.services.experiments._battery_rows_for_eps", return_value=rows), \
                mock.patch("aclab.services.experiments._rate_rows", return_value=[]), \
                mock.patch("aclab.services.experiments._slice_rows", return_value=[]), \
                mock.patch("aclab.services.experiments._partition_rows", return_value=[]):
            report = run_verification_battery(tiny_schedule(eps_list=[0.5]))
        self.assertFalse(report.passed)
        self.assertEqual(report.hard_failures, ["ratio21@0.5"])
        checks = [r["check"] for r in report.rows]
        self.assertEqual(checks[:2], ["norm_identity", "tangent_integral"])
        self.assertTrue(report.rows[0]["pass"])
        self.assertTrue(report.rows[1]["pass"])

    def test_partition_rows_check_floor_and_trend(self):
        schedule = ExperimentSchedule()
        checked = validate_schedule(schedule)
        potential = make_quartic_potential()
        profile = solve_profile(potential)
        tension = profile.surface_tension
        values = {0.5: -0.80, 0.3: -0.85, 0.2: -0.90}

        def fake(grid, potential, eps, *args, **kwargs):
            return LogZEstimate(values[eps], 0.01, (0.0, 1.0), (0.0, 0.0))

        with mock.patch("aclab.services.experiments.log_partition_estimate", side_effect=fake) as estimate:
            rows = _partition_rows(schedule, checked, potential, profile, 0)
        self.assertEqual(estimate.call_count, 3)
        self.assertEqual([r["check"] for r in rows], ["partition_floor"] * 3 + ["partition_trend"])
        self.assertTrue(all(r["pass"] for r in rows))
        self.assertAlmostEqual(rows[0]["bound"], partition_floor(potential))
        self.assertAlmostEqual(rows[-1]["value"], abs(-0.90 + tension))

        values[0.2] = -tension - 1.0
        with mock.patch("aclab.services.experiments.log_partition_estimate", side_effect=fake):
            rows = _partition_rows(schedule, checked, potential, profile, 0)
        self.assertFalse(rows[2]["pass"])
        self.assertFalse(rows[-1]["pass"])

    def test_cutoff_carrier_fits_battery_grids(self):
        schedule = ExperimentSchedule()
        checked = validate_schedule(schedule)
        for eps, grid in zip(schedule.eps_list, checked.grids):
            lo, hi = cutoff_window(eps, schedule.lambda1, grid, battery_cutoff_scale(schedule, grid, eps))
            self.assertLess(lo, 0.0)
            self.assertGreater(hi, 0.0)

    @unittest.skipUnless(SLOW_TESTS, "set ACLAB_SLOW_TESTS=1 for thermodynamic integration runs")
    def test_partition_function_on_default_grids(self):
        schedule = ExperimentSchedule()
        checked = validate_schedule(schedule)
        potential = make_quartic_potential()
        rows = _partition_rows(schedule, checked, potential, solve_profile(potential), schedule.seed)
        for row in rows:
            self.assertTrue(row["pass"], msg=str(row))

    @unittest.skipUnless(SLOW_TESTS, "set ACLAB_SLOW_TESTS=1 for a full battery run")
    def test_battery_on_small_schedule(self):
        report = run_verification_battery(tiny_schedule(d=1, samples=500))
        self.assertEqual(report.hard_failures, [])
        checks = {r["check"] for r in report.rows}
        expected = {
            "ratio21", "ratio31", "energy_gradient_fd", "fermi_gradient_fd", "slice_distance",
            "landscape_upper", "landscape_upper_cutoff", "cutoff_rate_l2", "cutoff_rate_h1",
            "cutoff_tangent_rate", "partition_floor", "partition_trend",
        }
        self.assertTrue(expected <= checks)
        slices = [r for r in report.rows if r["check"] == "slice_distance"]
        self.assertEqual(len(slices), len(SLICE_DIVISIONS))
        landscape = next(r for r in report.rows if r["check"] == "landscape_upper")
        self.assertTrue(landscape["detail"].endswith(f"/{LANDSCAPE_FIELDS} violations"))


if __name__ == "__main__":
    unittest.main()
