import unittest

from aclab.config import (
    BATTERY_COLUMNS,
    CLOSED_FORM_POTENTIALS,
    DEFAULT_SCHEDULE,
    MAIN_THEOREM_COLUMNS,
    POTENTIAL_CONFIG,
    POTENTIALS,
    detect_potential,
)
from aclab.services.experiments import ExperimentSchedule


class ConfigTests(unittest.TestCase):
    def test_potential_registry_contains_core(self):
        self.assertIn("quartic", POTENTIAL_CONFIG)
        self.assertIn("sextic", POTENTIAL_CONFIG)
        self.assertEqual(POTENTIALS, list(POTENTIAL_CONFIG))

    def test_detect_potential(self):
        self.assertEqual(detect_potential(" Quartic "), "quartic")
        self.assertIsNone(detect_potential("octic"))
        self.assertIsNone(detect_potential(""))

    def test_derived_lists(self):
        self.assertEqual(CLOSED_FORM_POTENTIALS, ["quartic"])

    def test_default_schedule_is_loadable(self):
        schedule = ExperimentSchedule.from_dict(DEFAULT_SCHEDULE)
        self.assertEqual(schedule.to_dict(), DEFAULT_SCHEDULE)

    def test_report_columns(self):
        self.assertEqual(MAIN_THEOREM_COLUMNS[0], "eps")
        self.assertIn("pass", MAIN_THEOREM_COLUMNS)
        self.assertEqual(BATTERY_COLUMNS[:2], ["check", "eps"])


if __name__ == "__main__":
    unittest.main()
