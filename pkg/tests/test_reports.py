import csv
import json
import math
import os
import tempfile
import time
import unittest

import numpy as np

from aclab.services.reports import RunReport, provenance, write_csv, write_json


class ReportTests(unittest.TestCase):
    def test_provenance_records_versions(self):
        block = provenance({"d": 1}, [3, 4], time.perf_counter(), {"probe": None})
        self.assertEqual(block["seeds"], [3, 4])
        self.assertEqual(block["numpy"], np.__version__)
        self.assertIn("notes", block)
        self.assertIsNone(block["probe"])

    def test_verdict_defaults_to_pass_or_fail(self):
        self.assertEqual(RunReport([], {}, True).to_dict()["verdict"], "pass")
        self.assertEqual(RunReport([], {}, False).to_dict()["verdict"], "fail")
        self.assertEqual(RunReport([], {}, False, verdict="uninformative").to_dict()["verdict"], "uninformative")

    def test_json_replaces_non_finite_values(self):
        report = RunReport([{"eps": 0.5, "value": math.inf, "ok": np.bool_(True)}], {}, True)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(report, os.path.join(tmp, "nested", "report.json"))
            payload = json.loads(path.read_text())
        self.assertIsNone(payload["rows"][0]["value"])
        self.assertTrue(payload["rows"][0]["ok"])

    def test_csv_keeps_column_order_and_extra_keys(self):
        rows = [
            {"check": "ratio21", "eps": 0.5, "value": 0.1, "pass": True, "extra": 1},
            {"check": "ratio31", "eps": None, "value": float("nan"), "pass": False},
        ]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_csv(rows, ["check", "eps", "value", "pass"], os.path.join(tmp, "rows.csv"))
            with open(path) as handle:
                reader = csv.DictReader(handle)
                self.assertEqual(reader.fieldnames, ["check", "eps", "value", "pass", "extra"])
                parsed = list(reader)
        self.assertEqual(parsed[0]["pass"], "true")
        self.assertEqual(parsed[1]["pass"], "false")
        self.assertEqual(parsed[1]["eps"], "")
        self.assertEqual(float(parsed[0]["value"]), 0.1)


if __name__ == "__main__":
    unittest.main()
