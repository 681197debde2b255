import time
import unittest

from aclab.config import detect_potential
from aclab.routes.checks import _status_for_error
from aclab.services.energy import free_energy
from aclab.services.mesh import assemble, build_grid
from aclab.services.scalar_theory import make_quartic_potential


class SmokeTests(unittest.TestCase):
    def test_potential_detection_smoke(self):
        self.assertEqual(detect_potential("quartic"), "quartic")
        self.assertEqual(detect_potential("SEXTIC"), "sextic")
        self.assertIsNone(detect_potential("https://example.com"))

    def test_error_status_mapping_smoke(self):
        self.assertEqual(_status_for_error("AMBIGUOUS_PROJECTION"), 422)
        self.assertEqual(_status_for_error("IDENTITY_VIOLATED"), 500)
        self.assertEqual(_status_for_error("SOMETHING_ELSE"), 400)

    def test_basic_perf_smoke(self):
        potential = make_quartic_potential()
        field = assemble(build_grid(1, 2.0, 4)).ramp_field
        free_energy(field, potential)
        start = time.perf_counter()
        for _ in range(200):
            free_energy(field, potential)
        elapsed_ms = (time.perf_counter() - start) * 1000
        self.assertLess(elapsed_ms, 2000)


if __name__ == "__main__":
    unittest.main()
