import unittest

from aclab.errors import (
    ErrorCode,
    InvalidExponents,
    InvalidGrid,
    InvalidParameters,
    NoConvergence,
    create_error_response,
    detect_error_code,
    error_code_for,
)


class ErrorTests(unittest.TestCase):
    def test_detect_factorization_failure(self):
        self.assertEqual(detect_error_code("2-th leading minor not positive definite"), ErrorCode.FACTORIZATION_FAILED)

    def test_detect_no_convergence(self):
        self.assertEqual(detect_error_code("ARPACK error -1: No convergence"), ErrorCode.NO_CONVERGENCE)

    def test_unknown_message_is_internal(self):
        self.assertEqual(detect_error_code(""), ErrorCode.INTERNAL_ERROR)
        self.assertEqual(detect_error_code("something odd"), ErrorCode.INTERNAL_ERROR)

    def test_lab_errors_carry_codes(self):
        self.assertEqual(error_code_for(InvalidGrid("n must be >= 2")), ErrorCode.INVALID_GRID)
        self.assertEqual(error_code_for(NoConvergence("stuck")), ErrorCode.NO_CONVERGENCE)
        self.assertTrue(issubclass(InvalidExponents, ValueError))
        self.assertEqual(InvalidParameters("x", code="CUSTOM").code, "CUSTOM")

    def test_create_error_response(self):
        result = create_error_response(ErrorCode.INVALID_GRID, "Invalid grid")
        self.assertFalse(result["success"])
        self.assertEqual(result["error"]["code"], ErrorCode.INVALID_GRID)
        self.assertEqual(NoConvergence("stuck").to_response()["error"]["message"], "stuck")


if __name__ == "__main__":
    unittest.main()
