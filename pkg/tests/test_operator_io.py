"""Unit tests for operator and grid-function file formats."""

import os
import shutil
import tempfile
import unittest

import numpy as np

from modules.errors import FormatError, NonSymmetric
from modules.semigroups import GridFunction
from modules.spectral_core import HermitianOperator
from utils.operator_io import (
    format_operator,
    parse_operator_file,
    parse_operator_text,
    read_grid_csv,
    write_grid_csv,
    write_operator_file,
)


class TestOperatorText(unittest.TestCase):
    """parse_operator_text."""

    def test_parse_identity(self):
        """Test a plain 2x2 operator."""
        A = parse_operator_text("2\n1 0\n0 1\n")
        np.testing.assert_array_equal(A.entries, np.eye(2))

    def test_comments_and_blank_lines(self):
        """Test comments and blank lines are skipped."""
        A = parse_operator_text("# projection\n\n1\n  # value follows\n0.5e0\n")
        self.assertEqual(A.entries[0, 0], 0.5)

    def _error(self, text):
        with self.assertRaises(FormatError) as ctx:
            parse_operator_text(text, "op.txt")
        return ctx.exception

    def test_empty_text(self):
        """Test text without content lines is rejected."""
        self.assertIsNone(self._error("# nothing here\n").line)

    def test_header_with_extra_token(self):
        """Test the dimension line holds exactly one token."""
        error = self._error("2 3\n1 0\n0 1\n")
        self.assertEqual((error.line, error.column), (1, 3))

    def test_non_integer_dimension(self):
        """Test a non-integer dimension is reported at its column."""
        error = self._error("  two\n")
        self.assertEqual((error.line, error.column), (1, 3))

    def test_nonpositive_dimension(self):
        """Test the dimension must be positive."""
        self._error("0\n")

    def test_missing_rows(self):
        """Test too few rows point past the last row."""
        error = self._error("2\n1 0\n")
        self.assertEqual(error.line, 3)

    def test_trailing_content(self):
        """Test content after the last row is rejected."""
        error = self._error("1\n1\n2\n")
        self.assertEqual((error.line, error.column), (3, 1))

    def test_row_too_long(self):
        """Test the first surplus entry is located."""
        error = self._error("2\n1 0 5\n0 1\n")
        self.assertEqual((error.line, error.column), (2, 5))

    def test_row_too_short(self):
        """Test a short row points just past its end."""
        error = self._error("2\n1\n0 1\n")
        self.assertEqual((error.line, error.column), (2, 2))

    def test_bad_number(self):
        """Test a non-numeric entry is located and the path is in the message."""
        error = self._error("2\n1 abc\n0 1\n")
        self.assertEqual((error.line, error.column), (2, 3))
        self.assertIn("op.txt:2:3", str(error))

    def test_non_finite_entry(self):
        """Test NaN and infinity are rejected."""
        self._error("1\nnan\n")
        self._error("1\ninf\n")

    def test_asymmetric_matrix(self):
        """Test asymmetry beyond sym_tol raises NonSymmetric."""
        with self.assertRaises(NonSymmetric):
            parse_operator_text("2\n1 2\n0 1\n")


class TestFiles(unittest.TestCase):
    """Operator and grid files on disk."""

    def setUp(self):
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.temp_dir, ignore_errors=True)

    def _write(self, name, text):
        path = os.path.join(self.temp_dir, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
        return path

    def test_operator_file_preserves_entries(self):
        """Test written operators read back exactly."""
        A = HermitianOperator(np.array([[0.1, 1.0 / 3.0], [1.0 / 3.0, -2.5e-7]]))
        path = write_operator_file(A, os.path.join(self.temp_dir, "sub", "a.txt"), comment="thirds")
        np.testing.assert_array_equal(parse_operator_file(path).entries, A.entries)
        self.assertTrue(format_operator(A, "thirds").startswith("# thirds\n2\n"))

    def test_missing_operator_file(self):
        """Test a missing file raises OSError."""
        with self.assertRaises(OSError):
            parse_operator_file(os.path.join(self.temp_dir, "missing.txt"))

    def test_grid_csv(self):
        """Test grid functions are written with a t,v0,... header and read back."""
        g = GridFunction(0.5, np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]))
        path = write_grid_csv(g, os.path.join(self.temp_dir, "orbit.csv"))
        with open(path, "r", encoding="utf-8") as f:
            self.assertEqual(f.readline().strip(), "t,v0,v1")
        back = read_grid_csv(path)
        self.assertEqual(back.step, 0.5)
        np.testing.assert_array_equal(back.samples, g.samples)

    def test_grid_single_sample(self):
        """Test a one-row grid gets the unit step."""
        self.assertEqual(read_grid_csv(self._write("one.csv", "t,v0\n0,7\n")).step, 1.0)

    def test_grid_errors(self):
        """Test malformed grid files raise FormatError."""
        cases = {
            "empty.csv": "",
            "header.csv": "time,v0\n0,1\n",
            "ragged.csv": "t,v0\n0,1\n1,2,3\n",
            "offgrid.csv": "t,v0\n0,1\n1,2\n2.5,3\n",
            "flat.csv": "t,v0\n0,1\n0,2\n",
            "nosamples.csv": "t,v0\n",
            "text.csv": "t,v0\n0,one\n",
        }
        for name, text in cases.items():
            with self.subTest(name=name):
                with self.assertRaises(FormatError):
                    read_grid_csv(self._write(name, text))


if __name__ == '__main__':
    unittest.main()
