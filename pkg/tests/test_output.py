"""
Unit tests for CSV/JSON emission and atomic writes.
"""

import io
import json
import os
import tempfile
import unittest
from pathlib import Path

import numpy as np
import pandas as pd

from sphere_gap.models import SweepRow, SweepTable, TwoSphereConfig
from sphere_gap.output import (
    FORMAT_VERSION,
    SWEEP_COLUMNS,
    fit_path_for,
    grid_csv,
    sweep_csv,
    system_document,
    to_json,
    write_atomic,
)
from sphere_gap.potential import create_system


class TestJson(unittest.TestCase):
    """Test to_json()."""

    def test_format_version_comes_first(self):
        """format_version is stamped as the first key."""
        document = json.loads(to_json({"value": 1.5}))
        self.assertEqual(list(document)[0], "format_version")
        self.assertEqual(document["format_version"], FORMAT_VERSION)

    def test_non_finite_values_become_null(self):
        """NaN and infinities are emitted as null."""
        document = json.loads(to_json({"a": float("nan"), "b": [float("inf"), 2.0]}))
        self.assertIsNone(document["a"])
        self.assertEqual(document["b"], [None, 2.0])

    def test_floats_round_trip(self):
        """JSON floats keep every digit."""
        value = 0.1 + 0.2
        self.assertEqual(json.loads(to_json({"x": value}))["x"], value)


class TestSweepCsv(unittest.TestCase):
    """Test sweep_csv()."""

    def setUp(self):
        self.table = SweepTable(
            n=3,
            r1=1.0,
            r2=2.0,
            field_label="linear[1,0,0]",
            rows=[
                SweepRow(eps=1e-3, delta=1e-3, d=2.0, delta_u=0.123456789012345678, ladder1_length=40),
                SweepRow(eps=1e-11, delta=1e-11, d=2.0, failed=True, error="PrecisionError: too small"),
            ],
        )

    def test_column_order(self):
        """The header follows SWEEP_COLUMNS."""
        header = sweep_csv(self.table).splitlines()[0]
        self.assertEqual(header.split(","), SWEEP_COLUMNS)

    def test_values_round_trip(self):
        """17 significant digits survive a read back."""
        frame = pd.read_csv(io.StringIO(sweep_csv(self.table)), float_precision="round_trip")
        self.assertEqual(frame["delta_u"][0], 0.123456789012345678)
        self.assertEqual(list(frame["failed"]), [0, 1])
        self.assertTrue(pd.isna(frame["delta_u"][1]))
        self.assertEqual(frame["error"][1], "PrecisionError: too small")

    def test_deterministic(self):
        """Identical tables give identical bytes."""
        self.assertEqual(sweep_csv(self.table), sweep_csv(self.table))


class TestGridCsv(unittest.TestCase):
    """Test grid_csv()."""

    def test_columns(self):
        """x1..xn, h, grad1..gradn."""
        points = np.array([[0.0, 1.0, 2.0]])
        text = grid_csv(points, np.array([0.5]), np.array([[1.0, 2.0, 3.0]]))
        self.assertEqual(text.splitlines()[0], "x1,x2,x3,h,grad1,grad2,grad3")


class TestSystemDocument(unittest.TestCase):
    """Test system_document()."""

    def test_mirror_symmetric_ladders(self):
        """Equal radii: family 2 mirrors family 1."""
        system = create_system(TwoSphereConfig(3, 1.0, 1.0, 1e-2))
        document = json.loads(to_json(system_document(system)))
        family1 = [c for c in document["charges"] if c["family"] == 1]
        family2 = [c for c in document["charges"] if c["family"] == 2]
        self.assertEqual(len(family1), len(family2))
        for a, b in zip(family1, family2):
            self.assertEqual(a["x"], -b["x"])
            self.assertEqual(a["q"], b["q"])
            self.assertEqual(a["sign"], b["sign"])
        self.assertEqual(document["Q1"], document["Q2"])
        self.assertEqual(set(document), {"format_version", "config", "charges", "Q1", "Q2", "M", "omega_n", "tail_bounds"})


class TestAtomicWrite(unittest.TestCase):
    """Test write_atomic() and fit_path_for()."""

    def test_write_leaves_no_temp_files(self):
        """Only the target file remains after a write."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "out" / "table.csv"
            write_atomic(path, "a,b\n1,2\n")
            self.assertEqual(path.read_text(), "a,b\n1,2\n")
            self.assertEqual(os.listdir(path.parent), ["table.csv"])

    def test_failed_write_keeps_old_file(self):
        """A failing write leaves the previous content untouched."""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "table.csv"
            path.write_text("old\n")
            with self.assertRaises(TypeError):
                write_atomic(path, None)
            self.assertEqual(path.read_text(), "old\n")
            self.assertEqual(os.listdir(tmp), ["table.csv"])

    def test_fit_path(self):
        """sweep.csv pairs with sweep.fit.json."""
        self.assertEqual(fit_path_for(Path("/tmp/run/sweep.csv")), Path("/tmp/run/sweep.fit.json"))


if __name__ == "__main__":
    unittest.main()
