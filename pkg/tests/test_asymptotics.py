"""
Tests for rate predictions, sweeps, rate fits and ladder diagnostics.

The sweep tests reproduce the blow-up rates and the radius law at desk scale.
"""

import math
import unittest

import numpy as np

from sphere_gap.asymptotics import (
    _settles_from_above,
    compare_models,
    diagnostics,
    fit_rate,
    model_for,
    predicted_gap,
    predicted_gradient_lower,
    run_sweep,
)
from sphere_gap.errors import InvalidSweep, ModelMismatch
from sphere_gap.fields import CustomField
from sphere_gap.models import RateKind, RateModel, TwoSphereConfig
from sphere_gap.potential import compute_gap, create_system

PLANAR_EPS = [1e-4, 3e-5, 1e-5, 3e-6, 1e-6, 3e-7, 1e-7]


def harmonic_radius(r1: float, r2: float) -> float:
    return r1 * r2 / (r1 + r2)


class TestPredictions(unittest.TestCase):
    """Test model_for() and the rate formulas."""

    def test_model_table(self):
        """Models are fixed by (n, kind)."""
        gap, grad = RateKind.POTENTIAL_GAP, RateKind.GRADIENT_LOWER
        self.assertEqual(model_for(2, gap), RateModel.SQRT_EPS)
        self.assertEqual(model_for(3, gap), RateModel.INV_LOG_EPS)
        self.assertEqual(model_for(4, gap), RateModel.CONSTANT)
        self.assertEqual(model_for(7, gap), RateModel.CONSTANT)
        self.assertEqual(model_for(2, grad), RateModel.INV_SQRT_EPS)
        self.assertEqual(model_for(3, grad), RateModel.INV_EPS_LOG_EPS)
        self.assertEqual(model_for(5, grad), RateModel.INV_EPS)

    def test_planar_gap_formula(self):
        """n = 2, r1 = 1, r2 = 2, a1 = 1, eps = 1e-6: 3.2660e-3 with a known constant."""
        prediction = predicted_gap(2, 1.0, 2.0, 1e-6, 1.0)
        self.assertAlmostEqual(prediction.formula_value, 3.2660e-3, delta=1e-7)
        self.assertFalse(prediction.constant_unknown)

    def test_higher_dimensions_flag_unknown_constant(self):
        """n >= 3 formulas are known up to a constant."""
        three = predicted_gap(3, 1.0, 1.0, 1e-4, 2.0, log_convention="eps")
        self.assertAlmostEqual(three.formula_value, 2.0 * 0.5 / abs(math.log(1e-4)), places=14)
        self.assertTrue(three.constant_unknown)
        four = predicted_gap(4, 1.0, 3.0, 1e-4, 1.0)
        self.assertAlmostEqual(four.formula_value, 0.75, places=14)

    def test_zero_slope(self):
        """a1 = 0 predicts no gap in every dimension."""
        for n in (2, 3, 4):
            self.assertEqual(predicted_gap(n, 1.0, 2.0, 1e-3, 0.0).formula_value, 0.0)

    def test_gradient_prediction(self):
        """Gradient prediction is the gap prediction over 2 eps."""
        gap = predicted_gap(3, 1.0, 2.0, 1e-3, 1.0, "delta")
        grad = predicted_gradient_lower(3, 1.0, 2.0, 1e-3, 1.0, "delta")
        self.assertAlmostEqual(grad.formula_value, gap.formula_value / 2e-3, places=10)
        self.assertEqual(grad.model, RateModel.INV_EPS_LOG_EPS)


class TestRunSweep(unittest.TestCase):
    """Test run_sweep() bookkeeping."""

    def test_three_dimensional_rows(self):
        """Five rows with a positive, decreasing gap."""
        table = run_sweep(TwoSphereConfig(3, 1.0, 1.0, 1e-2), "x1", [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
        self.assertEqual(len(table.rows), 5)
        gaps = [row.delta_u for row in table.rows]
        self.assertTrue(all(g > 0.0 for g in gaps))
        self.assertTrue(all(a > b for a, b in zip(gaps, gaps[1:])))
        self.assertTrue(all(row.ladder1_length > 0 for row in table.rows))

    def test_planar_rows_follow_formula(self):
        """n = 2: gap within 2% of 4 sqrt(r1 r2/(r1+r2)) sqrt(eps) for eps <= 1e-4."""
        table = run_sweep(TwoSphereConfig(2, 1.0, 2.0, 1e-4), "x1", [1e-4, 1e-5, 1e-6])
        for row in table.rows:
            expected = 4.0 * math.sqrt(harmonic_radius(1.0, 2.0) * row.eps)
            self.assertAlmostEqual(row.delta_u / expected, 1.0, delta=2e-2)

    def test_invalid_eps_lists(self):
        """Empty, duplicated, unordered or non-positive lists are rejected."""
        cfg = TwoSphereConfig(3, 1.0, 1.0, 1e-2)
        for eps_list in ([], [1e-2, 1e-2], [1e-3, 1e-2], [1e-2, -1e-3]):
            with self.subTest(eps_list=eps_list):
                with self.assertRaises(InvalidSweep):
                    run_sweep(cfg, "x1", eps_list)

    def test_failed_row_is_recorded(self):
        """A row below the precision floor is flagged, not raised."""
        table = run_sweep(TwoSphereConfig(3, 1.0, 1.0, 1e-2), "x1", [1e-2, 1e-11])
        self.assertFalse(table.rows[0].failed)
        self.assertTrue(table.rows[1].failed)
        self.assertIn("PrecisionError", table.rows[1].error)
        self.assertEqual(len(table.usable_rows), 1)

    def test_parallel_rows_match_serial(self):
        """Process-pool sweeps return the same rows in input order."""
        cfg = TwoSphereConfig(3, 1.0, 2.0, 1e-2)
        eps_list = [1e-2, 1e-3, 1e-4]
        serial = run_sweep(cfg, "x1", eps_list)
        parallel = run_sweep(cfg, "x1", eps_list, workers=2)
        self.assertEqual([r.delta_u for r in serial.rows], [r.delta_u for r in parallel.rows])

    def test_unpicklable_field_runs_serially(self):
        """A lambda field cannot reach worker processes; the sweep still completes."""
        cfg = TwoSphereConfig(3, 1.0, 2.0, 1e-2)
        field = CustomField(lambda x: x[0], 3)
        with self.assertLogs("sphere_gap.asymptotics", level="WARNING") as logs:
            table = run_sweep(cfg, field, [1e-2, 1e-3], workers=2)
        self.assertTrue(any("serially" in line for line in logs.output))
        self.assertFalse(any(row.failed for row in table.rows))
        reference = run_sweep(cfg, "x1", [1e-2, 1e-3])
        for row, expected in zip(table.rows, reference.rows):
            self.assertAlmostEqual(row.delta_u, expected.delta_u, places=13)


class TestPlanarRate(unittest.TestCase):
    """The planar gap grows like sqrt(eps) with the exact coefficient."""

    def test_fitted_coefficient(self):
        """Fitted beta matches 4 sqrt(r1 r2/(r1+r2)) within 1%."""
        for r1, r2 in ((1.0, 1.0), (1.0, 2.0), (1.0, 5.0)):
            with self.subTest(r1=r1, r2=r2):
                table = run_sweep(TwoSphereConfig(2, r1, r2, PLANAR_EPS[0]), "x1", PLANAR_EPS)
                fit = fit_rate(table, RateModel.SQRT_EPS)
                expected = 4.0 * math.sqrt(harmonic_radius(r1, r2))
                self.assertAlmostEqual(fit.coefficient / expected, 1.0, delta=1e-2)
                self.assertEqual(fit.rows_used, len(PLANAR_EPS))

    def test_gradient_coefficient(self):
        """Lower bound grows like 2 sqrt(r1 r2/(r1+r2)) / sqrt(eps)."""
        table = run_sweep(TwoSphereConfig(2, 1.0, 1.0, PLANAR_EPS[0]), "x1", PLANAR_EPS)
        fit = fit_rate(table, RateModel.INV_SQRT_EPS)
        self.assertAlmostEqual(fit.coefficient / (2.0 * math.sqrt(0.5)), 1.0, delta=1e-2)

    def test_wrong_model_mismatch(self):
        """A constant model cannot describe sqrt(eps) growth."""
        table = run_sweep(TwoSphereConfig(2, 1.0, 1.0, PLANAR_EPS[0]), "x1", PLANAR_EPS)
        with self.assertRaises(ModelMismatch):
            fit_rate(table, RateModel.CONSTANT)
        fit = fit_rate(table, RateModel.CONSTANT, raise_on_mismatch=False)
        self.assertGreater(fit.residual, 0.2)

    def test_too_few_rows(self):
        """Fits need at least four usable rows."""
        table = run_sweep(TwoSphereConfig(2, 1.0, 1.0, 1e-4), "x1", [1e-4, 1e-5, 1e-6])
        with self.assertRaises(InvalidSweep):
            fit_rate(table, RateModel.SQRT_EPS)


class TestThreeDimensionalRate(unittest.TestCase):
    """n = 3: the gap decays like 1/|log delta|."""

    @classmethod
    def setUpClass(cls):
        cls.table = run_sweep(
            TwoSphereConfig(3, 1.0, 1.0, 1e-3), "x1", [1e-3, 1e-4, 1e-5, 1e-6, 1e-7]
        )

    def test_normalised_gap_band(self):
        """gap |log delta| (r1+r2)/(r1 r2) stays within a factor 2."""
        values = [
            row.delta_u * row.log_delta / harmonic_radius(1.0, 1.0) for row in self.table.rows
        ]
        self.assertLessEqual(max(values) / min(values), 2.0)

    def test_log_model_wins(self):
        """inv_log_eps fits better than sqrt_eps and constant."""
        residuals = compare_models(self.table)
        best = residuals[RateModel.INV_LOG_EPS]
        self.assertLess(best, residuals[RateModel.SQRT_EPS])
        self.assertLess(best, residuals[RateModel.CONSTANT])


class TestHigherDimensionalRate(unittest.TestCase):
    """n >= 4: the gap tends to a constant times r1 r2/(r1+r2)."""

    def test_gap_settles(self):
        """gap changes by less than 5% between delta = 1e-5 and 1e-6."""
        for n in (4, 5):
            with self.subTest(n=n):
                cfg = TwoSphereConfig(n, 1.0, 1.0, 1e-5)
                coarse = compute_gap(cfg, "x1").value
                fine = compute_gap(cfg.with_eps(1e-6), "x1").value
                self.assertLess(abs(fine - coarse) / abs(coarse), 5e-2)


class TestRadiusLaw(unittest.TestCase):
    """n = 3: the gap scales with r1 r2/(r1+r2)."""

    def test_harmonic_radius_normalisation(self):
        """Normalised statistic varies by <= 1.5; unnormalised by >= 5."""
        delta = 1e-5
        normalised, raw = [], []
        for d in (0.1, 0.2, 1.0, 5.0, 10.0):
            gap = compute_gap(TwoSphereConfig(3, 1.0, d, delta), "x1").value
            raw.append(gap * abs(math.log(delta)))
            normalised.append(raw[-1] / harmonic_radius(1.0, d))
        self.assertLessEqual(max(normalised) / min(normalised), 1.5)
        self.assertGreaterEqual(max(raw) / min(raw), 5.0)


class TestDiagnostics(unittest.TestCase):
    """Test diagnostics() on assembled systems."""

    @classmethod
    def setUpClass(cls):
        cls.report = diagnostics(create_system(TwoSphereConfig(3, 1.0, 2.0, 1e-4)))

    def test_recursion_and_closed_form(self):
        """Positions satisfy the recursion and its closed form."""
        self.assertLess(self.report.recursion_residual, 1e-12)
        self.assertLess(self.report.closed_form_deviation, 1e-10)
        self.assertTrue(self.report.flags["recursion"])
        self.assertTrue(self.report.flags["closed_form"])

    def test_even_positions_decrease_to_fixed_point(self):
        """The even positions fall monotonically toward p1/r1."""
        self.assertTrue(self.report.y_monotone)
        self.assertGreater(self.report.fixed_point, 0.0)
        self.assertGreaterEqual(self.report.N, 1)
        self.assertGreater(self.report.A, 1.0)

    def test_report_serialises(self):
        """to_dict carries every flag and band."""
        document = self.report.to_dict()
        self.assertEqual(set(document["flags"]), set(self.report.flags))
        self.assertIn("Q1", document["band_constants"])

    def test_reference_configuration_flags(self):
        """Every flag holds for n = 3, r1 = 1, r2 = 2, eps = 1e-3."""
        report = diagnostics(create_system(TwoSphereConfig(3, 1.0, 2.0, 1e-3)))
        self.assertTrue(all(report.flags.values()), report.flags)

    def test_odd_positions_bracketed(self):
        """Past N the odd positions stay beyond sqrt(d/(d+1)) sqrt(delta)."""
        report = diagnostics(create_system(TwoSphereConfig(3, 1.0, 2.0, 1e-3)))
        self.assertIn("odd_bracket", report.flags)
        self.assertTrue(report.flags["odd_bracket"])
        self.assertTrue(report.odd_bracket_lower_ok)
        self.assertGreater(report.odd_bracket_constant, 1.0)

    def test_monotone_through_roundoff(self):
        """Ladders that run past the fixed point's last bit still count as monotone."""
        for d in (1.0, 2.0):
            for eps in (1e-2, 1e-3, 1e-4):
                with self.subTest(d=d, eps=eps):
                    report = diagnostics(create_system(TwoSphereConfig(3, 1.0, d, eps)))
                    self.assertTrue(report.y_monotone)
                    self.assertTrue(report.flags["y_monotone"])


class TestSettlesFromAbove(unittest.TestCase):
    """Test the roundoff-aware monotonicity check on synthetic sequences."""

    @classmethod
    def setUpClass(cls):
        cls.values = 0.1 + 0.5 ** np.arange(80)

    def test_converged_sequence(self):
        """Strict decrease, then terms stuck at the limit."""
        self.assertTrue(_settles_from_above(self.values, 0.1, 0.5, 0.0))

    def test_stall_above_floor(self):
        """A repeated term far from the limit is a violation."""
        values = self.values.copy()
        values[10] = values[9]
        self.assertFalse(_settles_from_above(values, 0.1, 0.5, 0.0))

    def test_undershoot(self):
        """A tail term well below the limit is a violation."""
        values = self.values.copy()
        values[-1] = 0.1 - 1e-10
        self.assertFalse(_settles_from_above(values, 0.1, 0.5, 0.0))


class TestScaleInvariance(unittest.TestCase):
    """Sweeps of rescaled configurations agree after dividing by the scale."""

    def test_scaled_sweep(self):
        base = TwoSphereConfig(3, 1.0, 2.0, 2.0**-10)
        reference = run_sweep(base, "x1", [2.0**-10, 2.0**-14])
        scaled = run_sweep(base.scaled(7.0), "x1", [7.0 * 2.0**-10, 7.0 * 2.0**-14])
        for a, b in zip(reference.rows, scaled.rows):
            self.assertAlmostEqual(b.delta_u / (7.0 * a.delta_u), 1.0, delta=1e-12)
            self.assertEqual(a.ladder1_length, b.ladder1_length)


if __name__ == "__main__":
    unittest.main()
