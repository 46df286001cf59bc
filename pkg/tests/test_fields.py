"""
Unit tests for applied fields and the field factory.
"""

import unittest

import numpy as np

from sphere_gap.errors import ConfigError, DimensionMismatch, NotHarmonic
from sphere_gap.fields import CustomField, LinearField, SaddleField, create_field


class TestCreateField(unittest.TestCase):
    """Test create_field() with each accepted description."""

    def test_default_is_x1(self):
        """None means H = x1."""
        field = create_field(None, 3)
        self.assertIsInstance(field, LinearField)
        np.testing.assert_array_equal(field.a, [1.0, 0.0, 0.0])

    def test_axis_names(self):
        """x<i> selects one coordinate."""
        field = create_field("x2", 4)
        np.testing.assert_array_equal(field.a, [0.0, 1.0, 0.0, 0.0])
        self.assertEqual(field.axial_slope(), 0.0)

    def test_linear_object(self):
        """{"linear": [...]} builds a LinearField."""
        field = create_field({"linear": [2.0, -1.0]}, 2)
        self.assertEqual(field.label, "linear[2,-1]")
        self.assertEqual(field([1.0, 3.0]), -1.0)

    def test_bare_coefficient_sequence(self):
        """Lists, tuples and arrays of n coefficients are linear fields."""
        for spec in ([1.0, 0.0], (0.5, 2.0), np.array([3.0, -1.0])):
            with self.subTest(spec=spec):
                field = create_field(spec, 2)
                self.assertIsInstance(field, LinearField)
                np.testing.assert_array_equal(field.a, np.asarray(spec, dtype=float))
        with self.assertRaises(DimensionMismatch):
            create_field([1.0, 0.0], 3)
        with self.assertRaises(ConfigError):
            create_field([[1.0, 0.0], [0.0, 1.0]], 2)

    def test_saddle(self):
        """saddle is x1^2 - x2^2."""
        field = create_field("saddle", 3)
        self.assertIsInstance(field, SaddleField)
        self.assertEqual(field([2.0, 1.0, 5.0]), 3.0)
        np.testing.assert_array_equal(field.gradient(np.array([[2.0, 1.0, 5.0]])), [[4.0, -2.0, 0.0]])

    def test_callable_is_wrapped(self):
        """A harmonic callable becomes a CustomField."""
        field = create_field(lambda x: x[0] * x[1], 3)
        self.assertIsInstance(field, CustomField)
        self.assertTrue(field.declared_harmonic)

    def test_existing_field_passes_through(self):
        """A HarmonicField of the right dimension is returned as is."""
        field = LinearField([1.0, 0.0, 0.0])
        self.assertIs(create_field(field, 3), field)

    def test_dimension_mismatch(self):
        """Coefficient count and axis index must fit n."""
        with self.assertRaises(DimensionMismatch):
            create_field({"linear": [1.0, 0.0]}, 3)
        with self.assertRaises(DimensionMismatch):
            create_field("x4", 3)
        with self.assertRaises(DimensionMismatch):
            create_field(LinearField([1.0, 0.0]), 3)

    def test_unknown_descriptions(self):
        """Unknown names and keys are configuration errors."""
        with self.assertRaises(ConfigError):
            create_field("cubic", 3)
        with self.assertRaises(ConfigError):
            create_field({"quadratic": [1.0]}, 3)
        with self.assertRaises(ConfigError):
            create_field(42, 3)


class TestLinearField(unittest.TestCase):
    """Test LinearField evaluation."""

    def test_batched_evaluation(self):
        """evaluate() works row by row."""
        field = LinearField([1.0, 2.0, 3.0])
        values = field.evaluate(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 1.0]]))
        np.testing.assert_array_equal(values, [1.0, 5.0])

    def test_wrong_point_dimension(self):
        """Points of another dimension are rejected."""
        with self.assertRaises(DimensionMismatch):
            LinearField([1.0, 0.0, 0.0]).evaluate(np.zeros((2, 2)))

    def test_non_finite_coefficients(self):
        """NaN coefficients are rejected."""
        with self.assertRaises(ConfigError):
            LinearField([1.0, float("nan")])


class TestCustomField(unittest.TestCase):
    """Test the harmonicity spot-check of CustomField."""

    def test_non_harmonic_rejected(self):
        """x1^2 has Laplacian 2 and fails the spot-check."""
        with self.assertRaises(NotHarmonic):
            CustomField(lambda x: x[0] ** 2, 3)

    def test_declared_non_harmonic_skips_check(self):
        """declared_harmonic=False is accepted but flagged."""
        field = CustomField(lambda x: x[0] ** 2, 3, declared_harmonic=False)
        self.assertFalse(field.declared_harmonic)

    def test_finite_difference_gradient(self):
        """The default gradient matches the analytic one."""
        field = CustomField(lambda x: x[0] ** 2 - x[2] ** 2 + x[1], 3)
        grad = field.gradient(np.array([[1.0, 2.0, -1.0]]))[0]
        np.testing.assert_allclose(grad, [2.0, 1.0, 2.0], atol=1e-8)
        self.assertAlmostEqual(field.axial_slope(), 0.0, places=8)


if __name__ == "__main__":
    unittest.main()
