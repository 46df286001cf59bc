"""Applied harmonic fields H and the factory that builds them from config.

Linear fields are the main case. Named builtins and user callables cover
general entire harmonic fields.
"""

import logging
import re
from typing import Any, Callable

import numpy as np

from .errors import ConfigError, DimensionMismatch, NotHarmonic

logger = logging.getLogger(__name__)

SPOT_CHECK_POINTS = 20
SPOT_CHECK_SEED = 20240101
SPOT_CHECK_STEP = 1e-3
SPOT_CHECK_RTOL = 1e-4


class HarmonicField:
    """
    Base class for applied fields H: R^n -> R.

    Subclasses implement evaluate (batched) and may override gradient.
    """

    label = "field"

    def __init__(self, n: int):
        self.n = n

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """
        Evaluate H at each row of points.

        Args:
            points: Array of shape (N, n).

        Returns:
            Array of N values.
        """
        raise NotImplementedError("Subclasses must implement evaluate")

    def gradient(self, points: np.ndarray) -> np.ndarray:
        """Gradient of H at each row of points; central differences by default."""
        from .oracle import fd_gradient

        points = self._check_points(points)
        return np.array([fd_gradient(self, x, 1e-5) for x in points])

    @property
    def declared_harmonic(self) -> bool:
        return True

    def axial_slope(self) -> float:
        """dH/dx1 at the origin (the a1 of the rate formulas)."""
        origin = np.zeros((1, self.n))
        return float(self.gradient(origin)[0, 0])

    def at_axis(self, axial: np.ndarray) -> np.ndarray:
        """H at the on-axis points (t, 0, ..., 0)."""
        axial = np.asarray(axial, dtype=float)
        points = np.zeros((axial.size, self.n))
        points[:, 0] = axial
        return self.evaluate(points)

    def __call__(self, x) -> float:
        point = np.asarray(x, dtype=float).reshape(1, -1)
        return float(self.evaluate(point)[0])

    def _check_points(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.n:
            raise DimensionMismatch(
                f"{self.label} lives in R^{self.n}, got points in R^{points.shape[1]}"
            )
        return points


class LinearField(HarmonicField):
    """H(x) = a·x."""

    def __init__(self, a):
        a = np.asarray(a, dtype=float)
        if a.ndim != 1 or a.size < 2:
            raise ConfigError(f"linear field needs a vector of n >= 2 coefficients, got {a!r}")
        if not np.all(np.isfinite(a)):
            raise ConfigError("linear field coefficients must be finite")
        super().__init__(a.size)
        self.a = a

    @property
    def label(self) -> str:
        return "linear[" + ",".join(f"{v:g}" for v in self.a) + "]"

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return self._check_points(points) @ self.a

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = self._check_points(points)
        return np.broadcast_to(self.a, points.shape).copy()

    def axial_slope(self) -> float:
        return float(self.a[0])

    def at_axis(self, axial: np.ndarray) -> np.ndarray:
        return self.a[0] * np.asarray(axial, dtype=float)


class SaddleField(HarmonicField):
    """H(x) = x1^2 - x2^2."""

    label = "saddle"

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = self._check_points(points)
        return points[:, 0] ** 2 - points[:, 1] ** 2

    def gradient(self, points: np.ndarray) -> np.ndarray:
        points = self._check_points(points)
        grad = np.zeros_like(points)
        grad[:, 0] = 2.0 * points[:, 0]
        grad[:, 1] = -2.0 * points[:, 1]
        return grad

    def axial_slope(self) -> float:
        return 0.0


class CustomField(HarmonicField):
    """
    User-supplied H evaluated point by point.

    With verify=True a declared-harmonic field must pass a finite-difference
    Laplacian spot-check at SPOT_CHECK_POINTS seeded points.
    """

    def __init__(
        self,
        func: Callable[[np.ndarray], float],
        n: int,
        declared_harmonic: bool = True,
        verify: bool = True,
        label: str = "custom",
        seed: int = SPOT_CHECK_SEED,
    ):
        super().__init__(n)
        self.func = func
        self.label = label
        self._declared_harmonic = declared_harmonic
        if declared_harmonic and verify:
            self._spot_check(seed)

    @property
    def declared_harmonic(self) -> bool:
        return self._declared_harmonic

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        points = self._check_points(points)
        return np.array([float(self.func(x)) for x in points])

    def _spot_check(self, seed: int) -> None:
        from .oracle import fd_laplacian, fd_second_derivative_scale

        rng = np.random.default_rng(seed)
        for x in rng.standard_normal((SPOT_CHECK_POINTS, self.n)):
            laplacian = fd_laplacian(self, x, SPOT_CHECK_STEP)
            scale = fd_second_derivative_scale(self, x, SPOT_CHECK_STEP)
            allowed = SPOT_CHECK_RTOL * scale + 1e-6 * max(1.0, abs(self(x)))
            if abs(laplacian) > allowed:
                raise NotHarmonic(
                    f"{self.label}: finite-difference Laplacian {laplacian:.3e} at "
                    f"{x.tolist()} exceeds {allowed:.3e}"
                )
        logger.debug(f"{self.label} passed the harmonicity spot-check")


_AXIS_NAME = re.compile(r"^x(\d+)$")


def _linear_from_coefficients(coefficients: Any, n: int) -> LinearField:
    if not isinstance(coefficients, (list, tuple, np.ndarray)):
        raise ConfigError(f"field.linear must be a list, got {coefficients!r}")
    if np.ndim(coefficients) != 1:
        raise ConfigError(f"linear field needs a flat list of coefficients, got {coefficients!r}")
    if len(coefficients) != n:
        raise DimensionMismatch(f"field.linear has {len(coefficients)} coefficients but n = {n}")
    return LinearField(coefficients)


def create_field(spec: Any, n: int) -> HarmonicField:
    """
    Create an applied field from its configuration value.

    Accepted forms: None (H = x1), {"linear": [a1, ..., an]} or the bare
    coefficient sequence, "x<i>", "saddle", an existing HarmonicField or a
    callable (wrapped as CustomField).

    Args:
        spec: Field description.
        n: Dimension of the configuration.

    Returns:
        HarmonicField living in R^n.

    Raises:
        DimensionMismatch: If the field's arity is not n.
        ConfigError: If the description is unknown.
    """
    if spec is None:
        spec = "x1"

    if isinstance(spec, HarmonicField):
        field = spec
    elif isinstance(spec, dict):
        unknown = set(spec) - {"linear"}
        if unknown or "linear" not in spec:
            raise ConfigError(f"field object must be {{'linear': [...]}}, got keys {sorted(spec)}")
        field = _linear_from_coefficients(spec["linear"], n)
    elif isinstance(spec, (list, tuple, np.ndarray)):
        field = _linear_from_coefficients(spec, n)
    elif isinstance(spec, str):
        name = spec.strip().lower()
        match = _AXIS_NAME.match(name)
        if match:
            index = int(match.group(1))
            if not 1 <= index <= n:
                raise DimensionMismatch(f"field {spec!r} needs 1 <= i <= n = {n}")
            a = np.zeros(n)
            a[index - 1] = 1.0
            field = LinearField(a)
        elif name == "saddle":
            field = SaddleField(n)
        else:
            raise ConfigError(f"Unknown field: {spec!r}. Valid options: x<i>, saddle, {{'linear': [...]}}")
    elif callable(spec):
        field = CustomField(spec, n)
    else:
        raise ConfigError(f"Unsupported field specification: {spec!r}")

    if field.n != n:
        raise DimensionMismatch(f"field {field.label} lives in R^{field.n}, configuration in R^{n}")
    logger.debug(f"Created field {field.label} in R^{n}")
    return field
