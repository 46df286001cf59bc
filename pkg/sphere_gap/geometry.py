"""Sphere reflections, Apollonius ratios and fixed points of composed reflections."""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .errors import (
    CenterReflection,
    ConfigError,
    DimensionMismatch,
    NoConvergence,
    PointNotExterior,
)
from .models import FixedPointResult, Sphere, TwoSphereConfig

logger = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-13
MAX_FIXED_POINT_ITERATIONS = 10_000_000


def as_point(x, n: Optional[int] = None) -> np.ndarray:
    """
    Coerce x to a finite 1-D float array.

    Args:
        x: Sequence of coordinates.
        n: Expected dimension, if known.

    Returns:
        Coordinates as a float ndarray.

    Raises:
        DimensionMismatch: If x is not 1-D or does not have n coordinates.
        ConfigError: If a coordinate is not finite.
    """
    point = np.asarray(x, dtype=float)
    if point.ndim != 1:
        raise DimensionMismatch(f"point must be 1-D, got shape {point.shape}")
    if n is not None and point.size != n:
        raise DimensionMismatch(f"point has {point.size} coordinates, expected {n}")
    if not np.all(np.isfinite(point)):
        raise ConfigError(f"point coordinates must be finite, got {point.tolist()}")
    return point


# ============================================================================
# REFLECTIONS
# ============================================================================


def reflect(p, s: Sphere) -> np.ndarray:
    """
    Reflect p through the sphere s: c + r^2 (p - c)/|p - c|^2.

    Raises:
        CenterReflection: If p is the center of s.
    """
    point = as_point(p, s.n)
    diff = point - s.center
    dist2 = float(np.dot(diff, diff))
    if dist2 == 0.0:
        raise CenterReflection(f"cannot reflect the center {s.center.tolist()} of its sphere")
    return s.center + (s.radius * s.radius / dist2) * diff


def reflect_axial(x: float, center: float, radius: float) -> float:
    """Reflection restricted to the x1-axis for a sphere centred on it."""
    diff = x - center
    if diff == 0.0:
        raise CenterReflection(f"cannot reflect the center x1={center} of its sphere")
    return center + radius * radius / diff


def apollonius_ratio(p, s: Sphere) -> float:
    """
    Return r/|p - c| for an exterior point p.

    For every x on the sphere, |x - p| = (|p - c|/r) |x - reflect(p, s)|.

    Raises:
        PointNotExterior: If p lies in the closed ball.
    """
    point = as_point(p, s.n)
    dist = float(np.linalg.norm(point - s.center))
    if dist <= s.radius:
        raise PointNotExterior(
            f"point at distance {dist} from the center is not outside radius {s.radius}"
        )
    return s.radius / dist


# ============================================================================
# FIXED POINTS
# ============================================================================


def fixed_point_quadratic(d: float, delta: float) -> float:
    """
    Positive root p/r1 of p^2 + b p - c = 0 for the unit-r1 configuration.

    b = 2(d-1)delta/s and c = (4 d delta + 3(1+d) delta^2 + 2 delta^3)/s
    with s = 1 + d + 2 delta. The branch is chosen so that no subtraction
    of nearly equal quantities occurs.
    """
    s = 1.0 + d + 2.0 * delta
    b = 2.0 * (d - 1.0) * delta / s
    c = (4.0 * d * delta + 3.0 * (1.0 + d) * delta**2 + 2.0 * delta**3) / s
    disc = math.sqrt(b * b + 4.0 * c)
    if b > 0.0:
        return 2.0 * c / (b + disc)
    return (disc - b) / 2.0


def _double_reflection(cfg: TwoSphereConfig, x: float) -> float:
    """R1(R2(x)) on the axis."""
    c1, c2 = cfg.r1 + cfg.eps, -(cfg.r2 + cfg.eps)
    return reflect_axial(reflect_axial(x, c2, cfg.r2), c1, cfg.r1)


def fixed_points(
    cfg: TwoSphereConfig,
    tol: float = FIXED_POINT_TOL,
    max_iter: int = MAX_FIXED_POINT_ITERATIONS,
    verify: bool = True,
) -> FixedPointResult:
    """
    Fixed points of R1∘R2 (inside D1) and R2∘R1 (inside D2).

    The closed-form root is cross-checked by iterating R1∘R2 from c1 until
    the step falls below tol * r1.

    Args:
        cfg: Two-sphere configuration (any n >= 2).
        tol: Step tolerance of the iterative check, in units of r1.
        max_iter: Iteration cap of the iterative check.
        verify: Run the iterative check.

    Returns:
        FixedPointResult with on-axis p1, p2 and their residuals.

    Raises:
        NoConvergence: If the iteration does not settle within max_iter or
            settles away from the closed-form root.
    """
    c1, c2 = cfg.r1 + cfg.eps, -(cfg.r2 + cfg.eps)
    p1 = cfg.r1 * fixed_point_quadratic(cfg.d, cfg.delta)
    p2 = reflect_axial(p1, c2, cfg.r2)

    residual1 = abs(_double_reflection(cfg, p1) - p1)
    residual2 = abs(reflect_axial(reflect_axial(p2, c1, cfg.r1), c2, cfg.r2) - p2)

    iterations = 0
    if verify:
        iterations = _verify_by_iteration(cfg, p1, p2, tol, max_iter)

    point1 = np.zeros(cfg.n)
    point1[0] = p1
    point2 = np.zeros(cfg.n)
    point2[0] = p2
    return FixedPointResult(point1, point2, residual1, residual2, iterations)


def _verify_by_iteration(
    cfg: TwoSphereConfig, p1: float, p2: float, tol: float, max_iter: int
) -> int:
    c1, c2 = cfg.r1 + cfg.eps, -(cfg.r2 + cfg.eps)
    # derivative of R1∘R2 at its fixed point
    kappa = (cfg.r1 / (p2 - c1)) ** 2 * (cfg.r2 / (p1 - c2)) ** 2
    if not 0.0 < kappa < 1.0:
        raise NoConvergence(f"composed reflection is not contracting (factor {kappa})")

    x = c1
    step = math.inf
    for iteration in range(1, max_iter + 1):
        x_next = _double_reflection(cfg, x)
        step = abs(x_next - x)
        x = x_next
        if step <= tol * cfg.r1:
            break
    else:
        raise NoConvergence(
            f"fixed-point iteration did not settle in {max_iter} steps (last step {step})"
        )

    roundoff = 64.0 * np.finfo(float).eps * (cfg.r1 + cfg.r2 + cfg.eps)
    allowance = 2.0 * (step * kappa + roundoff) / (1.0 - kappa)
    gap = abs(x - p1)
    if gap > allowance:
        raise NoConvergence(
            f"iterated fixed point {x} disagrees with closed form {p1} by {gap} "
            f"(allowed {allowance})"
        )
    logger.debug(
        f"Fixed point verified after {iteration} iterations "
        f"(contraction {kappa:.6g}, gap {gap:.3e})"
    )
    return iteration


# ============================================================================
# RIGID-MOTION NORMALISATION
# ============================================================================


@dataclass(frozen=True, eq=False)
class RigidMotion:
    """Proper rigid motion y = rotation @ (x - origin) into the canonical frame."""

    rotation: np.ndarray
    origin: np.ndarray

    def apply(self, x) -> np.ndarray:
        point = as_point(x, self.origin.size)
        return self.rotation @ (point - self.origin)

    def inverse(self, y) -> np.ndarray:
        point = as_point(y, self.origin.size)
        return self.rotation.T @ point + self.origin

    def transform_linear(self, a) -> np.ndarray:
        """Coefficients of x -> a·x in the canonical frame, up to a constant."""
        return self.rotation @ as_point(a, self.origin.size)


def _rotation_to_e1(u: np.ndarray) -> np.ndarray:
    """Rotation (det +1) mapping the unit vector u to e1."""
    n = u.size
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = u - e1
    vv = float(np.dot(v, v))
    if vv < 1e-30:
        return np.eye(n)
    householder = np.eye(n) - 2.0 * np.outer(v, v) / vv
    # Householder has det -1; flipping the last axis keeps e1 and restores +1
    flip = np.eye(n)
    flip[-1, -1] = -1.0
    return flip @ householder


def normalize_placement(
    sphere_a: Sphere, sphere_b: Sphere
) -> Tuple[TwoSphereConfig, RigidMotion]:
    """
    Map two disjoint balls onto the canonical axis configuration.

    sphere_a becomes D1 (positive x1 side) and sphere_b becomes D2.

    Args:
        sphere_a: First conductor.
        sphere_b: Second conductor.

    Returns:
        (cfg, motion) where motion.apply sends original points into cfg's frame.

    Raises:
        DimensionMismatch: If the spheres live in different dimensions.
        ConfigError: If the balls touch or overlap.
    """
    if sphere_a.n != sphere_b.n:
        raise DimensionMismatch(f"spheres live in R^{sphere_a.n} and R^{sphere_b.n}")
    offset = sphere_a.center - sphere_b.center
    dist = float(np.linalg.norm(offset))
    eps = (dist - sphere_a.radius - sphere_b.radius) / 2.0
    if not eps > 0.0:
        raise ConfigError(
            f"spheres are not disjoint (center distance {dist}, radii "
            f"{sphere_a.radius} and {sphere_b.radius})"
        )

    u = offset / dist
    origin = sphere_b.center + (sphere_b.radius + eps) * u
    cfg = TwoSphereConfig(sphere_a.n, sphere_a.radius, sphere_b.radius, eps)
    motion = RigidMotion(_rotation_to_e1(u), origin)
    logger.debug(f"Normalised placement: eps={eps:.6g}, axis={u.tolist()}")
    return cfg, motion
