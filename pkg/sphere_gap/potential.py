"""
Auxiliary potential h, its gradient and the potential gap u|dD1 - u|dD2.

For n >= 3 h is the weighted image-charge series of a ChargeSystem; for
n = 2 it is the closed-form pair of logarithmic charges at the fixed points.
"""

import logging
import math
from typing import Union

import numpy as np

from .errors import (
    DimensionMismatch,
    EvaluationAtPole,
    NotHarmonic,
    PointInsideConductor,
)
from .fields import HarmonicField, LinearField, create_field
from .geometry import as_point, fixed_points
from .images import DEFAULT_TOL, MAX_CHARGES, assemble
from .models import (
    ChargeSystem,
    Method,
    PlanarSystem,
    PotentialDifferenceResult,
    TwoSphereConfig,
)

logger = logging.getLogger(__name__)

System = Union[ChargeSystem, PlanarSystem]

# relative tolerance for points that are meant to lie on a boundary
BOUNDARY_SLACK = 1e-12
# matrix entries per evaluation chunk (points x charges)
_CHUNK_ENTRIES = 2_000_000


def create_system(
    cfg: TwoSphereConfig, tol: float = DEFAULT_TOL, max_charges: int = MAX_CHARGES
) -> System:
    """
    Create the computable form of h for a configuration.

    Args:
        cfg: Two-sphere configuration.
        tol: Ladder truncation tolerance (n >= 3).
        max_charges: Ladder length cap (n >= 3).

    Returns:
        PlanarSystem for n = 2, ChargeSystem otherwise.
    """
    if cfg.n == 2:
        return PlanarSystem(cfg, fixed_points(cfg))
    return assemble(cfg, tol, max_charges)


# ============================================================================
# EVALUATION OF h AND ITS GRADIENT
# ============================================================================


def _as_points(cfg: TwoSphereConfig, points) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.ndim != 2 or points.shape[1] != cfg.n:
        raise DimensionMismatch(f"points must have {cfg.n} coordinates, got shape {points.shape}")
    return points


def _check_exterior(cfg: TwoSphereConfig, points: np.ndarray, on_boundary: bool) -> None:
    for index in (1, 2):
        sphere = cfg.sphere(index)
        gap = np.linalg.norm(points - sphere.center, axis=1) - sphere.radius
        limit = -BOUNDARY_SLACK * sphere.radius if on_boundary else 0.0
        bad = gap < limit if on_boundary else gap <= limit
        if np.any(bad):
            first = points[np.argmax(bad)]
            raise PointInsideConductor(
                f"point {first.tolist()} is not exterior to D{index} "
                f"(h is only defined outside both conductors)"
            )


def _axial_distances(system: ChargeSystem, points: np.ndarray):
    """Yield (chunk slice, x1 - c, squared transverse distance) per chunk."""
    transverse2 = np.sum(points[:, 1:] ** 2, axis=1)
    chunk = max(1, _CHUNK_ENTRIES // max(1, system.axial.size))
    for start in range(0, points.shape[0], chunk):
        rows = slice(start, start + chunk)
        dx = points[rows, 0:1] - system.axial[np.newaxis, :]
        yield rows, dx, transverse2[rows, np.newaxis]


def h_values(system: System, points, on_boundary: bool = False) -> np.ndarray:
    """
    Evaluate h at each row of points.

    Args:
        system: ChargeSystem or PlanarSystem.
        points: Array of shape (N, n), exterior to both spheres.
        on_boundary: Accept points on the sphere boundaries.

    Returns:
        Array of N values.

    Raises:
        PointInsideConductor: If a point lies inside a conductor.
    """
    points = _as_points(system.cfg, points)
    _check_exterior(system.cfg, points, on_boundary)
    if isinstance(system, PlanarSystem):
        return _planar_values(system, points)

    power = system.n - 2
    values = np.empty(points.shape[0])
    for rows, dx, t2 in _axial_distances(system, points):
        dist2 = dx * dx + t2
        values[rows] = dist2 ** (-power / 2.0) @ system.coefficients
    return values / ((2 - system.n) * system.omega_n * system.M)


def h_gradients(system: System, points, on_boundary: bool = False) -> np.ndarray:
    """Gradient of h at each row of points; shape (N, n)."""
    points = _as_points(system.cfg, points)
    _check_exterior(system.cfg, points, on_boundary)
    if isinstance(system, PlanarSystem):
        return _planar_gradients(system, points)

    n = system.n
    grads = np.empty_like(points)
    for rows, dx, t2 in _axial_distances(system, points):
        weights = (dx * dx + t2) ** (-n / 2.0) * system.coefficients
        grads[rows, 0] = np.sum(weights * dx, axis=1)
        grads[rows, 1:] = points[rows, 1:] * np.sum(weights, axis=1)[:, np.newaxis]
    return grads / (system.omega_n * system.M)


def h_eval(system: System, x, on_boundary: bool = False) -> float:
    """
    Value of the auxiliary potential at one exterior point.

    Raises:
        PointInsideConductor: If x is inside (or, unless on_boundary, on) a sphere.
    """
    point = as_point(x, system.cfg.n)
    return float(h_values(system, point[np.newaxis, :], on_boundary)[0])


def grad_h_eval(system: System, x, on_boundary: bool = False) -> np.ndarray:
    """Gradient of the auxiliary potential at one exterior point."""
    point = as_point(x, system.cfg.n)
    return h_gradients(system, point[np.newaxis, :], on_boundary)[0]


def h_tail_error(system: ChargeSystem, x) -> float:
    """
    Estimate of the truncated part of h at x.

    The omitted charges cluster near the fixed points, so the tail bounds
    are divided by the distance from x to the last charges kept.
    """
    point = as_point(x, system.n)
    tails = []
    for ladder, weight in ((system.ladder1, system.Q2), (system.ladder2, system.Q1)):
        last = ladder.positions[-2:]
        dist = np.sqrt((point[0] - last) ** 2 + np.sum(point[1:] ** 2))
        tails.append(weight * ladder.tail_bound / float(np.min(dist)) ** (system.n - 2))
    return math.fsum(tails) / ((system.n - 2) * system.omega_n * system.M)


# ============================================================================
# CLOSED FORM FOR n = 2
# ============================================================================


def _planar_offsets(system: PlanarSystem, points: np.ndarray):
    d1 = points - system.fixed.p1
    d2 = points - system.fixed.p2
    s1 = np.sum(d1 * d1, axis=1)
    s2 = np.sum(d2 * d2, axis=1)
    if np.any(s1 == 0.0) or np.any(s2 == 0.0):
        raise EvaluationAtPole("planar h evaluated at one of its fixed-point charges")
    return d1, d2, s1, s2


def _planar_values(system: PlanarSystem, points: np.ndarray) -> np.ndarray:
    _, _, s1, s2 = _planar_offsets(system, points)
    return np.log(s1 / s2) / (4.0 * math.pi)


def _planar_gradients(system: PlanarSystem, points: np.ndarray) -> np.ndarray:
    d1, d2, s1, s2 = _planar_offsets(system, points)
    return (d1 / s1[:, np.newaxis] - d2 / s2[:, np.newaxis]) / (2.0 * math.pi)


def h_eval_2d(cfg: TwoSphereConfig, x) -> float:
    """
    h(x) = (1/2pi) log(|x - p1| / |x - p2|) for n = 2.

    Raises:
        DimensionMismatch: If cfg.n != 2.
        EvaluationAtPole: If x is one of the fixed points.
    """
    if cfg.n != 2:
        raise DimensionMismatch(f"closed-form h needs n = 2, got n = {cfg.n}")
    system = PlanarSystem(cfg, fixed_points(cfg))
    point = as_point(x, 2)
    return float(_planar_values(system, point[np.newaxis, :])[0])


def grad_h_eval_2d(cfg: TwoSphereConfig, x) -> np.ndarray:
    if cfg.n != 2:
        raise DimensionMismatch(f"closed-form h needs n = 2, got n = {cfg.n}")
    system = PlanarSystem(cfg, fixed_points(cfg))
    point = as_point(x, 2)
    return _planar_gradients(system, point[np.newaxis, :])[0]


# ============================================================================
# POTENTIAL DIFFERENCE
# ============================================================================


def _check_field(field: HarmonicField, n: int) -> HarmonicField:
    field = create_field(field, n)
    if not field.declared_harmonic:
        raise NotHarmonic(f"{field.label} is not declared harmonic; the charge sum needs harmonic H")
    return field


def potential_difference(system: System, H) -> PotentialDifferenceResult:
    """
    u|dD1 - u|dD2 as the weighted sum of H over the image charges.

    H is shifted so that H(0) = 0 before summing.

    Args:
        system: ChargeSystem (n >= 3) or PlanarSystem (n = 2).
        H: Applied field (or any value create_field accepts).

    Returns:
        PotentialDifferenceResult with method charge_sum (or fixed_point_2d).

    Raises:
        DimensionMismatch: If H's arity differs from n.
    """
    if isinstance(system, PlanarSystem):
        return _planar_difference(system, H)

    field = _check_field(H, system.n)
    shifted = field.at_axis(system.axial) - field(np.zeros(system.n))
    value = math.fsum((system.coefficients * shifted).tolist()) / system.M
    tail_error = (
        (system.Q2 * system.ladder1.tail_bound + system.Q1 * system.ladder2.tail_bound)
        / system.M
        * float(np.max(np.abs(shifted)))
    )
    logger.debug(f"Potential difference for {field.label}: {value!r} (tail {tail_error:.3e})")
    return PotentialDifferenceResult(value, Method.CHARGE_SUM, tail_error, system.cfg)


def _planar_difference(system: PlanarSystem, H) -> PotentialDifferenceResult:
    field = _check_field(H, 2)
    value = field(system.fixed.p1) - field(system.fixed.p2)
    return PotentialDifferenceResult(value, Method.FIXED_POINT_2D, 0.0, system.cfg)


def potential_difference_2d(cfg: TwoSphereConfig, H) -> PotentialDifferenceResult:
    """
    H(p1) - H(p2) at the two fixed points (n = 2).

    Raises:
        DimensionMismatch: If cfg.n != 2.
    """
    if cfg.n != 2:
        raise DimensionMismatch(f"closed-form potential difference needs n = 2, got n = {cfg.n}")
    return _planar_difference(PlanarSystem(cfg, fixed_points(cfg)), H)


def compute_gap(cfg: TwoSphereConfig, H, tol: float = DEFAULT_TOL) -> PotentialDifferenceResult:
    """Potential difference for any dimension, building the system first."""
    return potential_difference(create_system(cfg, tol), H)


def gradient_lower_bound(system_or_cfg, H, tol: float = DEFAULT_TOL) -> float:
    """
    |u|dD1 - u|dD2| / (2 eps).

    Some point of the gap carries a field at least this strong.
    """
    if isinstance(system_or_cfg, TwoSphereConfig):
        system = create_system(system_or_cfg, tol)
    else:
        system = system_or_cfg
    result = potential_difference(system, H)
    return abs(result.value) / (2.0 * system.cfg.eps)


# ============================================================================
# GENERAL HARMONIC FIELDS
# ============================================================================


def charge_lever(system: ChargeSystem, absolute: bool = False) -> float:
    """
    Charge-weighted lever of the image system.

    Signed: |sum w c| (equal to |u|dD1 - u|dD2| for H = x1).
    Absolute: sum |w| |c|.
    """
    terms = system.coefficients * system.axial
    if absolute:
        return math.fsum(np.abs(terms).tolist()) / system.M
    return abs(math.fsum(terms.tolist())) / system.M


def general_field_bound(
    system: ChargeSystem, H, samples: int = 4096, seed: int = 12345
) -> float:
    """
    Upper bound sup|grad H| * L on |u|dD1 - u|dD2| for any entire harmonic H.

    The supremum is over B_{4(r1+r2)}(0); L is the absolute charge lever.
    |grad H| is subharmonic, so sampling the bounding sphere suffices; the
    estimate is exact for linear fields.
    """
    field = _check_field(H, system.n)
    radius = 4.0 * (system.cfg.r1 + system.cfg.r2)
    if isinstance(field, LinearField):
        sup_gradient = float(np.linalg.norm(field.a))
    else:
        rng = np.random.default_rng(seed)
        directions = rng.standard_normal((samples, system.n))
        directions /= np.linalg.norm(directions, axis=1)[:, np.newaxis]
        sup_gradient = float(np.max(np.linalg.norm(field.gradient(radius * directions), axis=1)))
    return sup_gradient * charge_lever(system, absolute=True)
