"""
Image-charge ladders and the normalisers Q1, Q2, M.

Every charge lies on the x1-axis, so ladders store axial coordinates only.
Ladders are built in units of r1 (radii 1 and d, half-gap delta) and the
positions are scaled back by r1; magnitudes are therefore scale invariant.
"""

import logging
import math
from dataclasses import replace
from typing import List, Tuple

import numpy as np
from scipy.special import gamma

from .errors import (
    ConfigError,
    ConstructionInvariantError,
    PrecisionError,
    TruncationOverflow,
)
from .models import ChargeLadder, ChargeSystem, TwoSphereConfig

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-12
MAX_CHARGES = 10_000_000
MIN_DELTA = 1e-10

# relative slack for the per-step geometric invariants
_INVARIANT_SLACK = 1e-12


def unit_sphere_area(n: int) -> float:
    """omega_n = 2 pi^(n/2) / Gamma(n/2)."""
    return float(2.0 * math.pi ** (n / 2.0) / gamma(n / 2.0))


def _check_ladder_request(cfg: TwoSphereConfig, tol: float) -> None:
    if cfg.n < 3:
        raise ConfigError("closed form has no ladder: image-charge ladders need n >= 3")
    if not 0.0 < tol < 1.0:
        raise ConfigError(f"truncation tolerance must lie in (0, 1), got {tol}")
    if cfg.delta < MIN_DELTA:
        raise PrecisionError(
            f"eps/r1 = {cfg.delta:.3e} is below {MIN_DELTA:.0e}; binary64 cannot "
            f"resolve the gap-scale quantities there"
        )


def build_ladder(
    cfg: TwoSphereConfig,
    family: int,
    tol: float = DEFAULT_TOL,
    max_charges: int = MAX_CHARGES,
) -> ChargeLadder:
    """
    Build the truncated image-charge ladder of one family.

    Charge 0 sits at the family's own center with magnitude 1. Odd charges
    are reflections through the opposite sphere, even charges through the
    own sphere, and each magnitude is the previous one times the
    Apollonius ratio of the reflection.

    Args:
        cfg: Configuration with n >= 3.
        family: 1 (seeded at c1) or 2 (seeded at c2).
        tol: Relative truncation tolerance on the sum of q^(n-2).
        max_charges: Hard cap on the ladder length.

    Returns:
        ChargeLadder ending on an odd index.

    Raises:
        ConfigError: If n < 3, tol is outside (0, 1) or family is invalid.
        PrecisionError: If eps/r1 is below MIN_DELTA.
        TruncationOverflow: If the ladder would exceed max_charges.
        ConstructionInvariantError: If a ratio or host check fails.
    """
    _check_ladder_request(cfg, tol)
    if family not in (1, 2):
        raise ConfigError(f"family must be 1 or 2, got {family!r}")

    delta, d = cfg.delta, cfg.d
    power = cfg.n - 2
    # unit-r1 spheres as (center, radius)
    sphere1 = (1.0 + delta, 1.0)
    sphere2 = (-(d + delta), d)
    own, other = (sphere1, sphere2) if family == 1 else (sphere2, sphere1)
    rho_bound = 1.0 / (1.0 + 2.0 * delta / max(1.0, d))
    rho_limit = rho_bound * (1.0 + _INVARIANT_SLACK)

    positions: List[float] = [own[0]]
    magnitudes: List[float] = [1.0]
    ratios: List[float] = [1.0]
    partial = 1.0
    rho_max = 0.0
    tail = math.inf

    pos, q = own[0], 1.0
    m = 0
    while True:
        m += 1
        if m >= max_charges:
            raise TruncationOverflow(
                f"family {family} ladder needs more than {max_charges} charges "
                f"(delta={delta:.3e}, tol={tol:.1e})"
            )
        center, radius = other if m % 2 == 1 else own
        diff = pos - center
        rho = radius / abs(diff)
        if rho > rho_limit:
            raise ConstructionInvariantError(
                f"ratio {rho} at family {family}, m={m} exceeds bound {rho_bound}"
            )
        pos = center + radius * radius / diff
        if abs(pos - center) >= radius:
            raise ConstructionInvariantError(
                f"charge family {family}, m={m} at {pos} is not inside its host sphere"
            )
        q *= rho
        positions.append(pos)
        magnitudes.append(q)
        ratios.append(rho)
        rho_max = max(rho_max, rho)
        weight = q**power
        partial += weight

        if m % 2 == 1:
            r = max(ratios[-1], ratios[-2]) if m > 1 else ratios[-1]
            rp = r**power
            tail = weight * rp / (1.0 - rp)
            if tail < tol * partial:
                break

    logger.debug(
        f"Family {family} ladder truncated at m={m} "
        f"(tail {tail:.3e}, partial {partial:.6g}, rho_max {rho_max:.12f})"
    )
    return ChargeLadder(
        family=family,
        positions=np.asarray(positions) * cfg.r1,
        magnitudes=np.asarray(magnitudes),
        ratios=np.asarray(ratios),
        power=power,
        tail_bound=tail,
        rho_max=rho_max,
    )


def alternating_sum(weights: np.ndarray) -> float:
    """
    Sum of w0 - w1 + w2 - ... for an even-length decreasing sequence.

    Pairs are differenced first and accumulated with math.fsum.
    """
    pairs = weights[0::2] - weights[1::2]
    return math.fsum(pairs.tolist())


def _system_arrays(
    ladder1: ChargeLadder, ladder2: ChargeLadder, Q1: float, Q2: float
) -> Tuple[np.ndarray, np.ndarray]:
    axial = np.concatenate([ladder1.positions, ladder2.positions])
    coefficients = np.concatenate(
        [Q2 * ladder1.signs * ladder1.weights, -Q1 * ladder2.signs * ladder2.weights]
    )
    return axial, coefficients


def _normalisers(ladder1: ChargeLadder, ladder2: ChargeLadder) -> Tuple[float, float, float]:
    Q1 = alternating_sum(ladder1.weights)
    Q2 = alternating_sum(ladder2.weights)
    M = math.fsum(
        [
            Q2 * math.fsum(ladder1.weights[0::2].tolist()),
            Q1 * math.fsum(ladder2.weights[1::2].tolist()),
        ]
    )
    return Q1, Q2, M


def assemble(
    cfg: TwoSphereConfig, tol: float = DEFAULT_TOL, max_charges: int = MAX_CHARGES
) -> ChargeSystem:
    """
    Build both ladders and the normalisers of the auxiliary potential h.

    Args:
        cfg: Configuration with n >= 3.
        tol: Relative truncation tolerance.
        max_charges: Hard cap per ladder.

    Returns:
        Immutable ChargeSystem.
    """
    ladder1 = build_ladder(cfg, 1, tol, max_charges)
    ladder2 = build_ladder(cfg, 2, tol, max_charges)
    Q1, Q2, M = _normalisers(ladder1, ladder2)
    if not (Q1 > 0.0 and Q2 > 0.0 and M > 0.0):
        raise ConstructionInvariantError(f"normalisers not positive: Q1={Q1}, Q2={Q2}, M={M}")

    axial, coefficients = _system_arrays(ladder1, ladder2, Q1, Q2)
    logger.info(
        f"Assembled n={cfg.n} r1={cfg.r1:g} r2={cfg.r2:g} eps={cfg.eps:.3e}: "
        f"{len(ladder1)} + {len(ladder2)} charges, Q1={Q1:.6g} Q2={Q2:.6g} M={M:.6g}"
    )
    return ChargeSystem(
        cfg=cfg,
        ladder1=ladder1,
        ladder2=ladder2,
        Q1=Q1,
        Q2=Q2,
        M=M,
        omega_n=unit_sphere_area(cfg.n),
        truncation_tol=tol,
        axial=axial,
        coefficients=coefficients,
    )


def interior_charge_arrays(sys: ChargeSystem, sphere_index: int) -> Tuple[np.ndarray, np.ndarray]:
    """Axial positions and signed weights (coefficient / M) of charges inside one sphere."""
    if sphere_index not in (1, 2):
        raise ConfigError(f"sphere index must be 1 or 2, got {sphere_index!r}")
    hosts = np.concatenate([sys.ladder1.hosts, sys.ladder2.hosts])
    mask = hosts == sphere_index
    return sys.axial[mask], sys.coefficients[mask] / sys.M


def interior_charge_weights(sys: ChargeSystem, sphere_index: int) -> List[Tuple[float, float]]:
    """
    Charges inside sphere_index with their signed weights in h's numerator.

    The weights sum to +1 over D1 and -1 over D2.
    """
    positions, weights = interior_charge_arrays(sys, sphere_index)
    return list(zip(positions.tolist(), weights.tolist()))


def perturb_magnitudes(sys: ChargeSystem, relative: float) -> ChargeSystem:
    """
    Copy of sys with family-1 magnitudes scaled by (1 + relative).

    Q1, Q2 and M are kept, so the copy no longer carries unit flux. Used to
    check that verification detects a broken construction.
    """
    ladder1 = replace(sys.ladder1, magnitudes=sys.ladder1.magnitudes * (1.0 + relative))
    axial, coefficients = _system_arrays(ladder1, sys.ladder2, sys.Q1, sys.Q2)
    logger.warning(f"Family-1 magnitudes perturbed by {relative:g} (normalisers kept)")
    return replace(sys, ladder1=ladder1, axial=axial, coefficients=coefficients)
