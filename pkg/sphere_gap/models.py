"""Data models for two-sphere configurations, image charges and results."""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from .errors import ConfigError


class Method(Enum):
    """How a potential difference was obtained."""

    CHARGE_SUM = "charge_sum"
    FIXED_POINT_2D = "fixed_point_2d"
    QUADRATURE_ORACLE = "quadrature_oracle"


class RateKind(Enum):
    """Quantity whose blow-up (or decay) rate is predicted."""

    POTENTIAL_GAP = "potential_gap"
    GRADIENT_LOWER = "gradient_lower"


class RateModel(Enum):
    """One-parameter rate models: quantity = coefficient * basis(eps)."""

    SQRT_EPS = "sqrt_eps"
    INV_LOG_EPS = "inv_log_eps"
    CONSTANT = "constant"
    INV_EPS_LOG_EPS = "inv_eps_log_eps"
    INV_SQRT_EPS = "inv_sqrt_eps"
    INV_EPS = "inv_eps"


class QuadratureScheme(Enum):
    """Surface quadrature families used by the oracle."""

    PRODUCT_GAUSS = "product_gauss"
    TRAPEZOID_CIRCLE = "trapezoid_circle"
    MONTE_CARLO = "monte_carlo"


def _require_finite_positive(name: str, value: float) -> float:
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a real number, got {value!r}")
    if not math.isfinite(value) or value <= 0.0:
        raise ConfigError(f"{name} must be finite and > 0, got {value}")
    return value


# ============================================================================
# GEOMETRY
# ============================================================================


@dataclass(frozen=True, eq=False)
class Sphere:
    """Ball B_r(c) in R^n."""

    center: np.ndarray
    radius: float

    def __post_init__(self) -> None:
        center = np.asarray(self.center, dtype=float)
        if center.ndim != 1 or center.size < 1:
            raise ConfigError(f"sphere center must be a 1-D point, got {center!r}")
        if not np.all(np.isfinite(center)):
            raise ConfigError("sphere center coordinates must be finite")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "radius", _require_finite_positive("radius", self.radius))

    @property
    def n(self) -> int:
        return self.center.size


@dataclass(frozen=True)
class TwoSphereConfig:
    """
    Two conductors on the x1-axis, 2*eps apart.

    D1 = B_{r1}(r1 + eps, 0, ..., 0) and D2 = B_{r2}(-(r2 + eps), 0, ..., 0),
    so the gap is centred on the origin.
    """

    n: int
    r1: float
    r2: float
    eps: float

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, (int, np.integer)):
            raise ConfigError(f"n must be an integer, got {self.n!r}")
        if self.n < 2:
            raise ConfigError(f"n must be >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "r1", _require_finite_positive("r1", self.r1))
        object.__setattr__(self, "r2", _require_finite_positive("r2", self.r2))
        object.__setattr__(self, "eps", _require_finite_positive("eps", self.eps))

    @property
    def c1(self) -> np.ndarray:
        center = np.zeros(self.n)
        center[0] = self.r1 + self.eps
        return center

    @property
    def c2(self) -> np.ndarray:
        center = np.zeros(self.n)
        center[0] = -(self.r2 + self.eps)
        return center

    @property
    def d(self) -> float:
        """Radius ratio r2/r1."""
        return self.r2 / self.r1

    @property
    def delta(self) -> float:
        """Half-gap in units of r1."""
        return self.eps / self.r1

    @property
    def r_max(self) -> float:
        return max(self.r1, self.r2)

    @property
    def harmonic_radius(self) -> float:
        """r1*r2/(r1+r2), the radius combination every rate carries."""
        return self.r1 * self.r2 / (self.r1 + self.r2)

    def sphere(self, index: int) -> Sphere:
        if index == 1:
            return Sphere(self.c1, self.r1)
        if index == 2:
            return Sphere(self.c2, self.r2)
        raise ConfigError(f"sphere index must be 1 or 2, got {index!r}")

    def scaled(self, factor: float) -> "TwoSphereConfig":
        """Configuration with every length multiplied by factor."""
        factor = _require_finite_positive("scale factor", factor)
        return TwoSphereConfig(self.n, self.r1 * factor, self.r2 * factor, self.eps * factor)

    def normalized(self) -> "TwoSphereConfig":
        """Unit-r1 configuration (radii 1 and d, half-gap delta)."""
        return TwoSphereConfig(self.n, 1.0, self.d, self.delta)

    def with_eps(self, eps: float) -> "TwoSphereConfig":
        return TwoSphereConfig(self.n, self.r1, self.r2, eps)

    def to_dict(self) -> Dict[str, Any]:
        return {"n": self.n, "r1": self.r1, "r2": self.r2, "eps": self.eps}


@dataclass(frozen=True, eq=False)
class FixedPointResult:
    """Fixed points of R1∘R2 (p1, inside D1) and R2∘R1 (p2, inside D2)."""

    p1: np.ndarray
    p2: np.ndarray
    residual1: float
    residual2: float
    iterations: int = 0  # 0 when the iterative cross-check was skipped

    def to_dict(self) -> Dict[str, Any]:
        return {
            "p1": self.p1.tolist(),
            "p2": self.p2.tolist(),
            "residual1": self.residual1,
            "residual2": self.residual2,
            "iterations": self.iterations,
        }


# ============================================================================
# IMAGE CHARGES
# ============================================================================


@dataclass(frozen=True)
class ImageCharge:
    """One point charge of a ladder; it sits on the x1-axis."""

    family: int
    index: int
    axial_position: float
    magnitude: float
    sign: int
    host: int


@dataclass(frozen=True, eq=False)
class ChargeLadder:
    """
    Truncated image-charge ladder of one family.

    positions[m] is the x1-coordinate of c_{s,m}, magnitudes[m] is q_{s,m}
    and ratios[m] is rho_{s,m} (ratios[0] == 1).
    """

    family: int
    positions: np.ndarray
    magnitudes: np.ndarray
    ratios: np.ndarray
    power: int  # n - 2
    tail_bound: float
    rho_max: float

    def __len__(self) -> int:
        return int(self.positions.size)

    @property
    def signs(self) -> np.ndarray:
        signs = np.ones(len(self), dtype=int)
        signs[1::2] = -1
        return signs

    @property
    def hosts(self) -> np.ndarray:
        """Index (1 or 2) of the sphere holding each charge."""
        own, other = (1, 2) if self.family == 1 else (2, 1)
        hosts = np.full(len(self), own, dtype=int)
        hosts[1::2] = other
        return hosts

    @cached_property
    def weights(self) -> np.ndarray:
        """q_{s,m}^{n-2}."""
        return self.magnitudes**self.power

    @cached_property
    def weight_sum(self) -> float:
        return math.fsum(self.weights.tolist())

    @property
    def charges(self) -> List[ImageCharge]:
        hosts = self.hosts
        return [
            ImageCharge(
                family=self.family,
                index=m,
                axial_position=float(self.positions[m]),
                magnitude=float(self.magnitudes[m]),
                sign=1 if m % 2 == 0 else -1,
                host=int(hosts[m]),
            )
            for m in range(len(self))
        ]


@dataclass(frozen=True, eq=False)
class ChargeSystem:
    """
    Computable form of the auxiliary potential h for n >= 3.

    axial and coefficients flatten both ladders: h(x) equals
    sum(coefficients / |x - c|^(n-2)) / ((2 - n) * omega_n * M).
    """

    cfg: TwoSphereConfig
    ladder1: ChargeLadder
    ladder2: ChargeLadder
    Q1: float
    Q2: float
    M: float
    omega_n: float
    truncation_tol: float
    axial: np.ndarray
    coefficients: np.ndarray

    @property
    def n(self) -> int:
        return self.cfg.n

    @property
    def tail_bounds(self) -> Tuple[float, float]:
        return (self.ladder1.tail_bound, self.ladder2.tail_bound)

    @property
    def relative_tail(self) -> float:
        return max(
            self.ladder1.tail_bound / self.ladder1.weight_sum,
            self.ladder2.tail_bound / self.ladder2.weight_sum,
        )


@dataclass(frozen=True, eq=False)
class PlanarSystem:
    """Closed-form h for n = 2: two unit charges at the fixed points."""

    cfg: TwoSphereConfig
    fixed: FixedPointResult

    @property
    def n(self) -> int:
        return 2


# ============================================================================
# RESULTS
# ============================================================================


@dataclass(frozen=True)
class PotentialDifferenceResult:
    """u|dD1 - u|dD2 for one configuration and applied field."""

    value: float
    method: Method
    tail_error: float
    config: TwoSphereConfig

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "method": self.method.value,
            "tail_error": self.tail_error,
            "config": self.config.to_dict(),
        }


@dataclass(frozen=True)
class RatePrediction:
    """Rate formula value; constant_unknown marks formulas known up to a constant."""

    n: int
    kind: RateKind
    formula_value: float
    model: RateModel
    constant_unknown: bool
    log_convention: str = "eps"

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "kind": self.kind.value,
            "formula_value": self.formula_value,
            "model": self.model.value,
            "constant_unknown": self.constant_unknown,
            "log_convention": self.log_convention,
        }


@dataclass
class SweepRow:
    """One epsilon of a sweep; failed rows keep the error message."""

    eps: float
    delta: float
    d: float
    delta_u: Optional[float] = None
    gradient_lower_bound: Optional[float] = None
    Q1: Optional[float] = None
    Q2: Optional[float] = None
    M: Optional[float] = None
    ladder1_length: int = 0
    ladder2_length: int = 0
    tail1: Optional[float] = None
    tail2: Optional[float] = None
    relative_tail: float = 0.0
    failed: bool = False
    error: Optional[str] = None

    @property
    def log_eps(self) -> float:
        return abs(math.log(self.eps))

    @property
    def log_delta(self) -> float:
        return abs(math.log(self.delta))


@dataclass
class SweepTable:
    """Sweep over eps with (n, r1, r2, H) fixed."""

    n: int
    r1: float
    r2: float
    field_label: str
    rows: List[SweepRow] = field(default_factory=list)

    @property
    def usable_rows(self) -> List[SweepRow]:
        return [row for row in self.rows if not row.failed]


@dataclass(frozen=True)
class FitResult:
    """Fitted coefficient of a rate model; residual is the max relative misfit."""

    model: RateModel
    coefficient: float
    residual: float
    fit_range: Tuple[float, float]
    log_convention: str = "delta"
    rows_used: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.model.value,
            "coefficient": self.coefficient,
            "residual": self.residual,
            "fit_range": list(self.fit_range),
            "log_convention": self.log_convention,
            "rows_used": self.rows_used,
        }


@dataclass
class DiagnosticsReport:
    """Sequence and band diagnostics of one assembled ChargeSystem."""

    config: TwoSphereConfig
    sum_q1: float
    sum_q2: float
    Q1: float
    Q2: float
    lever1: float
    lever2: float
    fixed_point: float  # p1 / r1
    fixed_point_constant: float  # |p/r1 - 2 sqrt(d/(d+1)) sqrt(delta)| / delta
    recursion_residual: float
    closed_form_deviation: float
    y_even_constant: float
    odd_bracket_constant: Optional[float]
    remainder_constant: float  # measured C1
    N: int
    A: float
    B: float
    y_monotone: bool
    odd_bracket_lower_ok: Optional[bool]
    band_constants: Dict[str, float] = field(default_factory=dict)
    flags: Dict[str, bool] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "sum_q1": self.sum_q1,
            "sum_q2": self.sum_q2,
            "Q1": self.Q1,
            "Q2": self.Q2,
            "lever1": self.lever1,
            "lever2": self.lever2,
            "fixed_point": self.fixed_point,
            "fixed_point_constant": self.fixed_point_constant,
            "recursion_residual": self.recursion_residual,
            "closed_form_deviation": self.closed_form_deviation,
            "y_even_constant": self.y_even_constant,
            "odd_bracket_constant": self.odd_bracket_constant,
            "remainder_constant": self.remainder_constant,
            "N": self.N,
            "A": self.A,
            "B": self.B,
            "y_monotone": self.y_monotone,
            "odd_bracket_lower_ok": self.odd_bracket_lower_ok,
            "band_constants": dict(self.band_constants),
            "flags": dict(self.flags),
        }


@dataclass(frozen=True, eq=False)
class SphereQuadrature:
    """Nodes on the unit sphere S^{n-1} with weights summing to omega_n."""

    n: int
    nodes: np.ndarray
    weights: np.ndarray
    scheme: QuadratureScheme
    seed: Optional[int] = None

    def __len__(self) -> int:
        return int(self.weights.size)


# ============================================================================
# RUN CONFIGURATION
# ============================================================================


@dataclass
class RunConfig:
    """
    Command-line run configuration.

    Geometry (n, r1, r2 and eps or eps_list) has no defaults: it must come
    from the config file or the command line.
    """

    n: Optional[int] = None
    r1: Optional[float] = None
    r2: Optional[float] = None
    eps: Optional[float] = None
    eps_list: List[float] = field(default_factory=list)
    field: Any = None  # {"linear": [...]} or builtin name; None means x1
    tol: float = 1e-12
    seed: int = 12345
    output_format: Optional[str] = None  # "csv" | "json"; per-command default
    output_path: Optional[str] = None
    model: Optional[str] = None
    fit_threshold: float = 0.2
    log_convention: str = "delta"
    max_charges: int = 10_000_000
    polar_nodes: int = 24
    azimuth_nodes: int = 8
    pole_levels: int = 24
    circle_nodes: int = 256
    mc_samples: int = 20_000
