"""
Rate predictions, epsilon sweeps, rate-model fits and ladder diagnostics.

log is the natural logarithm. The "delta" log convention uses eps/r1 and
the "eps" convention uses the raw eps; sweep rows carry both.
"""

import logging
import math
import pickle
from concurrent.futures import ProcessPoolExecutor
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np
from scipy.optimize import curve_fit

from .errors import ConfigError, InvalidSweep, ModelMismatch, SphereGapError
from .fields import HarmonicField, create_field
from .geometry import fixed_point_quadratic
from .images import DEFAULT_TOL, MAX_CHARGES
from .models import (
    ChargeSystem,
    DiagnosticsReport,
    FitResult,
    RateKind,
    RateModel,
    RatePrediction,
    SweepRow,
    SweepTable,
    TwoSphereConfig,
)
from .potential import create_system, potential_difference

logger = logging.getLogger(__name__)

LOG_CONVENTIONS = ("eps", "delta")
DEFAULT_FIT_THRESHOLD = 0.2
MAX_FIT_RELATIVE_TAIL = 1e-9
MIN_FIT_ROWS = 4
DEFAULT_BAND_LIMIT = 4.0


def _log_scale(eps: float, r1: float, log_convention: str) -> float:
    if log_convention not in LOG_CONVENTIONS:
        raise ConfigError(f"log convention must be one of {LOG_CONVENTIONS}, got {log_convention!r}")
    x = eps / r1 if log_convention == "delta" else eps
    return abs(math.log(x))


# ============================================================================
# RATE PREDICTIONS
# ============================================================================


def model_for(n: int, kind: RateKind) -> RateModel:
    """Rate model fixed by the dimension and the predicted quantity."""
    if kind is RateKind.POTENTIAL_GAP:
        if n == 2:
            return RateModel.SQRT_EPS
        return RateModel.INV_LOG_EPS if n == 3 else RateModel.CONSTANT
    if n == 2:
        return RateModel.INV_SQRT_EPS
    return RateModel.INV_EPS_LOG_EPS if n == 3 else RateModel.INV_EPS


def predicted_gap(
    n: int, r1: float, r2: float, eps: float, a1: float, log_convention: str = "eps"
) -> RatePrediction:
    """
    Leading-order potential gap.

    n = 2: 4 a1 sqrt(r1 r2/(r1+r2)) sqrt(eps), exact coefficient.
    n = 3: a1 (r1 r2/(r1+r2)) / |log eps|, up to an unknown constant.
    n >= 4: a1 r1 r2/(r1+r2), up to an unknown constant.
    """
    harmonic = r1 * r2 / (r1 + r2)
    model = model_for(n, RateKind.POTENTIAL_GAP)
    if n == 2:
        value = 4.0 * a1 * math.sqrt(harmonic) * math.sqrt(eps)
    elif n == 3:
        value = a1 * harmonic / _log_scale(eps, r1, log_convention)
    else:
        value = a1 * harmonic
    return RatePrediction(n, RateKind.POTENTIAL_GAP, value, model, n != 2, log_convention)


def predicted_gradient_lower(
    n: int, r1: float, r2: float, eps: float, a1: float, log_convention: str = "eps"
) -> RatePrediction:
    """Predicted gap divided by the gap width 2 eps."""
    gap = predicted_gap(n, r1, r2, eps, a1, log_convention)
    return RatePrediction(
        n,
        RateKind.GRADIENT_LOWER,
        gap.formula_value / (2.0 * eps),
        model_for(n, RateKind.GRADIENT_LOWER),
        gap.constant_unknown,
        log_convention,
    )


# ============================================================================
# SWEEPS
# ============================================================================


def _validate_eps_list(eps_list: Sequence[float]) -> List[float]:
    values = [float(e) for e in eps_list]
    if not values:
        raise InvalidSweep("eps list is empty")
    if any(not math.isfinite(e) or e <= 0.0 for e in values):
        raise InvalidSweep(f"every eps must be finite and > 0, got {values}")
    if len(set(values)) != len(values):
        raise InvalidSweep(f"duplicate eps in sweep: {values}")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise InvalidSweep(f"eps list must be strictly decreasing, got {values}")
    return values


def _sweep_row(cfg: TwoSphereConfig, field: HarmonicField, tol: float, max_charges: int) -> SweepRow:
    row = SweepRow(eps=cfg.eps, delta=cfg.delta, d=cfg.d)
    try:
        system = create_system(cfg, tol, max_charges)
        result = potential_difference(system, field)
    except SphereGapError as e:
        logger.warning(f"Sweep row eps={cfg.eps:.3e} failed: {e}")
        row.failed = True
        row.error = f"{type(e).__name__}: {e}"
        return row

    row.delta_u = result.value
    row.gradient_lower_bound = abs(result.value) / (2.0 * cfg.eps)
    if isinstance(system, ChargeSystem):
        row.Q1, row.Q2, row.M = system.Q1, system.Q2, system.M
        row.ladder1_length = len(system.ladder1)
        row.ladder2_length = len(system.ladder2)
        row.tail1, row.tail2 = system.tail_bounds
        row.relative_tail = system.relative_tail
    return row


def _sweep_task(args) -> SweepRow:
    return _sweep_row(*args)


def _picklable(obj) -> bool:
    try:
        pickle.dumps(obj)
    except (pickle.PicklingError, AttributeError, TypeError):
        return False
    return True


def run_sweep(
    base_cfg: TwoSphereConfig,
    H,
    eps_list: Sequence[float],
    tol: float = DEFAULT_TOL,
    workers: int = 1,
    max_charges: int = MAX_CHARGES,
) -> SweepTable:
    """
    Compute one row per eps with (n, r1, r2, H) fixed.

    Rows are independent; with workers > 1 they run in a process pool and
    are gathered in input order. A failing row is recorded, not raised.

    Args:
        base_cfg: Configuration whose eps is replaced row by row.
        H: Applied field.
        eps_list: Strictly decreasing gap half-widths.
        tol: Ladder truncation tolerance.
        workers: Process count; a field that cannot be pickled runs serially.
        max_charges: Ladder length cap.

    Returns:
        SweepTable in eps_list order.

    Raises:
        InvalidSweep: If eps_list is empty, unordered or has duplicates.
    """
    values = _validate_eps_list(eps_list)
    field = create_field(H, base_cfg.n)
    tasks = [(base_cfg.with_eps(eps), field, tol, max_charges) for eps in values]
    if workers > 1 and not _picklable(field):
        logger.warning(f"Field {field.label} cannot be sent to worker processes; running the sweep serially")
        workers = 1

    logger.info(
        f"Sweep n={base_cfg.n} r1={base_cfg.r1:g} r2={base_cfg.r2:g} over "
        f"{len(values)} eps values ({workers} worker(s))"
    )
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as executor:
            rows = list(executor.map(_sweep_task, tasks))
    else:
        rows = [_sweep_task(task) for task in tasks]

    failed = sum(row.failed for row in rows)
    if failed:
        logger.warning(f"{failed} of {len(rows)} sweep rows failed")
    return SweepTable(base_cfg.n, base_cfg.r1, base_cfg.r2, field.label, rows)


# ============================================================================
# RATE FITS
# ============================================================================


def _basis(model: RateModel, eps: np.ndarray, logs: np.ndarray) -> np.ndarray:
    if model is RateModel.SQRT_EPS:
        return np.sqrt(eps)
    if model is RateModel.INV_LOG_EPS:
        return 1.0 / logs
    if model is RateModel.CONSTANT:
        return np.ones_like(eps)
    if model is RateModel.INV_SQRT_EPS:
        return 1.0 / np.sqrt(eps)
    if model is RateModel.INV_EPS_LOG_EPS:
        return 1.0 / (eps * logs)
    return 1.0 / eps


def _is_gradient_model(model: RateModel) -> bool:
    return model in (RateModel.INV_SQRT_EPS, RateModel.INV_EPS_LOG_EPS, RateModel.INV_EPS)


def _fit_rows(table: SweepTable, max_relative_tail: float) -> List[SweepRow]:
    rows = [
        row
        for row in table.usable_rows
        if row.relative_tail <= max_relative_tail and row.delta_u not in (None, 0.0)
    ]
    if len(rows) < MIN_FIT_ROWS:
        raise InvalidSweep(
            f"rate fit needs at least {MIN_FIT_ROWS} usable rows, got {len(rows)} "
            f"of {len(table.rows)}"
        )
    return rows


def _fit(table: SweepTable, model: RateModel, log_convention: str, max_relative_tail: float) -> FitResult:
    rows = _fit_rows(table, max_relative_tail)
    eps = np.array([row.eps for row in rows])
    logs = np.array([_log_scale(row.eps, table.r1, log_convention) for row in rows])
    if _is_gradient_model(model):
        y = np.array([row.gradient_lower_bound for row in rows])
    else:
        y = np.array([row.delta_u for row in rows])
    basis = _basis(model, eps, logs)

    guess = float(np.median(y / basis))
    popt, _ = curve_fit(lambda f, coefficient: coefficient * f, basis, y, p0=[guess], sigma=np.abs(y))
    coefficient = float(popt[0])
    residual = float(np.max(np.abs(y - coefficient * basis) / np.abs(y)))
    return FitResult(
        model=model,
        coefficient=coefficient,
        residual=residual,
        fit_range=(float(eps.min()), float(eps.max())),
        log_convention=log_convention,
        rows_used=len(rows),
    )


def fit_rate(
    table: SweepTable,
    model: RateModel,
    threshold: float = DEFAULT_FIT_THRESHOLD,
    log_convention: str = "delta",
    max_relative_tail: float = MAX_FIT_RELATIVE_TAIL,
    raise_on_mismatch: bool = True,
) -> FitResult:
    """
    Fit quantity = coefficient * basis(eps) by relative least squares.

    Gap models fit the delta_u column, gradient models the lower-bound
    column. Rows whose ladders were truncated above max_relative_tail are
    left out.

    Raises:
        InvalidSweep: If fewer than 4 usable rows remain.
        ModelMismatch: If the max relative misfit exceeds threshold.
    """
    fit = _fit(table, model, log_convention, max_relative_tail)
    logger.info(
        f"Fit {model.value}: coefficient={fit.coefficient:.10g} residual={fit.residual:.3e} "
        f"over eps in [{fit.fit_range[0]:.1e}, {fit.fit_range[1]:.1e}]"
    )
    if raise_on_mismatch and fit.residual > threshold:
        raise ModelMismatch(
            f"{model.value} misfits the sweep by {fit.residual:.3g} (threshold {threshold:g})"
        )
    return fit


def compare_models(
    table: SweepTable,
    models: Optional[Iterable[RateModel]] = None,
    log_convention: str = "delta",
    max_relative_tail: float = MAX_FIT_RELATIVE_TAIL,
) -> Dict[RateModel, float]:
    """Max relative misfit of each candidate model on the same table."""
    if models is None:
        models = (RateModel.SQRT_EPS, RateModel.INV_LOG_EPS, RateModel.CONSTANT)
    return {
        model: _fit(table, model, log_convention, max_relative_tail).residual for model in models
    }


# ============================================================================
# LADDER DIAGNOSTICS
# ============================================================================


def _band(value: float) -> float:
    """Factor by which a ratio that should be about 1 is off."""
    if not value > 0.0 or not math.isfinite(value):
        return math.inf
    return max(value, 1.0 / value)


def _settles_from_above(values: np.ndarray, limit: float, step_ratio: float, delta: float) -> bool:
    """
    True if values fall strictly toward limit until they reach roundoff.

    Each step shrinks values - limit by about step_ratio, so the floor is
    set where a step is still 64 ulp wide. Past the floor every term must
    stay within it of limit.
    """
    floor = 64.0 * np.finfo(float).eps * (1.0 + delta) / max(step_ratio, np.finfo(float).eps)
    gap = values - limit
    settled = np.flatnonzero(gap <= floor)
    stop = int(settled[0]) if settled.size else gap.size
    head_ok = bool(np.all(np.diff(values[:stop]) < 0.0))
    return head_ok and bool(np.all(np.abs(gap[stop:]) <= floor))


def diagnostics(system: ChargeSystem, band_limit: float = DEFAULT_BAND_LIMIT) -> DiagnosticsReport:
    """
    Sequence and band diagnostics of an assembled system.

    The family-1 positions y_m = c_{1,m}/r1 are checked against the
    two-step recursion y' y + alpha y' - beta y - gamma = 0, against its
    closed form 1/((1/z0 + B) A^k - B) + p and against the harmonic-phase
    approximations of the even and odd subsequences. Violated bands are
    flagged, never raised.
    """
    cfg = system.cfg
    d, delta = cfg.d, cfg.delta
    a = d / (d + 1.0)
    root = math.sqrt(a) * math.sqrt(delta)
    s = 1.0 + d + 2.0 * delta
    alpha = (d + (1.0 + 3.0 * d) * delta + 2.0 * delta**2) / s
    beta_ = (d + (3.0 + d) * delta + 2.0 * delta**2) / s
    gamma_ = (4.0 * d * delta + 3.0 * (1.0 + d) * delta**2 + 2.0 * delta**3) / s
    p = fixed_point_quadratic(d, delta)

    y = system.ladder1.positions / cfg.r1
    even, odd = y[0::2], y[1::2]

    recursion = even[1:] * even[:-1] + alpha * even[1:] - beta_ * even[:-1] - gamma_
    recursion_residual = float(np.max(np.abs(recursion))) if recursion.size else 0.0

    # closed form through w_k = 1/(y_2k - p) = A w_{k-1} + 1/(beta - p)
    A_minus_1 = (alpha - beta_ + 2.0 * p) / (beta_ - p)
    log_A = math.log1p(A_minus_1)
    B = 1.0 / (alpha - beta_ + 2.0 * p)
    z0 = 1.0 + delta - p

    K0 = math.log(2.0) / 8.0 * root / delta
    k_max = min(max(1, int(K0)), even.size - 1)
    ks = np.arange(1, k_max + 1)
    if ks.size:
        w_measured = 1.0 / (even[ks] - p)
        remainder = np.abs(w_measured - 1.0 - ks / a) / (a**-1.5 * ks**2 * math.sqrt(delta))
        C1 = float(np.max(remainder))
    else:
        C1 = 1.0
    if not C1 > 0.0:
        C1 = 1.0
    N = max(1, math.ceil(K0 / C1))

    k_cf = np.arange(0, min(N, even.size - 1) + 1)
    w_cf = np.exp(k_cf * log_A) / z0 + B * np.expm1(k_cf * log_A)
    y_cf = 1.0 / w_cf + p
    closed_form_deviation = float(np.max(np.abs(y_cf - even[k_cf]) / np.abs(even[k_cf])))
    y_even_constant = float(
        np.max(np.abs(even[k_cf] - a / (k_cf + a))) / root
    )

    odd_tail = odd[N:]
    if odd_tail.size:
        ratio = -odd_tail / root
        odd_bracket_constant: Optional[float] = float(np.max(ratio))
        odd_bracket_lower_ok: Optional[bool] = bool(np.min(ratio) > 1.0)
    else:
        odd_bracket_constant = None
        odd_bracket_lower_ok = None

    y_monotone = _settles_from_above(even, p, A_minus_1 / (1.0 + A_minus_1), delta)

    w1, w2 = system.ladder1.weights, system.ladder2.weights
    log_delta = abs(math.log(delta))
    if cfg.n == 3:
        sum_q1 = math.fsum(system.ladder1.magnitudes.tolist())
        sum_q2 = math.fsum(system.ladder2.magnitudes.tolist())
        sum_bands = {
            "sum_q1": _band(sum_q1 / (a * log_delta)),
            "sum_q2": _band(sum_q2 / (log_delta / (d + 1.0))),
        }
    else:
        sum_q1 = math.fsum(w1.tolist())
        sum_q2 = math.fsum(w2.tolist())
        sum_bands = {"sum_q1": _band(sum_q1), "sum_q2": _band(sum_q2)}

    lever1 = math.fsum((system.ladder1.signs * system.ladder1.positions * w1).tolist())
    lever2 = math.fsum((system.ladder2.signs * system.ladder2.positions * w2).tolist())
    band_constants = dict(sum_bands)
    band_constants["Q1"] = _band(system.Q1 * (d + 1.0))
    band_constants["Q2"] = _band(system.Q2 * (d + 1.0) / d)
    band_constants["lever1"] = _band(abs(lever1) / cfg.r1)
    band_constants["lever2"] = _band(abs(lever2) / cfg.r2)

    flags = {
        "recursion": recursion_residual < 1e-12,
        "closed_form": closed_form_deviation < 1e-10,
        "y_monotone": y_monotone,
        "bands": all(value <= band_limit for value in band_constants.values()),
    }
    if odd_bracket_lower_ok is not None:
        flags["odd_bracket"] = odd_bracket_lower_ok
    for name, ok in flags.items():
        if not ok:
            logger.warning(f"Diagnostic {name} violated for {cfg.to_dict()}")

    return DiagnosticsReport(
        config=cfg,
        sum_q1=sum_q1,
        sum_q2=sum_q2,
        Q1=system.Q1,
        Q2=system.Q2,
        lever1=lever1,
        lever2=lever2,
        fixed_point=p,
        fixed_point_constant=abs(p - 2.0 * root) / delta,
        recursion_residual=recursion_residual,
        closed_form_deviation=closed_form_deviation,
        y_even_constant=y_even_constant,
        odd_bracket_constant=odd_bracket_constant,
        remainder_constant=C1,
        N=N,
        A=1.0 + A_minus_1,
        B=B,
        y_monotone=y_monotone,
        odd_bracket_lower_ok=odd_bracket_lower_ok,
        band_constants=band_constants,
        flags=flags,
    )
