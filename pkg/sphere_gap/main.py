"""Command-line entry point for sphere_gap."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from sphere_gap import __version__
from sphere_gap.asymptotics import (
    compare_models,
    fit_rate,
    model_for,
    predicted_gap,
    predicted_gradient_lower,
    run_sweep,
)
from sphere_gap.config import ConfigManager, build_geometry, sweep_workers
from sphere_gap.errors import ComputationError, ConfigError, InvalidSweep
from sphere_gap.fields import create_field
from sphere_gap.images import perturb_magnitudes
from sphere_gap.logging_setup import setup_logging
from sphere_gap.models import ChargeSystem, RateKind, RateModel, RunConfig
from sphere_gap.oracle import default_quadrature, run_checks
from sphere_gap.output import (
    emit,
    fit_path_for,
    grid_csv,
    sweep_csv,
    sweep_dataframe,
    system_document,
    to_json,
)
from sphere_gap.potential import create_system, h_gradients, h_tail_error, h_values, potential_difference

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG_ERROR = 2
EXIT_COMPUTATION_ERROR = 3

# Formats each command can emit; the first is the default
COMMAND_FORMATS = {
    "diff": ("json",),
    "sweep": ("csv", "json"),
    "verify": ("json",),
    "charges": ("json",),
    "grid": ("csv",),
}

# Relative clearance kept from the conductor surfaces when sampling grids
GRID_CLEARANCE = 1e-9


def _parse_field(value: Optional[str]) -> Any:
    """--field value: builtin name or a JSON object such as {"linear": [1, 0, 0]}."""
    if value is None:
        return None
    text = value.strip()
    if text.startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"field: malformed JSON {value!r}: {e}")
    return text


def _output_format(config: RunConfig, command: str) -> str:
    allowed = COMMAND_FORMATS[command]
    fmt = config.output_format or allowed[0]
    if fmt not in allowed:
        raise ConfigError(f"{command} emits {' or '.join(allowed)}, not {fmt}")
    return fmt


def _output_path(config: RunConfig) -> Optional[Path]:
    return Path(config.output_path) if config.output_path else None


# ============================================================================
# SUBCOMMANDS
# ============================================================================


def cmd_diff(config: RunConfig, args: argparse.Namespace) -> int:
    """Potential difference, gradient lower bound and rate prediction for one eps."""
    _output_format(config, "diff")
    if config.eps is None and config.eps_list:
        if len(config.eps_list) > 1:
            raise ConfigError("diff takes a single eps; use sweep for several")
        config = ConfigManager.apply_overrides(config, eps=config.eps_list[0])
    cfg = build_geometry(config, "diff")
    field = create_field(config.field, cfg.n)

    system = create_system(cfg, config.tol, config.max_charges)
    result = potential_difference(system, field)
    bound = abs(result.value) / (2.0 * cfg.eps)

    a1 = field.axial_slope()
    gap = predicted_gap(cfg.n, cfg.r1, cfg.r2, cfg.eps, a1, config.log_convention)
    gradient = predicted_gradient_lower(cfg.n, cfg.r1, cfg.r2, cfg.eps, a1, config.log_convention)
    ratio = result.value / gap.formula_value if gap.formula_value != 0.0 else None

    document: Dict[str, Any] = {
        "command": "diff",
        "config": cfg.to_dict(),
        "field": field.label,
        "method": result.method.value,
        "delta_u": result.value,
        "tail_error": result.tail_error,
        "gradient_lower_bound": bound,
        "predicted_gap": gap.to_dict(),
        "predicted_gradient_lower": gradient.to_dict(),
        "ratio": ratio,
    }
    if isinstance(system, ChargeSystem):
        document["ladder_lengths"] = [len(system.ladder1), len(system.ladder2)]
        document["relative_tail"] = system.relative_tail

    emit(to_json(document), _output_path(config))
    return EXIT_OK


def _fit_document(table, config: RunConfig) -> Dict[str, Any]:
    model = RateModel(config.model) if config.model else model_for(table.n, RateKind.POTENTIAL_GAP)
    document: Dict[str, Any] = {
        "command": "sweep",
        "model": model.value,
        "threshold": config.fit_threshold,
        "log_convention": config.log_convention,
    }
    try:
        fit = fit_rate(
            table,
            model,
            config.fit_threshold,
            config.log_convention,
            raise_on_mismatch=False,
        )
        comparison = compare_models(table, log_convention=config.log_convention)
    except InvalidSweep as e:
        logger.warning(f"Rate fit skipped: {e}")
        document.update({"fit": None, "accepted": False, "error": str(e)})
        return document

    document["fit"] = fit.to_dict()
    document["accepted"] = fit.residual <= config.fit_threshold
    document["comparison"] = {m.value: residual for m, residual in comparison.items()}
    return document


def cmd_sweep(config: RunConfig, args: argparse.Namespace) -> int:
    """Sweep table over eps_list plus a rate fit."""
    fmt = _output_format(config, "sweep")
    if not config.eps_list and config.eps is not None:
        config = ConfigManager.apply_overrides(config, eps_list=[config.eps])
    cfg = build_geometry(config, "sweep")
    field = create_field(config.field, cfg.n)

    table = run_sweep(
        cfg,
        field,
        config.eps_list,
        config.tol,
        workers=sweep_workers(),
        max_charges=config.max_charges,
    )
    fit = _fit_document(table, config)
    out = _output_path(config)

    if fmt == "json":
        rows = sweep_dataframe(table).to_dict(orient="records")
        emit(to_json({"command": "sweep", "rows": rows, "fit": fit}), out)
    else:
        emit(sweep_csv(table), out)
        if out is not None:
            emit(to_json(fit), fit_path_for(out))

    if fit["fit"] is None:
        print(f"fit {fit['model']}: skipped ({fit['error']})", file=sys.stderr)
    else:
        print(
            f"fit {fit['model']}: coefficient={fit['fit']['coefficient']:.10g} "
            f"residual={fit['fit']['residual']:.3e} accepted={fit['accepted']}",
            file=sys.stderr,
        )
    return EXIT_OK


def cmd_verify(config: RunConfig, args: argparse.Namespace) -> int:
    """Oracle and diagnostics checks; exit 1 if any fails."""
    _output_format(config, "verify")
    cfg = build_geometry(config, "verify")
    field = create_field(config.field, cfg.n)
    system = create_system(cfg, config.tol, config.max_charges)

    if args.perturb_q is not None:
        if not isinstance(system, ChargeSystem):
            raise ConfigError("--perturb-q needs an image-charge system (n >= 3)")
        system = perturb_magnitudes(system, args.perturb_q)

    quad = default_quadrature(
        cfg.n,
        polar_nodes=config.polar_nodes,
        azimuth_nodes=config.azimuth_nodes,
        pole_levels=config.pole_levels,
        circle_nodes=config.circle_nodes,
        mc_samples=config.mc_samples,
        seed=config.seed,
    )
    checks = run_checks(system, field, quad, seed=config.seed)
    passed = all(check.passed for check in checks)

    document = {
        "command": "verify",
        "config": cfg.to_dict(),
        "field": field.label,
        "quadrature": {"scheme": quad.scheme.value, "nodes": len(quad)},
        "checks": [check.to_dict() for check in checks],
        "passed": passed,
    }
    emit(to_json(document), _output_path(config))
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_charges(config: RunConfig, args: argparse.Namespace) -> int:
    """Emit the image-charge system as JSON."""
    _output_format(config, "charges")
    cfg = build_geometry(config, "charges")
    if cfg.n == 2:
        raise ConfigError("closed form has no ladder: n = 2 uses the fixed-point formula")
    system = create_system(cfg, config.tol, config.max_charges)
    emit(to_json(system_document(system)), _output_path(config))
    return EXIT_OK


def _grid_points(cfg, size: int, extent: Optional[float]) -> np.ndarray:
    """Regular grid in the (x1, x2) plane with the conductors cut out."""
    if size < 2:
        raise ConfigError(f"grid_size must be >= 2, got {size}")
    if extent is None:
        extent = 2.0 * cfg.r_max + cfg.eps
    elif extent <= 0.0:
        raise ConfigError(f"extent must be > 0, got {extent}")
    axis = np.linspace(-extent, extent, size)
    x1, x2 = np.meshgrid(axis, axis, indexing="ij")
    points = np.zeros((size * size, cfg.n))
    points[:, 0] = x1.ravel()
    points[:, 1] = x2.ravel()

    keep = np.ones(len(points), dtype=bool)
    for index in (1, 2):
        sphere = cfg.sphere(index)
        distance = np.linalg.norm(points - sphere.center, axis=1)
        keep &= distance > sphere.radius * (1.0 + GRID_CLEARANCE)
    return points[keep]


def cmd_grid(config: RunConfig, args: argparse.Namespace) -> int:
    """h and grad h on a planar grid, as CSV for plotting."""
    _output_format(config, "grid")
    cfg = build_geometry(config, "grid")
    system = create_system(cfg, config.tol, config.max_charges)
    points = _grid_points(cfg, args.grid_size, args.extent)
    values = h_values(system, points)
    gradients = h_gradients(system, points)
    if isinstance(system, ChargeSystem):
        logger.info(f"Grid tail error at the origin: {h_tail_error(system, np.zeros(cfg.n)):.3e}")
    emit(grid_csv(points, values, gradients), _output_path(config))
    return EXIT_OK


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "diff": cmd_diff,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "charges": cmd_charges,
    "grid": cmd_grid,
}


# ============================================================================
# ARGUMENT PARSING
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--n", type=int, help="dimension (>= 2)")
    common.add_argument("--r1", type=float, help="radius of D1")
    common.add_argument("--r2", type=float, help="radius of D2")
    common.add_argument("--eps", type=float, nargs="+", help="gap half-width(s)")
    common.add_argument("--field", help='applied field: x<i>, saddle or {"linear": [...]}')
    common.add_argument("--tol", type=float, help="ladder truncation tolerance")
    common.add_argument("--seed", type=int, help="seed for sampled quadrature and checks")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument(
        "--model", choices=[m.value for m in RateModel], help="rate model to fit (sweep)"
    )
    common.add_argument(
        "--log-convention", choices=("eps", "delta"), help="log scale of the n = 3 rate"
    )
    common.add_argument(
        "--log-level",
        default="WARNING",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="logging level (default: WARNING)",
    )
    common.add_argument("--log-file", type=Path, help="also write logs to this file")

    parser = argparse.ArgumentParser(
        prog="sphere_gap",
        description="Image-charge potentials and field blow-up between two close spherical conductors.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    commands.add_parser("diff", parents=[common], help="potential difference for one eps")
    commands.add_parser("sweep", parents=[common], help="sweep eps and fit the blow-up rate")
    verify = commands.add_parser("verify", parents=[common], help="run oracle checks")
    verify.add_argument("--perturb-q", type=float, help=argparse.SUPPRESS)
    commands.add_parser("charges", parents=[common], help="emit the image-charge system")
    grid = commands.add_parser("grid", parents=[common], help="h and grad h on a planar grid")
    grid.add_argument("--grid-size", type=int, default=41, help="points per axis (default: 41)")
    grid.add_argument("--extent", type=float, help="half-width of the grid square")
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    eps: Optional[float] = None
    eps_list: Optional[List[float]] = None
    if args.eps is not None:
        if args.command == "sweep":
            eps_list = list(args.eps)
        elif len(args.eps) == 1:
            eps = args.eps[0]
        else:
            raise ConfigError(f"{args.command} takes a single --eps value")
    return {
        "n": args.n,
        "r1": args.r1,
        "r2": args.r2,
        "eps": eps,
        "eps_list": eps_list,
        "field": _parse_field(args.field),
        "tol": args.tol,
        "seed": args.seed,
        "output_path": args.out,
        "output_format": args.format,
        "model": args.model,
        "log_convention": args.log_convention,
    }


def main(argv: Optional[List[str]] = None) -> int:
    """
    Main entry point.

    Args:
        argv: Command-line arguments (default: sys.argv[1:]).

    Returns:
        Exit code: 0 ok, 1 verification failure, 2 usage or config error,
        3 computation error.
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_file, getattr(logging, args.log_level))
    logger.debug(f"sphere_gap {__version__}: {args.command}")

    try:
        config = ConfigManager(args.config).load()
        config = ConfigManager.apply_overrides(config, **_overrides(args))
        return COMMANDS[args.command](config, args)
    except ConfigError as e:
        logger.debug("Configuration error", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    except ComputationError as e:
        logger.debug("Computation error", exc_info=True)
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_COMPUTATION_ERROR
    except OSError as e:
        logger.debug("I/O error", exc_info=True)
        print(f"error: cannot write output: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    sys.exit(main())
