"""CSV and JSON emission with a versioned layout and atomic file writes."""

import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from .models import ChargeSystem, SweepTable

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1

# Fixed column order of sweep CSV files (documented in README.md)
SWEEP_COLUMNS = [
    "format_version",
    "n",
    "r1",
    "r2",
    "field",
    "eps",
    "delta",
    "d",
    "log_eps",
    "log_delta",
    "delta_u",
    "gradient_lower_bound",
    "Q1",
    "Q2",
    "M",
    "ladder1_length",
    "ladder2_length",
    "tail1",
    "tail2",
    "relative_tail",
    "failed",
    "error",
]


def _clean(value: Any) -> Any:
    """Replace non-finite floats by None so documents stay strict JSON."""
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    return value


def to_json(document: Dict[str, Any]) -> str:
    """Serialise a document, stamping format_version first."""
    stamped = {"format_version": FORMAT_VERSION}
    stamped.update(document)
    return json.dumps(_clean(stamped), indent=2, allow_nan=False) + "\n"


def sweep_dataframe(table: SweepTable) -> pd.DataFrame:
    """One row per eps in the fixed SWEEP_COLUMNS order."""
    records: List[Dict[str, Any]] = []
    for row in table.rows:
        records.append(
            {
                "format_version": FORMAT_VERSION,
                "n": table.n,
                "r1": table.r1,
                "r2": table.r2,
                "field": table.field_label,
                "eps": row.eps,
                "delta": row.delta,
                "d": row.d,
                "log_eps": row.log_eps,
                "log_delta": row.log_delta,
                "delta_u": row.delta_u,
                "gradient_lower_bound": row.gradient_lower_bound,
                "Q1": row.Q1,
                "Q2": row.Q2,
                "M": row.M,
                "ladder1_length": row.ladder1_length,
                "ladder2_length": row.ladder2_length,
                "tail1": row.tail1,
                "tail2": row.tail2,
                "relative_tail": row.relative_tail,
                "failed": int(row.failed),
                "error": row.error or "",
            }
        )
    return pd.DataFrame.from_records(records, columns=SWEEP_COLUMNS)


def sweep_csv(table: SweepTable) -> str:
    """Sweep table as CSV text with 17 significant digits."""
    return sweep_dataframe(table).to_csv(index=False, float_format="%.17g", lineterminator="\n")


def grid_csv(points, values, gradients) -> str:
    """Field grid as CSV: x1..xn, h, grad1..gradn."""
    n = points.shape[1]
    frame = pd.DataFrame(points, columns=[f"x{i + 1}" for i in range(n)])
    frame["h"] = values
    for i in range(n):
        frame[f"grad{i + 1}"] = gradients[:, i]
    return frame.to_csv(index=False, float_format="%.17g", lineterminator="\n")


def system_document(system: ChargeSystem) -> Dict[str, Any]:
    """ChargeSystem as {config, charges, Q1, Q2, M, omega_n, tail_bounds}."""
    charges = []
    for ladder in (system.ladder1, system.ladder2):
        for charge in ladder.charges:
            charges.append(
                {
                    "family": charge.family,
                    "m": charge.index,
                    "x": charge.axial_position,
                    "q": charge.magnitude,
                    "sign": charge.sign,
                }
            )
    return {
        "config": system.cfg.to_dict(),
        "charges": charges,
        "Q1": system.Q1,
        "Q2": system.Q2,
        "M": system.M,
        "omega_n": system.omega_n,
        "tail_bounds": list(system.tail_bounds),
    }


def write_atomic(path: Path, text: str) -> None:
    """Write text to path through a temporary file and a rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise
    logger.info(f"Wrote {path}")


def emit(text: str, path: Optional[Path] = None) -> None:
    """Write text to path atomically, or to stdout when path is None."""
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
    else:
        write_atomic(path, text)


def fit_path_for(path: Path) -> Path:
    """Companion path <stem>.fit.json of a sweep CSV."""
    path = Path(path)
    return path.with_name(f"{path.stem}.fit.json")
