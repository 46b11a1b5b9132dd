"""Result documents (JSON) and plot-ready tables (CSV)."""

import json
import logging
import os

import pandas as pd

from app.config import FLOAT_FORMAT
from app.utils.errors import SpecValidationError

logger = logging.getLogger(__name__)


def complex_pairs(values):
    return [[float(v.real), float(v.imag)] for v in values]


def from_pairs(pairs):
    return tuple(complex(re, im) for re, im in pairs)


def branch_record(branch_id, origin, rapidities, residual, energy=None, oracle_residual=None, status="converged"):
    return {
        "branch_id": branch_id,
        "origin": origin,
        "frame": rapidities.frame.value if rapidities is not None else None,
        "rapidities": complex_pairs(rapidities.values) if rapidities is not None else [],
        "residual_max_abs": residual,
        "energy": energy,
        "oracle_residual": oracle_residual,
        "status": status,
    }


def trace_records(trace):
    return [
        {"xi": p.xi, "rapidities": complex_pairs(p.rapidities.values), "max_abs": p.max_abs, "iterations": p.iterations}
        for p in trace.path
    ]


def _wide(values, prefix=""):
    row = {}
    for a, v in enumerate(values):
        row[f"{prefix}re_{a}"] = v.real
        row[f"{prefix}im_{a}"] = v.imag
    return row


def trace_frame(trace):
    """One row per accepted point: xi, re_a, im_a, max_abs, iterations."""
    rows = []
    for p in trace.path:
        row = {"xi": p.xi}
        row.update(_wide(p.rapidities.values))
        row.update({"max_abs": p.max_abs, "iterations": p.iterations})
        rows.append(row)
    return pd.DataFrame(rows)


def branches_frame(records):
    rows = []
    for rec in records:
        row = {"branch_id": rec["branch_id"], "origin": rec["origin"], "status": rec["status"]}
        row.update(_wide(from_pairs(rec["rapidities"])))
        row.update(
            {"residual_max_abs": rec["residual_max_abs"], "energy": rec["energy"], "oracle_residual": rec["oracle_residual"]}
        )
        rows.append(row)
    return pd.DataFrame(rows)


def spectrum_frame(sectors):
    rows = [
        {"sector": m, "index": i, "eigenvalue": float(e)}
        for m, values in sorted(sectors.items())
        for i, e in enumerate(values)
    ]
    return pd.DataFrame(rows, columns=["sector", "index", "eigenvalue"])


def _ensure_dir(path):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)


def write_structured(path, document):
    _ensure_dir(path)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(document, indent=2, sort_keys=True))
        f.write("\n")
    logger.info("Wrote %s", path)


def write_tabular(path, frame):
    _ensure_dir(path)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    logger.info("Wrote %s (%d rows)", path, len(frame))


def read_structured(path):
    if not os.path.exists(path):
        raise FileNotFoundError(f"Results file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise SpecValidationError(f"{path} is not a structured results file: {e}") from e
