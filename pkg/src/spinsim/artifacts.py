"""Deterministic CSV and JSON writers.

CSV floats use 17 significant digits.  JSON floats use Python's shortest
round-trip repr, which restores the same double.  Both files start with the
same metadata (tool version, config hash, master seed, task).
"""
import csv
import io
import json
import math
import os

import numpy as np

from .errors import ConfigError


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        return format(x, ".17g")
    return str(x)


def csv_text(rows, meta):
    buf = io.StringIO()
    for key in sorted(meta):
        buf.write(f"# {key}: {meta[key]}\n")
    if rows:
        cols = list(rows[0])
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def json_text(result, meta):
    doc = {"metadata": _clean(meta), "result": _clean(result)}
    return json.dumps(doc, sort_keys=True, indent=1, allow_nan=False) + "\n"


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def ensure_writable(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output.dir: cannot create {path!r}: {exc}") from exc
    if not os.access(path, os.W_OK | os.X_OK):
        raise ConfigError(f"output.dir: {path!r} is not writable")


def write_text(path, text):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
