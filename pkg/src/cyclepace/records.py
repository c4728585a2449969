"""Deterministic CSV/JSON writers with provenance metadata."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from . import __version__

CSV_DIGITS = 9


def fmt(value) -> str:
    """Fixed 9-significant-digit rendering for floats; other values pass through ``str``."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float) or hasattr(value, "dtype"):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.{CSV_DIGITS}g}"
    return str(value)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def _finite(obj):
    # JSON has no inf/nan; DNF times become null
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, Mapping):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_finite(v) for v in obj]
    if hasattr(obj, "dtype"):
        return _finite(obj.item())
    return obj


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_finite(obj), indent=2) + "\n")
    return path


def sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def meta_block(seed: int | None, inputs: Mapping[str, str | Path]) -> dict:
    """Tool version, seed and content hashes of every input file, keyed by role."""
    return {
        "tool": "cyclepace",
        "version": __version__,
        "seed": seed,
        "inputs": {role: {"file": Path(p).name, "sha256": sha256_file(p)} for role, p in sorted(inputs.items())},
    }
