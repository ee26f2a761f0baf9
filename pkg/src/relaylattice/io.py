"""Deterministic CSV and JSON emission shared by the pipelines."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from typing import Iterable, Sequence


def fmt(x) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(x, bool):
        return str(x).lower()
    if isinstance(x, float):
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return format(x, ".17g")
    if hasattr(x, "dtype") and getattr(x.dtype, "kind", "") == "f":
        return format(float(x), ".17g")
    return str(x)


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """RFC 4180 CSV with CRLF line ends."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def write_text(path, text: str) -> str:
    """Write ``text`` and return its sha256 hex digest."""
    data = text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "item") and hasattr(obj, "dtype"):
        return obj.item()
    return obj


def json_text(obj) -> str:
    # repr round-trips doubles exactly
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"
