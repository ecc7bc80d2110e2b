"""CSV/JSON writers with fixed 17-significant-digit float formatting."""
from __future__ import annotations

import json
import math
import re
from pathlib import Path

import numpy as np

_MARK = re.compile(r'"\$F\$([^"]*)\$"')


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    if v is None:
        return ""
    if isinstance(v, (tuple, list)):
        return " ".join(fmt(x) for x in v)
    return str(v)


def write_csv(path, columns, rows) -> None:
    lines = [",".join(columns)]
    for r in rows:
        lines.append(",".join(fmt(r.get(c)) for c in columns))
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def _mark(obj):
    if isinstance(obj, dict):
        return {str(k): _mark(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_mark(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_mark(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f"$F${f:.17g}$" if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return _MARK.sub(r"\1", json.dumps(_mark(obj), indent=1, sort_keys=True))


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj) + "\n", encoding="ascii")
