"""Deterministic JSON output with floats at 17 significant digits.

The standard encoder prints the shortest round-trip repr, which is fine
for reading back but not a fixed format; certificates and reports want
one spelling per value so files compare byte for byte.
"""
from __future__ import annotations

import json
import math

import numpy as np


def format_float(x: float) -> str:
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        raise ValueError(f"non-finite float {x} has no JSON spelling")
    s = format(x, ".17g")
    if "e" not in s and "." not in s:
        s += ".0"
    return s


def _encode(obj, indent, level, out):
    pad = "\n" + " " * (indent * (level + 1)) if indent else ""
    end = "\n" + " " * (indent * level) if indent else ""
    sep = "," if indent else ", "
    if obj is None or isinstance(obj, (bool, np.bool_)):
        out.append(json.dumps(None if obj is None else bool(obj)))
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(format_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{")
        for k, (key, val) in enumerate(obj.items()):
            if not isinstance(key, str):
                raise TypeError(f"JSON object keys must be strings, got {key!r}")
            out.append((sep if k else "") + pad + json.dumps(key) + ": ")
            _encode(val, indent, level + 1, out)
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        items = list(obj)
        if not items:
            out.append("[]")
            return
        # scalar rows stay on one line
        flat = all(not isinstance(v, (dict, list, tuple, np.ndarray)) for v in items)
        out.append("[")
        for k, val in enumerate(items):
            if k:
                out.append(", " if flat else sep)
            if not flat:
                out.append(pad)
            _encode(val, indent, level + 1, out)
        out.append("]" if flat else end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    out = []
    _encode(obj, indent, 0, out)
    return "".join(out) + "\n"


loads = json.loads
