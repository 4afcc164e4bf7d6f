"""Deterministic numeric serialization shared by every output writer.

All floats are rendered with 17 significant digits so that parsing the
text reproduces the exact double, and JSON documents are emitted with
sorted keys and fixed layout so identical data gives identical bytes.
"""

from __future__ import annotations

import hashlib
import math

__all__ = ["fmt_float", "dumps_json", "dump_json", "config_hash"]


def fmt_float(x: float) -> str:
    if math.isnan(x) or math.isinf(x):
        raise ValueError("non-finite values are not serializable")
    return "%.17g" % x


def _emit(obj, indent: int, level: int) -> str:
    pad = " " * (indent * level)
    pad_in = " " * (indent * (level + 1))
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return fmt_float(obj)
    if isinstance(obj, str):
        out = obj.replace("\\", "\\\\").replace('"', '\\"')
        out = out.replace("\n", "\\n").replace("\r", "\\r").replace("\t", "\\t")
        return f'"{out}"'
    if isinstance(obj, (list, tuple)):
        if len(obj) == 0:
            return "[]"
        items = [_emit(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(pad_in + it for it in items) + "\n" + pad + "]"
    if isinstance(obj, dict):
        if len(obj) == 0:
            return "{}"
        parts = []
        for key in sorted(obj):
            if not isinstance(key, str):
                raise TypeError(f"JSON keys must be strings, got {type(key).__name__}")
            parts.append(pad_in + f'"{key}": ' + _emit(obj[key], indent, level + 1))
        return "{\n" + ",\n".join(parts) + "\n" + pad + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj, indent: int = 2) -> str:
    return _emit(obj, indent, 0) + "\n"


def dump_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(obj))


def config_hash(obj) -> str:
    """sha256 of the canonical JSON form; stable across reruns of the same config."""
    return hashlib.sha256(dumps_json(obj).encode("utf-8")).hexdigest()
