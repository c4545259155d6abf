"""Reading and writing QGF files (JSON grid functions).

Layout::

    {"qgf": 1, "n": 2, "axes": [[0.0, 0.5, 1.0], [0.0, 1.0]],
     "values": [...], "mask": [...]}

Values are row-major with the last axis fastest; ``mask`` is optional.
Python's float repr is the shortest decimal that round-trips, so the files
reproduce the doubles bit for bit.
"""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

from .grid import GridError, GridFunction, Mesh

QGF_VERSION = 1


class QGFError(ValueError):
    """Malformed QGF document."""


def to_dict(f: GridFunction) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "qgf": QGF_VERSION,
        "n": f.n,
        "axes": [ax.tolist() for ax in f.mesh.axes],
        "values": f.values.reshape(-1).tolist(),
    }
    if f.mask is not None:
        doc["mask"] = f.mask.reshape(-1).tolist()
    return doc


def from_dict(doc: Any) -> GridFunction:
    if not isinstance(doc, dict):
        raise QGFError("QGF document must be a JSON object")
    if doc.get("qgf") != QGF_VERSION:
        raise QGFError(f"unsupported or missing qgf version: {doc.get('qgf')!r}")
    n = doc.get("n")
    if not isinstance(n, int) or isinstance(n, bool) or n <= 0:
        raise QGFError(f"n must be a positive integer, got {n!r}")
    axes = doc.get("axes")
    if not isinstance(axes, list) or len(axes) != n:
        raise QGFError(f"expected {n} axes")
    for k, ax in enumerate(axes):
        if not isinstance(ax, list) or not all(_is_number(c) for c in ax):
            raise QGFError(f"axis {k} must be a list of numbers")
        if any(b <= a for a, b in zip(ax, ax[1:])):
            raise QGFError(f"axis {k} is not strictly increasing")
        if any(c < 0.0 or c > 1.0 for c in ax):
            raise QGFError(f"axis {k} leaves [0, 1]")
    values = doc.get("values")
    size = int(np.prod([len(ax) for ax in axes]))
    if not isinstance(values, list) or len(values) != size:
        raise QGFError(f"expected {size} values, got {len(values) if isinstance(values, list) else values!r}")
    if not all(_is_number(v) for v in values):
        raise QGFError("values must be numbers")
    mask = doc.get("mask")
    if mask is not None:
        if not isinstance(mask, list) or len(mask) != size or not all(isinstance(m, bool) for m in mask):
            raise QGFError(f"mask must be a list of {size} booleans")
    try:
        return GridFunction(Mesh(axes), np.array(values, dtype=float), None if mask is None else np.array(mask))
    except GridError as exc:
        raise QGFError(str(exc)) from exc


def _is_number(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def dumps(f: GridFunction) -> str:
    return json.dumps(to_dict(f))


def loads(text: str) -> GridFunction:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise QGFError(f"not valid JSON: {exc}") from exc
    return from_dict(doc)


def write(f: GridFunction, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(f))
        fh.write("\n")


def read(path: str | os.PathLike) -> GridFunction:
    with open(path) as fh:
        return loads(fh.read())
