"""Quasi-copula axiom checks and signed n-box volumes.

All checks work on node values.  For masked grids (sub-quasi-copulas) the
monotone and Lipschitz checks compare each defined node with the previous
defined node on the same axis line, so gaps of undefined nodes are spanned
rather than skipped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

from .grid import GridFunction, NBox, evaluate

TOL = 1e-9
MAX_LISTED = 100


@dataclass(frozen=True)
class Violation:
    kind: str
    axis: int | None  # 0-based; None when the violation is not tied to an axis
    node: tuple[int, ...]
    magnitude: float
    coords: tuple[float, ...] = ()
    prev: tuple[int, ...] | None = None  # the node compared against, if any

    def describe(self) -> str:
        where = "(" + ", ".join(f"{c:.6g}" for c in self.coords) + ")"
        ax = "" if self.axis is None else f" on axis {self.axis + 1}"
        return f"{self.kind} violated{ax} at node {list(self.node)} {where}, magnitude {self.magnitude:.3g}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "axis": None if self.axis is None else self.axis + 1,
            "node_index": list(self.node),
            "magnitude": self.magnitude,
        }


@dataclass
class Report:
    """Outcome of one or more checks: pass/fail plus the first violations found."""

    name: str
    count: int = 0
    violations: list[Violation] = field(default_factory=list)
    parts: list["Report"] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.count == 0 and all(p.passed for p in self.parts)

    @property
    def total(self) -> int:
        return self.count + sum(p.total for p in self.parts)

    def __bool__(self) -> bool:
        return self.passed

    def all_violations(self) -> list[Violation]:
        out = list(self.violations)
        for p in self.parts:
            out.extend(p.all_violations())
        return out

    @property
    def first(self) -> Violation | None:
        vs = self.all_violations()
        return vs[0] if vs else None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "check": self.name,
            "passed": self.passed,
            "total_violations": self.total,
            "violations": [v.to_dict() for v in self.all_violations()[:MAX_LISTED]],
        }
        if self.parts:
            doc["checks"] = {p.name: p.passed for p in self.parts}
        return doc

    def summary(self) -> str:
        lines = [f"{self.name}: {'PASS' if self.passed else 'FAIL'}"]
        for p in self.parts:
            lines.append(f"  {p.name}: {'pass' if p.passed else 'FAIL'} ({p.total} violations)")
            if p.first is not None:
                lines.append(f"    first: {p.first.describe()}")
        if not self.parts and self.first is not None:
            lines.append(f"  {self.count} violations; first: {self.first.describe()}")
        return "\n".join(lines)


def _report(name: str, f: GridFunction, found: Iterable[tuple], kind: str) -> Report:
    """Build a report from (flat_node, axis, magnitude, prev_node) tuples."""
    found = sorted(found, key=lambda t: (t[0], -1 if t[1] is None else t[1]))
    shape = f.mesh.shape
    vs = []
    for flat, axis, mag, prev in found[:MAX_LISTED]:
        node = tuple(int(i) for i in np.unravel_index(flat, shape))
        coords = tuple(float(f.mesh.axes[k][i]) for k, i in enumerate(node))
        if prev is not None:
            prev = tuple(int(i) for i in np.unravel_index(prev, shape))
        vs.append(Violation(kind, axis, node, float(mag), coords, prev))
    return Report(name, len(found), vs)


def _require_unit(f: GridFunction) -> None:
    if not f.mesh.spans_unit_cube():
        raise ValueError("grounded/neutral checks need a mesh spanning [0, 1]^n")


def check_grounded(f: GridFunction, tol: float = TOL) -> Report:
    """f = 0 at every defined node having some coordinate equal to 0."""
    _require_unit(f)
    on_zero_face = np.zeros(f.mesh.shape, dtype=bool)
    for k in range(f.n):
        on_zero_face |= f.mesh.coordinate(k) == 0.0
    bad = on_zero_face & f.defined & (np.abs(f.values) > tol)
    flat = np.flatnonzero(bad)
    mags = np.abs(f.values.reshape(-1)[flat])
    return _report("grounded", f, [(i, None, m, None) for i, m in zip(flat, mags)], "grounded")


def check_neutral(f: GridFunction, tol: float = TOL) -> Report:
    """f(x) = x_k at every defined node whose other coordinates all equal 1."""
    _require_unit(f)
    found = []
    for k in range(f.n):
        line = [slice(None) if j == k else -1 for j in range(f.n)]
        dev = np.abs(f.values[tuple(line)] - f.mesh.axes[k])
        bad = (dev > tol) & f.defined[tuple(line)]
        for i in np.flatnonzero(bad):
            node = [len(ax) - 1 for ax in f.mesh.axes]
            node[k] = int(i)
            found.append((np.ravel_multi_index(node, f.mesh.shape), k, dev[i], None))
    return _report("neutral", f, found, "neutral")


def axis_steps(f: GridFunction, k: int):
    """(value step, coordinate step, node flat index, previous node flat index)
    between each defined node and the previous defined node along axis k."""
    shape = f.mesh.shape
    flat_ids = np.arange(f.mesh.size).reshape(shape)
    if f.mask is None:
        dv = np.diff(f.values, axis=k)
        dx = np.diff(f.mesh.coordinate(k), axis=k) * np.ones_like(dv)
        cur = np.delete(flat_ids, 0, axis=k)
        prev = np.delete(flat_ids, -1, axis=k)
        return dv.reshape(-1), dx.reshape(-1), cur.reshape(-1), prev.reshape(-1)
    pos = np.arange(shape[k]).reshape([-1 if j == k else 1 for j in range(f.n)])
    marked = np.where(f.mask, pos, -1)
    last = np.maximum.accumulate(marked, axis=k)
    pad = np.full_like(np.take(last, [0], axis=k), -1)
    before = np.concatenate([pad, np.delete(last, -1, axis=k)], axis=k)
    sel = f.mask & (before >= 0)
    prev_pos = np.where(sel, before, 0)
    prev_vals = np.take_along_axis(f.values, prev_pos, axis=k)
    prev_ids = np.take_along_axis(flat_ids, prev_pos, axis=k)
    coords = f.mesh.axes[k]
    dx = coords[np.broadcast_to(pos, shape)] - coords[prev_pos]
    return (
        (f.values - prev_vals)[sel],
        dx[sel],
        flat_ids[sel],
        prev_ids[sel],
    )


def check_increasing(f: GridFunction, tol: float = TOL) -> Report:
    """Node values do not decrease along any axis (beyond ``tol``)."""
    found = []
    for k in range(f.n):
        dv, _, cur, prev = axis_steps(f, k)
        for j in np.flatnonzero(dv < -tol):
            found.append((cur[j], k, -dv[j], int(prev[j])))
    return _report("increasing", f, found, "increasing")


def check_lipschitz(f: GridFunction, tol: float = TOL) -> Report:
    """Increments along each axis do not exceed the coordinate step (beyond ``tol``)."""
    found = []
    for k in range(f.n):
        dv, dx, cur, prev = axis_steps(f, k)
        excess = dv - dx
        for j in np.flatnonzero(excess > tol):
            found.append((cur[j], k, excess[j], int(prev[j])))
    return _report("lipschitz", f, found, "lipschitz")


def is_quasi_copula(f: GridFunction, tol: float = TOL) -> Report:
    parts = [check_grounded(f, tol), check_neutral(f, tol), check_increasing(f, tol), check_lipschitz(f, tol)]
    return Report("quasi-copula", parts=parts)


def cell_volumes(f: GridFunction) -> np.ndarray:
    """Signed volume of every elementary mesh cell (repeated differencing)."""
    vol = f.values
    for k in range(f.n):
        vol = np.diff(vol, axis=k)
    return vol


def check_cell_volumes(f: GridFunction, tol: float = TOL) -> Report:
    vol = cell_volumes(f)
    bad = np.flatnonzero(vol < -tol)
    # report the lower corner of each offending cell
    cells = np.unravel_index(bad, vol.shape)
    flat = np.ravel_multi_index(cells, f.mesh.shape) if bad.size else bad
    return _report(
        "cell-volume", f, [(i, None, -vol.reshape(-1)[c], None) for i, c in zip(flat, bad)], "cell-volume"
    )


def is_copula(f: GridFunction, tol: float = TOL) -> Report:
    """Quasi-copula axioms plus nonnegative volume on every mesh cell."""
    qc = is_quasi_copula(f, tol)
    return Report("copula", parts=qc.parts + [check_cell_volumes(f, tol)])


def box_volume(f: GridFunction | Callable[[np.ndarray], np.ndarray], box: NBox) -> float:
    """Inclusion-exclusion volume: corners with an even number of lower
    endpoints enter with +1, odd with -1.  May be negative."""
    corners = box.corners()
    pts = np.array([p for _, p in corners])
    vals = evaluate(f, pts) if isinstance(f, GridFunction) else np.asarray(f(pts), dtype=float)
    signs = np.array([(-1) ** (box.n - sum(bits)) for bits, _ in corners])
    return float(np.dot(signs, vals))


def frechet_violations(f: GridFunction, tol: float = TOL) -> int:
    """Number of nodes outside the Frechet-Hoeffding band W <= f <= M."""
    pts = f.mesh.nodes()
    lo = np.maximum(pts.sum(axis=1) - (f.n - 1), 0.0)
    hi = pts.min(axis=1)
    v = f.values.reshape(-1)
    return int(np.sum((v < lo - tol) | (v > hi + tol)))
