"""Extending a sub-quasi-copula from a product of closed sets to [0, 1]^n.

Each axis set is a finite union of closed intervals (points allowed) that
contains 0 and 1.  Its complement splits into open gaps; the closures of the
gaps together with the nontrivial intervals of the set tile [0, 1].

On the grid, a node coordinate is *fixed* when it lies in the axis set and
*free* when it lies strictly inside a gap.  A node whose free axes form the
set S sits inside the |S|-dimensional box spanned by the enclosing gaps,
and every face of that box has fewer free axes.  Filling nodes level by
level (|S| = 1: segments, |S| = 2: 2-faces, ...) with the local patch bounds
of each box yields the largest (``upper``) or smallest (``lower``)
quasi-copula extending the data.
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .axioms import TOL, Report, Violation, axis_steps, is_quasi_copula
from .grid import RANGE_SLACK, GridFunction, Mesh, merge_axis
from .patchwork import envelope_bounds


class DomainError(ValueError):
    pass


class SubQuasiCopulaError(ValueError):
    pass


class ExtensionError(RuntimeError):
    """Internal consistency failure while filling faces (must not happen for valid input)."""


@dataclass(frozen=True)
class AxisDomain:
    """Sorted, pairwise disjoint closed intervals in [0, 1]; degenerate pairs are points."""

    intervals: tuple[tuple[float, float], ...]

    def __init__(self, intervals: Sequence[Sequence[float]]):
        ivs = []
        for iv in intervals:
            if len(iv) != 2:
                raise DomainError(f"interval must be a [lo, hi] pair, got {iv!r}")
            lo, hi = float(iv[0]), float(iv[1])
            if not 0.0 <= lo <= hi <= 1.0:
                raise DomainError(f"interval [{lo}, {hi}] is not a closed interval inside [0, 1]")
            ivs.append((lo, hi))
        if not ivs:
            raise DomainError("axis domain is empty")
        for (_, hi), (lo, _) in zip(ivs, ivs[1:]):
            if lo <= hi:
                raise DomainError("intervals must be sorted and pairwise disjoint")
        object.__setattr__(self, "intervals", tuple(ivs))

    @classmethod
    def full(cls) -> "AxisDomain":
        return cls([(0.0, 1.0)])

    def contains(self, t, tol: float = RANGE_SLACK) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        hit = np.zeros(t.shape, dtype=bool)
        for lo, hi in self.intervals:
            hit |= (t >= lo - tol) & (t <= hi + tol)
        return hit

    def to_list(self) -> list[list[float]]:
        return [[lo, hi] for lo, hi in self.intervals]


@dataclass(frozen=True)
class AxisDecomposition:
    inner: tuple[tuple[float, float], ...]  # nontrivial intervals of the set
    gaps: tuple[tuple[float, float], ...]  # closures of the complement's open gaps
    tiles: tuple[tuple[float, float, str], ...]  # both, left to right, tagged "I" / "O"

    @property
    def endpoints(self) -> list[float]:
        pts = {lo for lo, _, _ in self.tiles} | {hi for _, hi, _ in self.tiles}
        return sorted(pts)


def axis_decompose(d: AxisDomain) -> AxisDecomposition:
    ivs = d.intervals
    if ivs[0][0] != 0.0 or ivs[-1][1] != 1.0:
        raise DomainError("axis domain must contain 0 and 1")
    inner = tuple((lo, hi) for lo, hi in ivs if hi > lo)
    gaps = tuple((hi, lo) for (_, hi), (lo, _) in zip(ivs, ivs[1:]))
    tiles = sorted([(lo, hi, "I") for lo, hi in inner] + [(lo, hi, "O") for lo, hi in gaps])
    return AxisDecomposition(inner, gaps, tuple(tiles))


@dataclass(frozen=True, eq=False)
class ProductDomain:
    axes: tuple[AxisDomain, ...]
    decompositions: tuple[AxisDecomposition, ...] = field(init=False)

    def __init__(self, axes: Sequence[AxisDomain | Sequence[Sequence[float]]]):
        doms = tuple(a if isinstance(a, AxisDomain) else AxisDomain(a) for a in axes)
        if not doms:
            raise DomainError("need at least one axis")
        object.__setattr__(self, "axes", doms)
        object.__setattr__(self, "decompositions", tuple(axis_decompose(a) for a in doms))

    @property
    def n(self) -> int:
        return len(self.axes)

    def rectangles(self):
        """Yield ``(s, box)`` for every product of tiles, s in lexicographic order."""
        tiles = [dec.tiles for dec in self.decompositions]
        for s in itertools.product(*[range(len(t)) for t in tiles]):
            yield s, [tiles[i][j][:2] for i, j in enumerate(s)]

    def contains(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(pts)
        hit = np.ones(len(pts), dtype=bool)
        for k, ax in enumerate(self.axes):
            hit &= ax.contains(pts[:, k])
        return hit

    def node_mask(self, mesh: Mesh) -> np.ndarray:
        mask = np.ones(mesh.shape, dtype=bool)
        for k, ax in enumerate(self.axes):
            shape = [1] * mesh.n
            shape[k] = -1
            mask &= ax.contains(mesh.axes[k]).reshape(shape)
        return mask

    def default_mesh(self, refine: int = 8) -> Mesh:
        """Every tile split into ``refine`` equal parts."""
        if refine < 1:
            raise ValueError("refine must be >= 1")
        axes = []
        for dec in self.decompositions:
            parts = [np.linspace(lo, hi, refine + 1) for lo, hi, _ in dec.tiles]
            axes.append(merge_axis(dec.endpoints, *parts))
        return Mesh(axes)

    def to_dict(self) -> dict[str, Any]:
        return {"n": self.n, "axes": [a.to_list() for a in self.axes]}

    @classmethod
    def from_dict(cls, doc: Any) -> "ProductDomain":
        if not isinstance(doc, dict) or not isinstance(doc.get("axes"), list):
            raise DomainError("domain document needs an 'axes' list")
        n = doc.get("n", len(doc["axes"]))
        if n != len(doc["axes"]):
            raise DomainError(f"n = {n} but {len(doc['axes'])} axes given")
        try:
            return cls([AxisDomain(ax) for ax in doc["axes"]])
        except TypeError as exc:
            raise DomainError(f"malformed axis list: {exc}") from exc

    @classmethod
    def read(cls, path: str | os.PathLike) -> "ProductDomain":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True, eq=False)
class SubQuasiCopula:
    """Masked grid of Q* values; defined exactly on the mesh nodes inside the domain."""

    domain: ProductDomain
    values: GridFunction

    def __post_init__(self):
        dom, f = self.domain, self.values
        if f.n != dom.n:
            raise SubQuasiCopulaError(f"grid has dimension {f.n}, domain {dom.n}")
        if not f.mesh.spans_unit_cube():
            raise SubQuasiCopulaError("sub-quasi-copula mesh must span [0, 1]^n")
        for k, dec in enumerate(dom.decompositions):
            ax = f.mesh.axes[k]
            for e in dec.endpoints:
                if np.min(np.abs(ax - e)) > RANGE_SLACK:
                    raise SubQuasiCopulaError(f"tile endpoint {e} is not a node of axis {k + 1}")
        expected = dom.node_mask(f.mesh)
        if f.mask is None or not np.array_equal(f.mask, expected):
            raise SubQuasiCopulaError("mask must mark exactly the nodes inside the domain")

    @property
    def n(self) -> int:
        return self.domain.n

    @classmethod
    def from_function(
        cls,
        domain: ProductDomain,
        func: Callable[[np.ndarray], np.ndarray],
        refine: int = 8,
        mesh: Mesh | None = None,
    ) -> "SubQuasiCopula":
        """Tabulate ``func`` on the domain nodes of ``mesh`` (default: every tile split ``refine`` times)."""
        mesh = domain.default_mesh(refine) if mesh is None else mesh
        mask = domain.node_mask(mesh)
        vals = np.zeros(mesh.size)
        nodes = mesh.nodes()
        flat = mask.reshape(-1)
        vals[flat] = func(nodes[flat])
        return cls(domain, GridFunction(mesh, vals, mask))

    def check(self, tol: float = TOL) -> Report:
        return is_quasi_copula(self.values, tol)


# ---------------------------------------------------------------------------


def segment_bounds(alpha: float, beta: float, a: float, b: float, x, mode: str = "upper"):
    """Extreme increasing 1-Lipschitz functions on [a, b] with values alpha at a, beta at b."""
    x_arr = np.asarray(x, dtype=float)
    if not a < b:
        raise ValueError(f"need a < b, got [{a}, {b}]")
    if np.any(x_arr < a - RANGE_SLACK) or np.any(x_arr > b + RANGE_SLACK):
        raise ValueError("x outside [a, b]")
    if not -RANGE_SLACK <= beta - alpha <= b - a + RANGE_SLACK:
        raise ValueError(f"need 0 <= beta - alpha <= b - a, got {beta - alpha} vs {b - a}")
    up, lo = envelope_bounds([np.float64(alpha)], [np.float64(beta)], [x_arr - a], [x_arr - b])
    out = up if mode == "upper" else lo if mode == "lower" else None
    if out is None:
        raise ValueError(f"mode must be 'upper' or 'lower', got {mode!r}")
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class _Axis:
    coords: np.ndarray
    fixed: np.ndarray  # indices of nodes inside the axis set
    gaps: list[tuple[int, int, np.ndarray]]  # (left fixed index, right fixed index, free indices)


def _prepare_axis(coords: np.ndarray, dom: AxisDomain) -> _Axis:
    inside = dom.contains(coords)
    fixed = np.flatnonzero(inside)
    gaps = []
    free = np.flatnonzero(~inside)
    if free.size:
        # consecutive runs of free nodes share their enclosing fixed nodes
        breaks = np.flatnonzero(np.diff(free) > 1) + 1
        for run in np.split(free, breaks):
            gaps.append((int(run[0]) - 1, int(run[-1]) + 1, run))
    return _Axis(coords, fixed, gaps)


def extension_mesh(sq: SubQuasiCopula, refine: int = 8) -> Mesh:
    """The sub-quasi-copula's mesh plus ``refine`` equal parts of every gap."""
    if refine < 1:
        raise ValueError("refine must be >= 1")
    axes = []
    for k, dec in enumerate(sq.domain.decompositions):
        parts = [np.linspace(lo, hi, refine + 1) for lo, hi in dec.gaps]
        axes.append(merge_axis(sq.values.mesh.axes[k], *parts))
    return Mesh(axes)


def _embed(sq: SubQuasiCopula, mesh: Mesh) -> tuple[np.ndarray, np.ndarray]:
    """Q* copied onto ``mesh``: values (NaN where undefined) and the defined mask."""
    mask = sq.domain.node_mask(mesh)
    src = sq.values
    lookup = []
    for k in range(mesh.n):
        sax = src.mesh.axes[k]
        j = np.clip(np.searchsorted(sax, mesh.axes[k]), 0, len(sax) - 1)
        j_left = np.clip(j - 1, 0, len(sax) - 1)
        pick = np.where(np.abs(sax[j_left] - mesh.axes[k]) < np.abs(sax[j] - mesh.axes[k]), j_left, j)
        lookup.append(pick)
    vals = src.values[np.ix_(*lookup)].copy()
    if not np.all(src.mask[np.ix_(*lookup)][mask]):
        raise SubQuasiCopulaError("domain node missing from the sub-quasi-copula mesh")
    vals[~mask] = np.nan
    return vals, mask


def _faces(axes: Sequence[_Axis], level: int):
    """(free axes, gap per free axis) for every face with ``level`` free axes, lexicographic."""
    n = len(axes)
    for S in itertools.combinations(range(n), level):
        for gaps in itertools.product(*[axes[k].gaps for k in S]):
            yield S, gaps


def _fill_face(vals: np.ndarray, axes: Sequence[_Axis], S, gaps, mode: str) -> None:
    n = len(axes)
    idx = [axes[k].fixed for k in range(n)]
    for k, (_, _, free) in zip(S, gaps):
        idx[k] = free
    lower_vals, upper_vals, from_a, to_b = [], [], [], []
    for k, (left, right, free) in zip(S, gaps):
        shape = [1] * n
        shape[k] = -1
        at = list(idx)
        at[k] = np.array([left])
        lower_vals.append(vals[np.ix_(*at)])
        at[k] = np.array([right])
        upper_vals.append(vals[np.ix_(*at)])
        x = axes[k].coords[free].reshape(shape)
        from_a.append(x - axes[k].coords[left])
        to_b.append(x - axes[k].coords[right])
    up, lo = envelope_bounds(lower_vals, upper_vals, from_a, to_b)
    vals[np.ix_(*idx)] = up if mode == "upper" else lo


def extend_sub_quasi_copula(
    sq: SubQuasiCopula,
    mode: str = "upper",
    refine: int = 8,
    verify: bool = True,
    check_input: bool = True,
    face_order: int | None = None,
    tol: float = TOL,
) -> GridFunction:
    """Upper (largest) or lower (smallest) quasi-copula extension of ``sq``.

    The output lives on :func:`extension_mesh` and copies Q* verbatim on
    every domain node.  ``face_order`` shuffles the face enumeration within
    each level with the given seed; the result does not depend on it.
    With ``verify`` the partial function is checked for compatibility after
    every level.
    """
    if mode not in ("upper", "lower"):
        raise ValueError(f"mode must be 'upper' or 'lower', got {mode!r}")
    if check_input:
        rep = sq.check(tol)
        if not rep.passed:
            raise SubQuasiCopulaError(f"input is not a sub-quasi-copula:\n{rep.summary()}")
    mesh = extension_mesh(sq, refine)
    vals, _ = _embed(sq, mesh)
    axes = [_prepare_axis(mesh.axes[k], sq.domain.axes[k]) for k in range(mesh.n)]
    rng = None if face_order is None else np.random.default_rng(face_order)
    for level in range(1, mesh.n + 1):
        faces = list(_faces(axes, level))
        if rng is not None:
            faces = [faces[i] for i in rng.permutation(len(faces))]
        for S, gaps in faces:
            _fill_face(vals, axes, S, gaps, mode)
        if verify:
            defined = ~np.isnan(vals)
            partial = GridFunction(mesh, np.where(defined, vals, 0.0), defined)
            rep = check_compat_AB(sq, partial, tol)
            if not rep.passed:
                raise ExtensionError(f"compatibility lost after level {level}:\n{rep.summary()}")
    if np.any(np.isnan(vals)):
        raise ExtensionError("some nodes were never filled")
    return GridFunction(mesh, vals)


def extend_both(sq: SubQuasiCopula, refine: int = 8, **kw) -> tuple[GridFunction, GridFunction]:
    """(upper, lower) extensions from two independent runs."""
    return (
        extend_sub_quasi_copula(sq, "upper", refine, **kw),
        extend_sub_quasi_copula(sq, "lower", refine, check_input=False, **kw),
    )


def check_compat_AB(sq: SubQuasiCopula, partial: GridFunction, tol: float = TOL) -> Report:
    """Compatibility of partially filled face data with Q* and across gaps.

    * ``Q*``: the partial function equals Q* on every domain node.
    * ``(A)``: increasing and 1-Lipschitz between neighbouring defined nodes.
    * ``(B)``: the same across a run of undefined nodes, i.e. between faces of
      boxes separated by a gap (0 <= difference <= gap width).
    """
    mesh = partial.mesh
    defined = partial.defined
    want, dmask = _embed(sq, mesh)
    miss = dmask & ~defined
    off = dmask & defined & (partial.values != np.where(dmask, want, 0.0))
    flat = np.arange(mesh.size).reshape(mesh.shape)
    agree = Report("Q*", int(miss.sum() + off.sum()))
    for i in np.concatenate([flat[miss], flat[off]])[:100]:
        node = tuple(int(q) for q in np.unravel_index(i, mesh.shape))
        agree.violations.append(Violation("Q* mismatch", None, node, float("nan"), _coords(mesh, node)))

    found = {"A": [], "B": []}
    for k in range(mesh.n):
        dv, dx, cur, prev = axis_steps(partial, k)
        pos_c = np.unravel_index(cur, mesh.shape)[k]
        pos_p = np.unravel_index(prev, mesh.shape)[k]
        across = (pos_c - pos_p) > 1
        for kind, bad, mag in (
            ("increasing", dv < -tol, -dv),
            ("lipschitz", dv - dx > tol, dv - dx),
        ):
            for j in np.flatnonzero(bad):
                found["B" if across[j] else "A"].append((int(cur[j]), k, float(mag[j]), int(prev[j]), kind))
    parts = [agree]
    for name in ("A", "B"):
        rows = sorted(found[name])
        rep = Report(f"({name})", len(rows))
        for c, k, mag, p, kind in rows[:100]:
            node = tuple(int(q) for q in np.unravel_index(c, mesh.shape))
            prev = tuple(int(q) for q in np.unravel_index(p, mesh.shape))
            rep.violations.append(Violation(f"({name}) {kind}", k, node, mag, _coords(mesh, node), prev))
        parts.append(rep)
    return Report("compatibility", parts=parts)


def _coords(mesh: Mesh, node: tuple[int, ...]) -> tuple[float, ...]:
    return tuple(float(mesh.axes[k][i]) for k, i in enumerate(node))
