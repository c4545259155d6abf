"""Rectilinear meshes and dense grid functions on boxes inside [0, 1]^n.

Every function in the package (quasi-copulas, boundary faces, patches,
bounds) is carried by a :class:`GridFunction`: a tensor of node values over
a :class:`Mesh`, optionally masked where the value is undefined.  Values
between nodes are obtained by multilinear interpolation, which keeps
componentwise monotonicity and the 1-Lipschitz property of the node data.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

#: slack allowed when locating a point on a mesh; points within it are clipped
RANGE_SLACK = 1e-12


class GridError(ValueError):
    """Invalid mesh, grid function or grid operation."""


class OutOfRangeError(GridError):
    """A query point lies outside the mesh's bounding box."""


class UndefinedValueError(GridError):
    """Interpolation would touch a masked (undefined) node."""


@dataclass(frozen=True, eq=False)
class Mesh:
    """Tensor-product mesh given by one sorted coordinate array per axis."""

    axes: tuple[np.ndarray, ...]

    def __init__(self, axes: Sequence[Sequence[float]]):
        arrs = []
        for k, ax in enumerate(axes):
            a = np.array(ax, dtype=float).reshape(-1)
            if a.size < 2:
                raise GridError(f"axis {k} needs at least 2 nodes, got {a.size}")
            if not np.all(np.isfinite(a)):
                raise GridError(f"axis {k} has non-finite coordinates")
            if np.any(np.diff(a) <= 0):
                raise GridError(f"axis {k} is not strictly increasing")
            a.setflags(write=False)
            arrs.append(a)
        if not arrs:
            raise GridError("a mesh needs at least one axis")
        object.__setattr__(self, "axes", tuple(arrs))

    @classmethod
    def uniform(cls, n: int, nodes: int, lo: float = 0.0, hi: float = 1.0) -> "Mesh":
        return cls([np.linspace(lo, hi, nodes)] * n)

    @classmethod
    def for_box(cls, box: "NBox", nodes: int | Sequence[int]) -> "Mesh":
        counts = [nodes] * box.n if isinstance(nodes, int) else list(nodes)
        return cls([np.linspace(lo, hi, c) for lo, hi, c in zip(box.a, box.b, counts)])

    @property
    def n(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array([a[0] for a in self.axes])

    @property
    def upper(self) -> np.ndarray:
        return np.array([a[-1] for a in self.axes])

    def box(self) -> "NBox":
        return NBox(self.lower, self.upper)

    def spans_unit_cube(self) -> bool:
        return all(a[0] == 0.0 and a[-1] == 1.0 for a in self.axes)

    def nodes(self) -> np.ndarray:
        """All node coordinates as an array of shape (size, n), row-major."""
        grids = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=1)

    def coordinate(self, k: int) -> np.ndarray:
        """Coordinate k of every node, shaped to broadcast against the value tensor."""
        shape = [1] * self.n
        shape[k] = -1
        return self.axes[k].reshape(shape)

    def drop(self, k: int) -> "Mesh":
        """The (n-1)-mesh obtained by removing axis k."""
        if self.n < 2:
            raise GridError("cannot drop the only axis of a 1-d mesh")
        return Mesh([a for j, a in enumerate(self.axes) if j != k])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Mesh) or other.n != self.n:
            return False
        return all(np.array_equal(a, b) for a, b in zip(self.axes, other.axes))

    def __hash__(self) -> int:
        return hash(tuple(a.tobytes() for a in self.axes))

    def __repr__(self) -> str:
        return f"Mesh(shape={self.shape}, box={self.lower.tolist()}..{self.upper.tolist()})"


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a real function on a mesh; ``values`` has ``mesh.shape``.

    ``mask`` (same shape, boolean) marks nodes where the value is defined;
    ``None`` means every node is defined.  Arrays are read-only.
    """

    mesh: Mesh
    values: np.ndarray
    mask: np.ndarray | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.size != self.mesh.size:
            raise GridError(f"expected {self.mesh.size} values, got {vals.size}")
        vals = vals.reshape(self.mesh.shape)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.mask is not None:
            m = np.array(self.mask, dtype=bool)
            if m.size != vals.size:
                raise GridError(f"mask has {m.size} entries, expected {vals.size}")
            m = m.reshape(self.mesh.shape)
            m.setflags(write=False)
            object.__setattr__(self, "mask", m)

    @classmethod
    def from_function(cls, mesh: Mesh, func: Callable[[np.ndarray], np.ndarray]) -> "GridFunction":
        """Tabulate a vectorized ``func(points[m, n]) -> values[m]`` on every node."""
        return cls(mesh, np.asarray(func(mesh.nodes()), dtype=float))

    @property
    def n(self) -> int:
        return self.mesh.n

    @property
    def defined(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.mesh.shape, dtype=bool)
        return self.mask

    def at(self, index: Sequence[int]) -> float:
        return float(self.values[tuple(index)])

    def __call__(self, x) -> np.ndarray | float:
        return evaluate(self, x)

    def with_values(self, values: np.ndarray, mask: np.ndarray | None = None) -> "GridFunction":
        return GridFunction(self.mesh, values, mask)

    def __repr__(self) -> str:
        masked = "" if self.mask is None else f", defined={int(self.mask.sum())}"
        return f"GridFunction({self.mesh!r}{masked})"


@dataclass(frozen=True)
class NBox:
    """Axis-aligned box prod [a_i, b_i] inside [0, 1]^n."""

    a: np.ndarray
    b: np.ndarray

    def __init__(self, a: Sequence[float], b: Sequence[float]):
        a_ = np.array(a, dtype=float).reshape(-1)
        b_ = np.array(b, dtype=float).reshape(-1)
        if a_.shape != b_.shape or a_.size == 0:
            raise GridError("box endpoints must be non-empty vectors of equal length")
        if np.any(a_ > b_):
            raise GridError(f"box has a_i > b_i: a={a_.tolist()}, b={b_.tolist()}")
        if np.any(a_ < 0.0) or np.any(b_ > 1.0):
            raise GridError("box must lie inside [0, 1]^n")
        object.__setattr__(self, "a", a_)
        object.__setattr__(self, "b", b_)

    @property
    def n(self) -> int:
        return self.a.size

    def contains(self, x, slack: float = RANGE_SLACK) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.a - slack) and np.all(x <= self.b + slack))

    def corners(self) -> list[tuple[tuple[int, ...], np.ndarray]]:
        """``(bits, point)`` for the 2^n corners; bit 1 selects b_i, bit 0 a_i."""
        out = []
        for bits in itertools.product((0, 1), repeat=self.n):
            out.append((bits, np.where(np.array(bits) == 1, self.b, self.a)))
        return out

    def split(self, axis: int, at: float) -> tuple["NBox", "NBox"]:
        if not self.a[axis] <= at <= self.b[axis]:
            raise GridError("split point outside the box")
        b_left = self.b.copy()
        b_left[axis] = at
        a_right = self.a.copy()
        a_right[axis] = at
        return NBox(self.a, b_left), NBox(a_right, self.b)

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, NBox)
            and np.array_equal(self.a, other.a)
            and np.array_equal(self.b, other.b)
        )


def corner_point(box: NBox, x, z) -> np.ndarray:
    """The point x^z: coordinate k is b_k if z_k = 1, x_k if z_k = 0, a_k if z_k = -1.

    ``x`` may be a single point or an array of points of shape (m, n).
    """
    z = np.asarray(z)
    if z.shape != (box.n,) or not np.all(np.isin(z, (-1, 0, 1))):
        raise GridError(f"corner index must be a length-{box.n} vector over {{-1, 0, 1}}")
    x = np.asarray(x, dtype=float)
    out = np.where(z == 1, box.b, x)
    return np.where(z == -1, box.a, out)


def _locate(mesh: Mesh, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Cell index and fractional offset of every point along every axis."""
    idx = np.empty(pts.shape, dtype=np.intp)
    frac = np.empty(pts.shape, dtype=float)
    for k, ax in enumerate(mesh.axes):
        p = pts[:, k]
        bad = (p < ax[0] - RANGE_SLACK) | (p > ax[-1] + RANGE_SLACK) | ~np.isfinite(p)
        if np.any(bad):
            j = int(np.flatnonzero(bad)[0])
            raise OutOfRangeError(
                f"coordinate {k} of point {pts[j].tolist()} outside [{ax[0]}, {ax[-1]}]"
            )
        p = np.clip(p, ax[0], ax[-1])
        i = np.clip(np.searchsorted(ax, p, side="right") - 1, 0, len(ax) - 2)
        idx[:, k] = i
        frac[:, k] = (p - ax[i]) / (ax[i + 1] - ax[i])
    return idx, frac


def evaluate(f: GridFunction, x) -> np.ndarray | float:
    """Multilinear interpolant of ``f`` at one point (n,) or many points (m, n).

    Exact at mesh nodes.  Raises :class:`OutOfRangeError` outside the mesh box
    and :class:`UndefinedValueError` if a node with nonzero weight is masked.
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != f.n:
        raise GridError(f"expected points of dimension {f.n}, got {pts.shape[1]}")
    idx, frac = _locate(f.mesh, pts)
    total = np.zeros(pts.shape[0])
    for bits in itertools.product((0, 1), repeat=f.n):
        b = np.array(bits)
        w = np.prod(np.where(b == 1, frac, 1.0 - frac), axis=1)
        node = tuple((idx + b).T)
        if f.mask is not None:
            hole = (w != 0.0) & ~f.mask[node]
            if np.any(hole):
                j = int(np.flatnonzero(hole)[0])
                raise UndefinedValueError(f"point {pts[j].tolist()} touches an undefined node")
        total = total + w * f.values[node]
    return float(total[0]) if single else total


def _require_same_mesh(fs: Sequence[GridFunction]) -> Mesh:
    if not fs:
        raise GridError("need at least one grid function")
    mesh = fs[0].mesh
    for g in fs[1:]:
        if g.mesh != mesh:
            raise GridError("grid functions live on different meshes")
    if any(g.mask is not None for g in fs):
        raise GridError("pointwise envelopes require unmasked grid functions")
    return mesh


def pointwise_min(fs: Sequence[GridFunction]) -> GridFunction:
    mesh = _require_same_mesh(fs)
    return GridFunction(mesh, np.min(np.stack([g.values for g in fs]), axis=0))


def pointwise_max(fs: Sequence[GridFunction]) -> GridFunction:
    mesh = _require_same_mesh(fs)
    return GridFunction(mesh, np.max(np.stack([g.values for g in fs]), axis=0))


def resample(f: GridFunction, mesh: Mesh) -> GridFunction:
    """Map ``f`` onto another mesh (inside its box) by multilinear evaluation."""
    return GridFunction(mesh, evaluate(f, mesh.nodes()))


def merge_axis(*coords: Sequence[float], tol: float = RANGE_SLACK) -> np.ndarray:
    """Sorted union of coordinate lists, collapsing entries closer than ``tol``.

    Earlier arguments win when two coordinates collapse.
    """
    out: list[float] = []
    for group in coords:
        for c in np.asarray(group, dtype=float).reshape(-1):
            if not any(abs(c - o) <= tol for o in out):
                out.append(float(c))
    return np.array(sorted(out))
