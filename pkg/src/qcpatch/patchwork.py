"""Patches of quasi-copulas on a single rectangle R = prod [a_k, b_k].

The data of a patch problem is a :class:`BoundarySet`: for every axis k a
function F_k on the lower face x_k = a_k and F'_k on the upper face
x_k = b_k.  A formal function F on the boundary of R is read off these
faces; for a corner index z != 0, ``F(x^z)`` is taken from the face picked
by the first nonzero entry of z (consistent faces make the choice
irrelevant).

Provided here:

* the boundary checker for conditions (i)-(iv) on the faces;
* the Step-I bounds on the whole cube, built from prescribed upper faces;
* the additive patches A and B, their difference G and the margins M_k;
* the grid-level Sklar-type factorization of G into quasi-copulas Q_k;
* the conjectured patch P = A + V Q(M/V), which is *not* a quasi-copula
  patch in general for n >= 3;
* the local upper/lower bounds of all monotone 1-Lipschitz patches.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .axioms import TOL, Report, Violation, check_increasing, check_lipschitz, is_quasi_copula
from .grid import RANGE_SLACK, GridFunction, Mesh, NBox, corner_point, evaluate

#: |V| below this is treated as a vanishing box volume
VOLUME_EPS = 1e-12


class PatchError(ValueError):
    pass


class ConditionsPBError(PatchError):
    """The boundary data violates one of the boundary conditions."""


class DegenerateVolumeError(PatchError):
    """The signed volume of the rectangle is (numerically) zero."""


class StepIError(PatchError):
    """Invalid input to the Step-I bounds."""


QuasiCopulaLike = GridFunction | Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class BoundarySet:
    """Face functions of an n-box, n >= 2.

    ``mesh`` is the box mesh; ``lower[k]`` and ``upper[k]`` live on
    ``mesh.drop(k)`` and hold F_k (x_k = a_k) and F'_k (x_k = b_k).
    """

    mesh: Mesh
    lower: tuple[GridFunction, ...]
    upper: tuple[GridFunction, ...]

    def __post_init__(self):
        n = self.mesh.n
        if n < 2:
            raise PatchError("boundary sets need n >= 2")
        if len(self.lower) != n or len(self.upper) != n:
            raise PatchError(f"expected {n} lower and {n} upper faces")
        for k in range(n):
            face_mesh = self.mesh.drop(k)
            for face in (self.lower[k], self.upper[k]):
                if face.mesh != face_mesh:
                    raise PatchError(f"face {k + 1} is not on the mesh induced by the box mesh")
                if face.mask is not None:
                    raise PatchError("face functions must be fully defined")
        object.__setattr__(self, "lower", tuple(self.lower))
        object.__setattr__(self, "upper", tuple(self.upper))

    @property
    def n(self) -> int:
        return self.mesh.n

    @property
    def box(self) -> NBox:
        return self.mesh.box()

    @classmethod
    def from_function(cls, mesh: Mesh, func: Callable[[np.ndarray], np.ndarray]) -> "BoundarySet":
        """Restrict a vectorized function of n variables to the faces of ``mesh``'s box."""
        lower, upper = [], []
        for k in range(mesh.n):
            face_mesh = mesh.drop(k)
            pts = face_mesh.nodes()
            for side, out in ((mesh.axes[k][0], lower), (mesh.axes[k][-1], upper)):
                full = np.insert(pts, k, side, axis=1)
                out.append(GridFunction(face_mesh, np.asarray(func(full), dtype=float)))
        return cls(mesh, tuple(lower), tuple(upper))

    @classmethod
    def from_grid(cls, f: GridFunction, box: NBox) -> "BoundarySet":
        """Restrict a grid function to the faces of a box whose endpoints are mesh nodes."""
        sl = []
        for k, ax in enumerate(f.mesh.axes):
            lo = np.flatnonzero(np.abs(ax - box.a[k]) <= RANGE_SLACK)
            hi = np.flatnonzero(np.abs(ax - box.b[k]) <= RANGE_SLACK)
            if lo.size == 0 or hi.size == 0:
                raise PatchError(f"box endpoints on axis {k + 1} are not mesh nodes")
            sl.append(slice(int(lo[0]), int(hi[0]) + 1))
        sub = GridFunction(Mesh([ax[s] for ax, s in zip(f.mesh.axes, sl)]), f.values[tuple(sl)])
        return cls.from_function(sub.mesh, lambda pts: evaluate(sub, pts))

    def face(self, k: int, side: int) -> GridFunction:
        """Face k (0-based) on side -1 (lower) or +1 (upper)."""
        return self.lower[k] if side < 0 else self.upper[k]

    def face_at(self, k: int, side: int, pts: np.ndarray) -> np.ndarray:
        """Value of face (k, side) at points of R lying on it (coordinate k is ignored)."""
        return evaluate(self.face(k, side), np.delete(np.atleast_2d(pts), k, axis=1))

    def F(self, z: Sequence[int], pts: np.ndarray) -> np.ndarray:
        """F(x^z) for every row x of ``pts``; z must be nonzero."""
        z = np.asarray(z)
        nz = np.flatnonzero(z)
        if nz.size == 0:
            raise PatchError("F(x^z) is only defined on the boundary (z != 0)")
        k = int(nz[0])
        return self.face_at(k, int(z[k]), corner_point(self.box, np.atleast_2d(pts), z))


# ---------------------------------------------------------------------------
# boundary conditions


def _pb_agreement(bs: BoundarySet, tol: float) -> Report:
    """Faces agree where they meet, on every (n-2)-face."""
    found = []
    mesh = bs.mesh
    nodes = mesh.nodes()
    flat = np.arange(mesh.size)
    for j, k in itertools.combinations(range(bs.n), 2):
        for sj, sk in itertools.product((-1, 1), repeat=2):
            on = (nodes[:, j] == (mesh.axes[j][0] if sj < 0 else mesh.axes[j][-1])) & (
                nodes[:, k] == (mesh.axes[k][0] if sk < 0 else mesh.axes[k][-1])
            )
            pts = nodes[on]
            diff = np.abs(bs.face_at(j, sj, pts) - bs.face_at(k, sk, pts))
            for i in np.flatnonzero(diff > tol):
                found.append((flat[on][i], j, diff[i]))
    return _mesh_report("PB(i)", mesh, found)


def _mesh_report(name: str, mesh: Mesh, found: list[tuple]) -> Report:
    found.sort(key=lambda t: (t[0], t[1]))
    vs = []
    for flat, axis, mag in found[:100]:
        node = tuple(int(i) for i in np.unravel_index(flat, mesh.shape))
        coords = tuple(float(mesh.axes[q][i]) for q, i in enumerate(node))
        vs.append(Violation(name, axis, node, float(mag), coords))
    return Report(name, len(found), vs)


def _pb_faces(bs: BoundarySet, tol: float) -> Report:
    parts = []
    for k in range(bs.n):
        for tag, face in ((f"F{k + 1}", bs.lower[k]), (f"F{k + 1}'", bs.upper[k])):
            inc = check_increasing(face, tol)
            lip = check_lipschitz(face, tol)
            inc.name, lip.name = f"{tag} increasing", f"{tag} lipschitz"
            parts += [inc, lip]
    return Report("PB(ii)", parts=parts)


def _pb_gap(bs: BoundarySet, tol: float) -> Report:
    """0 <= F'_k - F_k <= b_k - a_k on every face node."""
    found = []
    for k in range(bs.n):
        width = bs.mesh.axes[k][-1] - bs.mesh.axes[k][0]
        gap = bs.upper[k].values - bs.lower[k].values
        excess = np.maximum(-gap, gap - width).reshape(-1)
        face_shape = bs.upper[k].mesh.shape
        for i in np.flatnonzero(excess > tol):
            face_node = list(np.unravel_index(i, face_shape))
            node = face_node[:k] + [0] + face_node[k:]
            found.append((np.ravel_multi_index(node, bs.mesh.shape), k, excess[i]))
    return _mesh_report("PB(iii)", bs.mesh, found)


def rectangle_volumes(bs: BoundarySet, k: int) -> GridFunction:
    """Volume of the box spanned by a and x, for every node x on the upper face k."""
    n = bs.n
    face_mesh = bs.mesh.drop(k)
    pts = np.insert(face_mesh.nodes(), k, bs.mesh.axes[k][-1], axis=1)
    vol = np.zeros(len(pts))
    for bits in itertools.product((0, 1), repeat=n):
        z = [-1 if b == 0 else 0 for b in bits]
        if bits[k]:
            z[k] = 1
        sign = (-1) ** (n - sum(bits))
        vol += sign * bs.F(z, pts)
    return GridFunction(face_mesh, vol)


def _pb_volume(bs: BoundarySet, tol: float) -> Report:
    """Rectangle volumes are monotone (either direction) and non-constant along every face axis."""
    found = []
    for k in range(bs.n):
        vol = rectangle_volumes(bs, k)
        for q in range(vol.n):
            d = np.diff(vol.values, axis=q)
            up, down = np.any(d > tol), np.any(d < -tol)
            axis = q if q < k else q + 1
            if up and down:
                found.append((0, axis, float(min(d.max(), -d.min())), f"F{k + 1}' volume not monotone"))
            elif not up and not down:
                found.append((0, axis, 0.0, f"F{k + 1}' volume constant"))
    vs = [Violation(f"PB(iv): {msg}", ax, (k,), m) for (_, ax, m, msg) in found[:100]]
    return Report("PB(iv)", len(found), vs)


def check_conditions_PB(bs: BoundarySet, tol: float = TOL, volume: bool = True) -> Report:
    """Check boundary conditions (i)-(iii), and (iv) unless ``volume`` is False."""
    parts = [_pb_agreement(bs, tol), _pb_faces(bs, tol), _pb_gap(bs, tol)]
    if volume:
        parts.append(_pb_volume(bs, tol))
    return Report("conditions-PB", parts=parts)


def _require_pb(bs: BoundarySet, tol: float = TOL) -> None:
    rep = check_conditions_PB(bs, tol, volume=False)
    if not rep.passed:
        raise ConditionsPBError(rep.summary())


# ---------------------------------------------------------------------------
# Step I: the whole cube with zero lower faces


def _stepI_mesh(cs: Sequence[GridFunction]) -> Mesh:
    n = len(cs)
    if n < 2:
        raise StepIError("Step I needs n >= 2 face functions")
    for k, c in enumerate(cs):
        if c.n != n - 1:
            raise StepIError(f"C_{k + 1} has dimension {c.n}, expected {n - 1}")
    axes = []
    for j in range(n):
        ref = None
        for k, c in enumerate(cs):
            if k == j:
                continue
            ax = c.mesh.axes[j if j < k else j - 1]
            if ref is None:
                ref = ax
            elif not np.array_equal(ref, ax):
                raise StepIError(f"C's disagree on the mesh of coordinate {j + 1}")
        axes.append(ref)
    mesh = Mesh(axes)
    if not mesh.spans_unit_cube():
        raise StepIError("Step-I face functions must be tabulated on [0, 1]^(n-1)")
    return mesh


def _stepI_validate(cs: Sequence[GridFunction], tol: float) -> None:
    for k, c in enumerate(cs):
        rep = is_quasi_copula(c, tol)
        if not rep.passed:
            raise StepIError(f"C_{k + 1} is not a quasi-copula:\n{rep.summary()}")
    n = len(cs)
    # C_j and C_k must agree where both faces meet (x_j = x_k = 1)
    for j, k in itertools.combinations(range(n), 2):
        a = np.take(cs[j].values, -1, axis=k - 1)
        b = np.take(cs[k].values, -1, axis=j)
        if a.shape != b.shape or np.max(np.abs(a - b), initial=0.0) > tol:
            raise StepIError(f"C_{j + 1} and C_{k + 1} disagree on their common face")


def _stepI_terms(cs: Sequence[GridFunction]) -> list[np.ndarray]:
    return [np.expand_dims(c.values, k) for k, c in enumerate(cs)]


def stepI_upper(cs: Sequence[GridFunction], tol: float = TOL, check: bool = True) -> GridFunction:
    """Largest quasi-copula with upper faces C_k: min_k C_k(x without x_k)."""
    mesh = _stepI_mesh(cs)
    if check:
        _stepI_validate(cs, tol)
    vals = np.full(mesh.shape, np.inf)
    for t in _stepI_terms(cs):
        vals = np.minimum(vals, t)
    return GridFunction(mesh, vals)


def stepI_lower(cs: Sequence[GridFunction], tol: float = TOL, check: bool = True) -> GridFunction:
    """Smallest quasi-copula with upper faces C_k: max_k W(x_k, C_k(x without x_k))."""
    mesh = _stepI_mesh(cs)
    if check:
        _stepI_validate(cs, tol)
    vals = np.zeros(mesh.shape)
    for k, t in enumerate(_stepI_terms(cs)):
        vals = np.maximum(vals, t + mesh.coordinate(k) - 1.0)
    return GridFunction(mesh, vals)


def stepI_at(cs: Sequence[GridFunction], pts, mode: str = "lower") -> np.ndarray:
    """Step-I bound evaluated off the grid by interpolating the C_k."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    terms = [evaluate(c, np.delete(pts, k, axis=1)) for k, c in enumerate(cs)]
    if mode == "upper":
        return np.min(terms, axis=0)
    if mode == "lower":
        return np.max([np.maximum(t + pts[:, k] - 1.0, 0.0) for k, t in enumerate(terms)], axis=0)
    raise ValueError(f"mode must be 'upper' or 'lower', got {mode!r}")


# ---------------------------------------------------------------------------
# additive patches


def _corner_sum(bs: BoundarySet, pts: np.ndarray, side: int) -> np.ndarray:
    """sum over nonzero z in {side, 0}^n of (-1)^(1 + |supp z|) F(x^z)."""
    total = np.zeros(len(pts))
    for bits in itertools.product((0, 1), repeat=bs.n):
        s = sum(bits)
        if s == 0:
            continue
        z = [side * b for b in bits]
        total += (-1) ** (1 + s) * bs.F(z, pts)
    return total


def A_at(bs: BoundarySet, pts) -> np.ndarray:
    return _corner_sum(bs, np.atleast_2d(np.asarray(pts, dtype=float)), -1)


def B_at(bs: BoundarySet, pts) -> np.ndarray:
    return _corner_sum(bs, np.atleast_2d(np.asarray(pts, dtype=float)), 1)


def G_at(bs: BoundarySet, pts) -> np.ndarray:
    return B_at(bs, pts) - A_at(bs, pts)


def margin_at(bs: BoundarySet, k: int, t) -> np.ndarray:
    """M_k(t) = G at the point with x_k = t and every other coordinate at b."""
    t = np.asarray(t, dtype=float).reshape(-1)
    pts = np.tile(bs.box.b, (t.size, 1))
    pts[:, k] = t
    return G_at(bs, pts)


def boundary_volume(bs: BoundarySet) -> float:
    """Signed volume of R computed from F at its 2^n vertices."""
    total = 0.0
    for bits in itertools.product((0, 1), repeat=bs.n):
        z = [1 if b else -1 for b in bits]
        total += (-1) ** (bs.n - sum(bits)) * float(bs.F(z, bs.box.a[None, :])[0])
    return total


def additive_patch_A(bs: BoundarySet, check: bool = True) -> GridFunction:
    """Patch matching F_k on every lower face (the faces through a)."""
    if check:
        _require_pb(bs)
    return GridFunction(bs.mesh, A_at(bs, bs.mesh.nodes()))


def additive_patch_B(bs: BoundarySet, check: bool = True) -> GridFunction:
    """Patch matching F'_k on every upper face (the faces through b)."""
    if check:
        _require_pb(bs)
    return GridFunction(bs.mesh, B_at(bs, bs.mesh.nodes()))


@dataclass(frozen=True, eq=False)
class PatchComponents:
    boundary: BoundarySet
    A: GridFunction
    B: GridFunction
    G: GridFunction
    margins: tuple[GridFunction, ...]  # M_k tabulated on box axis k
    V: float

    @property
    def n(self) -> int:
        return self.boundary.n

    def margin_at(self, k: int, t) -> np.ndarray:
        return margin_at(self.boundary, k, t)

    def normalized_margins_at(self, pts) -> np.ndarray:
        """Rows (M_1(x_1)/V, ..., M_n(x_n)/V) for every row x of ``pts``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.stack([margin_at(self.boundary, k, pts[:, k]) / self.V for k in range(self.n)], axis=1)


def patch_difference_G(bs: BoundarySet, check: bool = True) -> PatchComponents:
    if check:
        _require_pb(bs)
    nodes = bs.mesh.nodes()
    A = GridFunction(bs.mesh, A_at(bs, nodes))
    B = GridFunction(bs.mesh, B_at(bs, nodes))
    G = GridFunction(bs.mesh, B.values - A.values)
    margins = tuple(
        GridFunction(Mesh([bs.mesh.axes[k]]), margin_at(bs, k, bs.mesh.axes[k])) for k in range(bs.n)
    )
    return PatchComponents(bs, A, B, G, margins, boundary_volume(bs))


# ---------------------------------------------------------------------------
# Sklar-type factorization


@dataclass(frozen=True, eq=False)
class SklarFactorization:
    margins: tuple[GridFunction, ...]  # M_k / V on box axis k
    factors: tuple[GridFunction, ...]  # Q_k, (n-1)-variate
    combined: GridFunction  # Step-I bound built from the Q_k
    mode: str
    reports: tuple[Report, ...]  # is_quasi_copula of each factor

    def combined_at(self, u) -> np.ndarray:
        return stepI_at(self.factors, u, self.mode)

    def inverse_margin(self, k: int, u) -> np.ndarray:
        return pseudo_inverse(self.margins[k], u)


def pseudo_inverse(margin: GridFunction, u) -> np.ndarray:
    """Left-continuous generalized inverse of an increasing tabulated margin onto [0, 1].

    Plateaus resolve to their leftmost node; between nodes the inverse is
    linear in u.
    """
    xs = margin.mesh.axes[0]
    us = margin.values
    keep = np.concatenate([[True], np.diff(us) > 0])
    return np.interp(np.asarray(u, dtype=float), us[keep], xs[keep])


def _normalized_margin(pc: PatchComponents, k: int, tol: float) -> GridFunction:
    m = pc.margins[k]
    u = m.values / pc.V
    d = np.diff(u)
    if np.any(d < -tol):
        raise ConditionsPBError(f"PB(iv): normalized margin M_{k + 1}/V is not increasing")
    if abs(u[0]) > tol or abs(u[-1] - 1.0) > tol:
        raise ConditionsPBError(f"normalized margin M_{k + 1}/V does not map onto [0, 1]")
    u = np.clip(np.maximum.accumulate(u), 0.0, 1.0)
    u[0], u[-1] = 0.0, 1.0
    return GridFunction(m.mesh, u)


def sklar_factorize(
    pc: PatchComponents, mode: str = "lower", nodes: int | None = None, tol: float = TOL
) -> SklarFactorization:
    """Split G/V into normalized margins and (n-1)-variate quasi-copulas Q_k.

    Q_k(u) = G_k(x)/V where G_k is G on the upper face k and x_j is the
    pseudo-inverse of M_j/V at u_j.  By default each Q_k is tabulated on the
    image of the box mesh under the margins (distinct values only); with
    ``nodes`` it is tabulated on a uniform mesh of [0, 1]^(n-1) instead.
    ``combined`` is the Step-I bound (``mode``) of the factors.
    """
    if abs(pc.V) < VOLUME_EPS:
        raise DegenerateVolumeError(f"box volume V = {pc.V!r} is zero")
    bs = pc.boundary
    n = bs.n
    margins = tuple(_normalized_margin(pc, k, tol) for k in range(n))
    if nodes is None:
        image_axes, pre_x = [], []
        for m in margins:
            keep = np.concatenate([[True], np.diff(m.values) > 0])
            image_axes.append(m.values[keep])
            pre_x.append(m.mesh.axes[0][keep])
    else:
        image_axes = [np.linspace(0.0, 1.0, nodes)] * n
        pre_x = [pseudo_inverse(m, image_axes[0]) for m in margins]
    factors = []
    for k in range(n):
        sub = Mesh([image_axes[j] for j in range(n) if j != k])
        grids = np.meshgrid(*[pre_x[j] for j in range(n) if j != k], indexing="ij")
        pts = np.insert(np.stack([g.reshape(-1) for g in grids], axis=1), k, bs.box.b[k], axis=1)
        factors.append(GridFunction(sub, G_at(bs, pts) / pc.V))
    factors = tuple(factors)
    reports = tuple(is_quasi_copula(q, tol) for q in factors)
    build = stepI_upper if mode == "upper" else stepI_lower
    combined = build(factors, tol, check=False)
    return SklarFactorization(margins, factors, combined, mode, reports)


def patch_P_at(pc: PatchComponents, Q: QuasiCopulaLike, pts) -> np.ndarray:
    """A(x) + V Q(M_1(x_1)/V, ..., M_n(x_n)/V) at arbitrary points of the box."""
    if abs(pc.V) < VOLUME_EPS:
        raise DegenerateVolumeError(f"box volume V = {pc.V!r} is zero")
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    u = np.clip(pc.normalized_margins_at(pts), 0.0, 1.0)
    q = evaluate(Q, u) if isinstance(Q, GridFunction) else np.asarray(Q(u), dtype=float)
    return A_at(pc.boundary, pts) + pc.V * q


def conjectured_patch_P(pc: PatchComponents, Q: QuasiCopulaLike, mesh: Mesh | None = None) -> GridFunction:
    """Tabulate the conjectured patch on ``mesh`` (default: the box mesh).

    Carries no quasi-copula guarantee for n >= 3.
    """
    mesh = pc.boundary.mesh if mesh is None else mesh
    return GridFunction(mesh, patch_P_at(pc, Q, mesh.nodes()))


# ---------------------------------------------------------------------------
# local bounds of all patches


def envelope_bounds(
    lower_vals: Sequence[np.ndarray],
    upper_vals: Sequence[np.ndarray],
    from_a: Sequence[np.ndarray],
    to_b: Sequence[np.ndarray],
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise bounds of increasing 1-Lipschitz fills of a box from its faces.

    For each free axis k: ``lower_vals[k]`` = F(x^{z_k}) (value on the lower
    face through x), ``upper_vals[k]`` = F(x^{z'_k}), ``from_a[k]`` = x_k - a_k
    and ``to_b[k]`` = x_k - b_k.  Returns ``(upper, lower)``.
    """
    up = lo = None
    for fl, fu, da, db in zip(lower_vals, upper_vals, from_a, to_b):
        u = np.minimum(fu, fl + da)
        l = np.maximum(fl, fu + db)
        up = u if up is None else np.minimum(up, u)
        lo = l if lo is None else np.maximum(lo, l)
    return up, lo


def local_patch_bounds(bs: BoundarySet, check: bool = True) -> tuple[GridFunction, GridFunction]:
    """(upper, lower) bounds of every increasing 1-Lipschitz patch with boundary ``bs``."""
    if check:
        _require_pb(bs)
    nodes = bs.mesh.nodes()
    a, b = bs.box.a, bs.box.b
    lower_vals, upper_vals, from_a, to_b = [], [], [], []
    for k in range(bs.n):
        z = np.zeros(bs.n, dtype=int)
        z[k] = -1
        lower_vals.append(bs.F(z, nodes))
        z[k] = 1
        upper_vals.append(bs.F(z, nodes))
        from_a.append(nodes[:, k] - a[k])
        to_b.append(nodes[:, k] - b[k])
    up, lo = envelope_bounds(lower_vals, upper_vals, from_a, to_b)
    return GridFunction(bs.mesh, up), GridFunction(bs.mesh, lo)
