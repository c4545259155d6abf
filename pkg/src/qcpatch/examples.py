"""Reference quasi-copulas and the three-dimensional counterexample.

The closed forms here are vectorized over point arrays of shape (m, n) and
double as exact oracles in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np

from .axioms import check_increasing
from .grid import GridFunction, Mesh, merge_axis
from .patchwork import (
    BoundarySet,
    patch_difference_G,
    patch_P_at,
    sklar_factorize,
)

THIRD = 1.0 / 3.0


def frechet_W(pts) -> np.ndarray:
    pts = np.atleast_2d(pts)
    return np.maximum(pts.sum(axis=1) - (pts.shape[1] - 1), 0.0)


def frechet_M(pts) -> np.ndarray:
    return np.atleast_2d(pts).min(axis=1)


def product_Pi(pts) -> np.ndarray:
    return np.atleast_2d(pts).prod(axis=1)


# density of the bivariate factor on the 3x3 ninths: -3 in the middle,
# 0 on the four corners, +3 on the four edge-middles
_NINTHS_DENSITY = np.array([[0.0, 3.0, 0.0], [3.0, -3.0, 3.0], [0.0, 3.0, 0.0]])
_EDGES = np.array([0.0, THIRD, 2.0 * THIRD, 1.0])


def _overlap(t: np.ndarray) -> np.ndarray:
    """Length of [0, t] inside each third, shape (m, 3)."""
    t = np.asarray(t, dtype=float)[:, None]
    return np.clip(t - _EDGES[:-1], 0.0, THIRD)


def ninths_D(pts) -> np.ndarray:
    """Bivariate quasi-copula integrating the piecewise-constant -3/0/3 density.

    Computed exactly as sum over ninths of density * overlap_x * overlap_y.
    """
    pts = np.atleast_2d(pts)
    ox, oy = _overlap(pts[:, 0]), _overlap(pts[:, 1])
    d = np.einsum("mi,ij,mj->m", ox, _NINTHS_DENSITY, oy)
    # the margins hit the identity exactly
    d = np.where(pts[:, 1] == 1.0, pts[:, 0], d)
    return np.where(pts[:, 0] == 1.0, pts[:, 1], d)


def old3d(pts) -> np.ndarray:
    """F(x, y, z) = D(x, y) z, a 3-variate quasi-copula that is not a copula."""
    pts = np.atleast_2d(pts)
    return ninths_D(pts[:, :2]) * pts[:, 2]


def make_frechet_W(n: int, mesh: Mesh) -> GridFunction:
    _check_dim(n, mesh)
    return GridFunction.from_function(mesh, frechet_W)


def make_frechet_M(n: int, mesh: Mesh) -> GridFunction:
    _check_dim(n, mesh)
    return GridFunction.from_function(mesh, frechet_M)


def make_product_Pi(n: int, mesh: Mesh) -> GridFunction:
    _check_dim(n, mesh)
    return GridFunction.from_function(mesh, product_Pi)


def make_example_old3d(mesh: Mesh) -> GridFunction:
    _check_dim(3, mesh)
    return GridFunction.from_function(mesh, old3d)


def _check_dim(n: int, mesh: Mesh) -> None:
    if mesh.n != n:
        raise ValueError(f"mesh has dimension {mesh.n}, expected {n}")


# closed forms on the box [1/3, 2/3]^3 for the boundary of old3d


def expected_A(p):
    x, y, z = p.T
    return y * z + x * z - x * y + (x + y - 2 * z) / 3 - 1 / 9


def expected_B(p):
    x, y, z = p.T
    return -2 * x * y + (4 * x + 4 * y + z) / 3 - 8 / 9


def expected_G(p):
    x, y, z = p.T
    return x + y + z - x * y - x * z - y * z - 7 / 9


def expected_margin(t):
    return -np.asarray(t) / 3 + 1 / 9


def expected_P_line(x):
    """P(x, 1/2, 2/5) with Q the Step-I lower bound of three product copulas."""
    x = np.asarray(x, dtype=float)
    return np.minimum(7 * x / 30 - 1 / 90, -x / 10 + 1 / 5)


@dataclass
class CounterexampleReport:
    grid: int
    V: float
    checks: dict[str, bool] = field(default_factory=dict)
    errors: dict[str, float] = field(default_factory=dict)
    line: dict[str, float] = field(default_factory=dict)
    violation: str | None = None

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(self.checks.values())

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid": self.grid,
            "V": self.V,
            "passed": self.passed,
            "checks": self.checks,
            "max_abs_errors": self.errors,
            "line": self.line,
            "violation": self.violation,
        }

    def summary(self) -> str:
        lines = [f"counterexample on [1/3, 2/3]^3, {self.grid} nodes per axis: {'PASS' if self.passed else 'FAIL'}"]
        lines.append(f"  V = {self.V!r}")
        for name, ok in self.checks.items():
            err = self.errors.get(name)
            tail = "" if err is None else f" (max error {err:.2e})"
            lines.append(f"  {name}: {'ok' if ok else 'FAILED'}{tail}")
        for name, val in self.line.items():
            lines.append(f"  {name} = {val!r}")
        if self.violation:
            lines.append(f"  P: {self.violation}")
        return "\n".join(lines)


def reproduce_counterexample(grid: int = 33, tol: float = 1e-12) -> CounterexampleReport:
    """Rebuild the patch data of old3d on [1/3, 2/3]^3 and show that
    A + V Q(M/V) is not increasing in x for Q the Step-I lower bound."""
    if grid < 16:
        raise ValueError("grid must be at least 16")
    mesh = Mesh([np.linspace(THIRD, 2 * THIRD, grid)] * 3)
    bs = BoundarySet.from_function(mesh, old3d)
    pc = patch_difference_G(bs)
    rep = CounterexampleReport(grid, pc.V)
    nodes = mesh.nodes()

    def record(name, err, bound=tol):
        rep.errors[name] = float(err)
        rep.checks[name] = bool(err <= bound)

    record("V = -1/9", abs(pc.V + 1 / 9))
    record("A closed form", np.max(np.abs(pc.A.values.reshape(-1) - expected_A(nodes))))
    record("B closed form", np.max(np.abs(pc.B.values.reshape(-1) - expected_B(nodes))))
    record("G closed form", np.max(np.abs(pc.G.values.reshape(-1) - expected_G(nodes))))
    record(
        "M_k closed form",
        max(np.max(np.abs(m.values - expected_margin(m.mesh.axes[0]))) for m in pc.margins),
    )

    sf = sklar_factorize(pc, mode="lower")
    pi_err = 0.0
    for q in sf.factors:
        pi_err = max(pi_err, float(np.max(np.abs(q.values.reshape(-1) - q.mesh.nodes().prod(axis=1)))))
    record("Q_k = Pi", pi_err)

    xs = merge_axis(mesh.axes[0], [19 / 30])
    line_pts = np.column_stack([xs, np.full_like(xs, 0.5), np.full_like(xs, 0.4)])
    p_line = patch_P_at(pc, sf.combined_at, line_pts)
    record("P(x,1/2,2/5) closed form", np.max(np.abs(p_line - expected_P_line(xs))))
    p_start = float(patch_P_at(pc, sf.combined_at, [[19 / 30, 0.5, 0.4]])[0])
    p_end = float(patch_P_at(pc, sf.combined_at, [[2 / 3, 0.5, 0.4]])[0])
    rep.line = {"P(19/30,1/2,2/5)": p_start, "P(2/3,1/2,2/5)": p_end}
    record("P(19/30,1/2,2/5) = 123/900", abs(p_start - 123 / 900))
    record("P(2/3,1/2,2/5) = 120/900", abs(p_end - 120 / 900))
    rep.checks["P strictly decreases on (19/30, 2/3)"] = p_end < p_start

    # P tabulated along the probe line (y = 1/2, z = 2/5) must fail the
    # increasing check between 19/30 and 2/3
    line = GridFunction(Mesh([xs]), p_line)
    hit = None
    for v in check_increasing(line, tol=1e-9).violations:
        if xs[v.prev[0]] >= 19 / 30 - 1e-12 and v.coords[0] <= 2 / 3 + 1e-12:
            hit = v
            break
    rep.checks["increasing violated on axis 1 at y=1/2, z=2/5"] = hit is not None
    if hit is not None:
        rep.violation = (
            f"increasing violated on axis 1 between x={xs[hit.prev[0]]:.6g} and x={hit.coords[0]:.6g}"
            f" at y=1/2, z=2/5 (drop {hit.magnitude:.3g})"
        )

    # the same defect seen on the whole box mesh refined by the probe coordinates
    probe = Mesh([xs, mesh.axes[1], merge_axis(mesh.axes[2], [0.4])])
    P = GridFunction(probe, patch_P_at(pc, sf.combined_at, probe.nodes()))
    full = check_increasing(P, tol=1e-9)
    rep.line["increasing violations on the box mesh"] = full.total
    rep.line["of them along axis 1"] = int(np.sum(np.diff(P.values, axis=0) < -1e-9))
    return rep


def exact_P_line(x: Fraction) -> Fraction:
    """Rational evaluation of the printed closed form, for exact comparisons."""
    return min(Fraction(7, 30) * x - Fraction(1, 90), -x / 10 + Fraction(1, 5))
