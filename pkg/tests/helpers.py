"""Random quasi-copulas, domains and boundaries shared by the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from qcpatch.examples import frechet_M, frechet_W, ninths_D, old3d, product_Pi
from qcpatch.extension import AxisDomain, ProductDomain
from qcpatch.grid import Mesh, NBox


def _base(n: int):
    fams = [frechet_W, frechet_M, product_Pi]
    if n == 2:
        fams.append(ninths_D)
    elif n == 3:
        fams.append(old3d)
    return fams


def random_quasi_copula(rng: np.random.Generator, n: int, depth: int = 2, families=None):
    """Convex combinations and min/max blends of W, M, Pi (and by default the ninths example)."""
    fams = _base(n) if families is None else list(families)
    if depth == 0 or rng.random() < 0.3:
        return fams[rng.integers(len(fams))]
    f = random_quasi_copula(rng, n, depth - 1, fams)
    g = random_quasi_copula(rng, n, depth - 1, fams)
    kind = rng.integers(3)
    if kind == 0:
        w = float(rng.random())
        return lambda p: w * f(p) + (1 - w) * g(p)
    if kind == 1:
        return lambda p: np.minimum(f(p), g(p))
    return lambda p: np.maximum(f(p), g(p))


def random_axis_domain(rng: np.random.Generator, denom: int = 12) -> AxisDomain:
    """Finite union of closed intervals and points on the 1/denom lattice, containing 0 and 1."""
    cuts = sorted(set(rng.choice(np.arange(1, denom), size=rng.integers(0, 5), replace=False).tolist()))
    pts = [0] + cuts + [denom]
    # alternate pieces in / out of the set, start and end always in
    ivs = []
    for lo, hi in zip(pts, pts[1:]):
        if rng.random() < 0.5:
            ivs.append((lo, hi))
    ivs = [(0, 0)] + ivs + [(denom, denom)]
    merged = []
    for lo, hi in ivs:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(hi, merged[-1][1]))
        else:
            merged.append((lo, hi))
    return AxisDomain([(lo / denom, hi / denom) for lo, hi in merged])


def random_domain(rng: np.random.Generator, n: int, denom: int = 12) -> ProductDomain:
    return ProductDomain([random_axis_domain(rng, denom) for _ in range(n)])


def random_box(rng: np.random.Generator, n: int, min_width: float = 0.05) -> NBox:
    a, b = [], []
    for _ in range(n):
        lo, hi = sorted(rng.uniform(0, 1, size=2))
        if hi - lo < min_width:
            lo, hi = max(0.0, lo - min_width), min(1.0, hi + min_width)
        a.append(lo)
        b.append(hi)
    return NBox(a, b)


def random_box_mesh(rng: np.random.Generator, n: int, nodes: int = 5) -> Mesh:
    return Mesh.for_box(random_box(rng, n), nodes)


# --- brute-force oracles ------------------------------------------------------


def brute_force_segment(alpha: float, beta: float, a: float, b: float, nodes: int, q: float):
    """Node-wise max and min over every q-quantized increasing 1-Lipschitz
    sequence on ``nodes`` equally spaced points of [a, b] from alpha to beta."""
    h = (b - a) / (nodes - 1)
    steps = np.arange(0.0, h + q / 2, q)
    hi = np.full(nodes, -np.inf)
    lo = np.full(nodes, np.inf)
    found = False
    for incs in itertools.product(steps, repeat=nodes - 1):
        vals = alpha + np.concatenate([[0.0], np.cumsum(incs)])
        if vals[-1] != beta:
            continue
        found = True
        np.maximum(hi, vals, out=hi)
        np.minimum(lo, vals, out=lo)
    return (hi, lo) if found else (None, None)


def brute_force_fills(xs, ys, given: np.ndarray, q: float, vmax: float = 1.0):
    """Node-wise max and min over every q-quantized completion of ``given``
    (NaN = free) on the mesh xs x ys that is increasing and 1-Lipschitz
    along both axes.  Returns (None, None) if no completion exists."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    grid = np.array(given, dtype=float)
    free = [(i, j) for i in range(len(xs)) for j in range(len(ys)) if np.isnan(grid[i, j])]
    hi = np.full_like(grid, -np.inf)
    lo = np.full_like(grid, np.inf)
    levels = np.arange(0.0, vmax + q / 2, q)

    def ok(i, j):
        v = grid[i, j]
        for axis, coords in ((0, xs), (1, ys)):
            for s in (-1, 1):
                a, b = (i + s, j) if axis == 0 else (i, j + s)
                if not (0 <= a < len(xs) and 0 <= b < len(ys)):
                    continue
                w = grid[a, b]
                if np.isnan(w):
                    continue
                p, r = (i, a) if axis == 0 else (j, b)
                d = (w - v) * s  # increment in increasing coordinate order
                if d < -1e-12 or d > abs(coords[p] - coords[r]) + 1e-12:
                    return False
        return True

    found = False

    def dfs(t):
        nonlocal found
        if t == len(free):
            found = True
            np.maximum(hi, grid, out=hi)
            np.minimum(lo, grid, out=lo)
            return
        i, j = free[t]
        for v in levels:
            grid[i, j] = v
            if ok(i, j):
                dfs(t + 1)
        grid[i, j] = np.nan

    dfs(0)
    return (hi, lo) if found else (None, None)
