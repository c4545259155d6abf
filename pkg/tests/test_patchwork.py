import numpy as np
import pytest

from qcpatch.axioms import check_increasing, check_lipschitz, is_quasi_copula
from qcpatch.examples import (
    expected_A,
    expected_B,
    expected_G,
    expected_margin,
    frechet_M,
    frechet_W,
    ninths_D,
    old3d,
    product_Pi,
)
from qcpatch.grid import GridFunction, Mesh, NBox, corner_point
from qcpatch.patchwork import (
    A_at,
    B_at,
    BoundarySet,
    ConditionsPBError,
    DegenerateVolumeError,
    PatchError,
    StepIError,
    additive_patch_A,
    additive_patch_B,
    check_conditions_PB,
    conjectured_patch_P,
    envelope_bounds,
    local_patch_bounds,
    patch_difference_G,
    patch_P_at,
    pseudo_inverse,
    rectangle_volumes,
    sklar_factorize,
    stepI_at,
    stepI_lower,
    stepI_upper,
)

from helpers import brute_force_fills, random_box_mesh, random_quasi_copula

THIRD = 1 / 3


def example_boundary(nodes=9):
    return BoundarySet.from_function(Mesh([np.linspace(THIRD, 2 * THIRD, nodes)] * 3), old3d)


def unit_boundary(func, n, nodes=9):
    return BoundarySet.from_function(Mesh.uniform(n, nodes), func)


def parts(rep):
    return {p.name: p.passed for p in rep.parts}


# --- boundary sets and conditions ------------------------------------------


def test_boundary_set_validation():
    mesh = Mesh.uniform(2, 3)
    bs = unit_boundary(product_Pi, 2, 3)
    with pytest.raises(PatchError):
        BoundarySet(mesh, bs.lower[:1], bs.upper)
    with pytest.raises(PatchError):
        BoundarySet(Mesh.uniform(2, 4), bs.lower, bs.upper)
    with pytest.raises(PatchError):
        BoundarySet(Mesh.uniform(1, 3), (), ())


def test_from_grid_matches_from_function():
    f = GridFunction.from_function(Mesh.uniform(3, 7), old3d)
    box = NBox([1 / 6, 1 / 3, 0], [5 / 6, 1, 1 / 2])
    a = BoundarySet.from_grid(f, box)
    b = BoundarySet.from_function(a.mesh, old3d)
    for k in range(3):
        np.testing.assert_allclose(a.lower[k].values, b.lower[k].values, atol=1e-15)
        np.testing.assert_allclose(a.upper[k].values, b.upper[k].values, atol=1e-15)
    with pytest.raises(PatchError):
        BoundarySet.from_grid(f, NBox([0.1, 0, 0], [1, 1, 1]))


def test_example_boundary_satisfies_PB():
    rep = check_conditions_PB(example_boundary())
    assert rep.passed, rep.summary()


@pytest.mark.parametrize("n", [2, 3, 4])
def test_copula_boundary_satisfies_PB(n):
    assert check_conditions_PB(unit_boundary(product_Pi, n, 5)).passed


def test_PB_iv_fails_for_flat_volume():
    # M on [0, 1/2] x [1/2, 1] puts no mass on the box: rectangle volumes are constant
    bs = BoundarySet.from_function(Mesh([np.linspace(0, 0.5, 5), np.linspace(0.5, 1, 5)]), frechet_M)
    rep = check_conditions_PB(bs)
    assert parts(rep) == {"PB(i)": True, "PB(ii)": True, "PB(iii)": True, "PB(iv)": False}
    assert np.all(rectangle_volumes(bs, 0).values == 0.0)


def test_PB_iv_fails_for_flattened_face():
    bs = unit_boundary(product_Pi, 3, 5)
    # F'_1(y, z) = z does not depend on y, so neither does the volume of [0, 1] x [0, y] x [0, z]
    flat = bs.upper[0].with_values(np.broadcast_to(bs.upper[0].mesh.axes[1], (5, 5)))
    bs2 = BoundarySet(bs.mesh, bs.lower, (flat,) + bs.upper[1:])
    vol = rectangle_volumes(bs2, 0)
    assert np.all(np.diff(vol.values, axis=0) == 0.0)
    rep = check_conditions_PB(bs2)
    assert not parts(rep)["PB(iv)"]
    assert any("constant" in v.kind for v in rep.parts[-1].violations)


def test_PB_agreement_and_gap_failures():
    bs = unit_boundary(product_Pi, 2, 5)
    v = bs.upper[0].values.copy()
    v[-1] = 0.9  # F'_1(1) no longer equals F'_2(1)
    rep = check_conditions_PB(BoundarySet(bs.mesh, bs.lower, (bs.upper[0].with_values(v), bs.upper[1])))
    assert not parts(rep)["PB(i)"]
    low = bs.lower[1].with_values(bs.lower[1].values + 0.0)
    up = bs.upper[1].with_values(bs.upper[1].values - 0.5)
    rep = check_conditions_PB(BoundarySet(bs.mesh, (bs.lower[0], low), (bs.upper[0], up)))
    assert not parts(rep)["PB(iii)"]
    with pytest.raises(ConditionsPBError):
        additive_patch_A(BoundarySet(bs.mesh, (bs.lower[0], low), (bs.upper[0], up)))


# --- Step I -----------------------------------------------------------------


def stepI_inputs(func, n=3, nodes=17):
    c = GridFunction.from_function(Mesh.uniform(n - 1, nodes), func)
    return [c] * n


def test_stepI_upper_of_M_is_M():
    up = stepI_upper(stepI_inputs(frechet_M))
    np.testing.assert_array_equal(up.values.reshape(-1), frechet_M(up.mesh.nodes()))


def test_stepI_lower_of_products():
    lo = stepI_lower(stepI_inputs(product_Pi))
    x, y, z = lo.mesh.nodes().T
    expected = np.maximum.reduce([np.zeros_like(x), x + y * z - 1, y + x * z - 1, z + x * y - 1])
    np.testing.assert_allclose(lo.values.reshape(-1), expected, atol=1e-12, rtol=0)
    assert is_quasi_copula(lo).passed


def test_stepI_upper_of_products_at_half():
    up = stepI_upper(stepI_inputs(product_Pi, nodes=3))
    assert up.at((1, 1, 1)) == 0.25
    assert stepI_at(stepI_inputs(product_Pi, nodes=3), [[0.5] * 3], "upper")[0] == 0.25


def test_stepI_at_agrees_with_grid():
    cs = stepI_inputs(product_Pi, nodes=9)
    for mode, build in (("upper", stepI_upper), ("lower", stepI_lower)):
        g = build(cs)
        np.testing.assert_allclose(stepI_at(cs, g.mesh.nodes(), mode), g.values.reshape(-1), atol=1e-15)
    with pytest.raises(ValueError):
        stepI_at(cs, [[0.5] * 3], "middle")


@pytest.mark.parametrize("n", [2, 3, 4])
def test_stepI_bounds_are_quasi_copulas_with_given_faces(n):
    rng = np.random.default_rng(n)
    f = random_quasi_copula(rng, n)
    full = GridFunction.from_function(Mesh.uniform(n, 5), f)
    cs = [GridFunction(Mesh.uniform(n - 1, 5), np.take(full.values, -1, axis=k)) for k in range(n)]
    up, lo = stepI_upper(cs), stepI_lower(cs)
    assert is_quasi_copula(up).passed and is_quasi_copula(lo).passed
    assert np.all(lo.values <= full.values + 1e-12) and np.all(full.values <= up.values + 1e-12)
    for k in range(n):
        np.testing.assert_allclose(np.take(up.values, -1, axis=k), cs[k].values, atol=1e-12)
        np.testing.assert_allclose(np.take(lo.values, -1, axis=k), cs[k].values, atol=1e-12)


def test_stepI_rejects_bad_inputs():
    good = stepI_inputs(product_Pi, nodes=5)
    with pytest.raises(StepIError):
        stepI_upper(good[:1])
    bad = good[0].with_values(good[0].values * 0.5)
    with pytest.raises(StepIError):
        stepI_upper([bad] + good[1:])
    with pytest.raises(StepIError):
        stepI_lower(stepI_inputs(product_Pi, n=2, nodes=5) + [good[0]])


# --- additive patches, G and margins ------------------------------------------


def test_example_closed_forms():
    bs = example_boundary(17)
    pc = patch_difference_G(bs)
    nodes = bs.mesh.nodes()
    np.testing.assert_allclose(pc.A.values.reshape(-1), expected_A(nodes), atol=1e-12, rtol=0)
    np.testing.assert_allclose(pc.B.values.reshape(-1), expected_B(nodes), atol=1e-12, rtol=0)
    np.testing.assert_allclose(pc.G.values.reshape(-1), expected_G(nodes), atol=1e-12, rtol=0)
    for m in pc.margins:
        np.testing.assert_allclose(m.values, expected_margin(m.mesh.axes[0]), atol=1e-12, rtol=0)
    assert pc.V == pytest.approx(-1 / 9, abs=1e-15)
    assert A_at(bs, [[THIRD] * 3])[0] == pytest.approx(0.0, abs=1e-15)


def test_example_face_values():
    pts = Mesh([np.linspace(THIRD, 2 * THIRD, 7)] * 2).nodes()
    y, z = pts.T
    np.testing.assert_allclose(old3d(np.column_stack([np.full_like(y, THIRD), y, z])), (y - THIRD) * z, atol=1e-15)
    x, y = pts.T
    np.testing.assert_allclose(
        old3d(np.column_stack([x, y, np.full_like(x, THIRD)])), 2 / 3 * (x + y) - (THIRD + x * y), atol=1e-15
    )


@pytest.mark.parametrize("n", [2, 3, 4])
def test_patches_match_their_faces(n):
    rng = np.random.default_rng(10 + n)
    for _ in range(5):
        mesh = random_box_mesh(rng, n, 4)
        f = random_quasi_copula(rng, n)
        bs = BoundarySet.from_function(mesh, f)
        A, B = additive_patch_A(bs), additive_patch_B(bs)
        for k in range(n):
            np.testing.assert_allclose(np.take(A.values, 0, axis=k), bs.lower[k].values, atol=1e-12)
            np.testing.assert_allclose(np.take(B.values, -1, axis=k), bs.upper[k].values, atol=1e-12)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_corner_and_margin_identities(n):
    rng = np.random.default_rng(20 + n)
    for _ in range(5):
        mesh = random_box_mesh(rng, n, 3)
        f = random_quasi_copula(rng, n)
        bs = BoundarySet.from_function(mesh, f)
        pc = patch_difference_G(bs)
        a, b = bs.box.a, bs.box.b
        Fa, Fb = f(a[None, :])[0], f(b[None, :])[0]
        assert A_at(bs, [a])[0] == pytest.approx(Fa, abs=1e-12)
        assert B_at(bs, [b])[0] == pytest.approx(Fb, abs=1e-12)
        assert A_at(bs, [b])[0] == pytest.approx(Fb - pc.V, abs=1e-12)
        assert B_at(bs, [a])[0] == pytest.approx(Fa - (-1) ** n * pc.V, abs=1e-12)
        for m in pc.margins:
            assert m.values[0] == pytest.approx(0.0, abs=1e-12)
            assert m.values[-1] == pytest.approx(pc.V, abs=1e-12)


def test_product_box_volume_and_factors():
    rng = np.random.default_rng(3)
    for n in (2, 3, 4):
        mesh = random_box_mesh(rng, n, 5)
        pc = patch_difference_G(BoundarySet.from_function(mesh, product_Pi))
        box = mesh.box()
        assert pc.V == pytest.approx(np.prod(box.b - box.a), abs=1e-12)
        for k, m in enumerate(pc.margins):
            t = m.mesh.axes[0]
            np.testing.assert_allclose(m.values, pc.V * (t - box.a[k]) / (box.b[k] - box.a[k]), atol=1e-12)
        sf = sklar_factorize(pc)
        for q in sf.factors:
            np.testing.assert_allclose(q.values.reshape(-1), product_Pi(q.mesh.nodes()), atol=1e-12)
        assert all(r.passed for r in sf.reports)


def test_example_factors_are_products():
    sf = sklar_factorize(patch_difference_G(example_boundary(17)))
    for q in sf.factors:
        np.testing.assert_allclose(q.values.reshape(-1), product_Pi(q.mesh.nodes()), atol=1e-12)


def test_uniform_factor_mesh():
    sf = sklar_factorize(patch_difference_G(example_boundary(9)), nodes=5)
    for q in sf.factors:
        assert q.mesh == Mesh.uniform(2, 5)
        np.testing.assert_allclose(q.values.reshape(-1), product_Pi(q.mesh.nodes()), atol=1e-12)


def test_M_box_factor_is_identity():
    bs = BoundarySet.from_function(Mesh([np.linspace(0.25, 0.75, 9)] * 2), frechet_M)
    pc = patch_difference_G(bs)
    assert pc.V == pytest.approx(0.5)
    sf = sklar_factorize(pc)
    for q in sf.factors:
        np.testing.assert_allclose(q.values, q.mesh.axes[0], atol=1e-12)


def test_zero_volume_cannot_be_factored():
    bs = BoundarySet.from_function(Mesh([np.linspace(0, 0.5, 5), np.linspace(0.5, 1, 5)]), frechet_M)
    with pytest.raises(DegenerateVolumeError):
        sklar_factorize(patch_difference_G(bs))


def test_pseudo_inverse_plateau_and_interpolation():
    m = GridFunction(Mesh([[0, 0.25, 0.5, 0.75, 1]]), [0, 0.5, 0.5, 0.75, 1])
    np.testing.assert_allclose(pseudo_inverse(m, [0, 0.25, 0.5, 0.625, 1]), [0, 0.125, 0.25, 0.5, 1])


# --- conjectured patch ----------------------------------------------------------


def test_conjectured_patch_bivariate_is_a_patch():
    rng = np.random.default_rng(4)
    done = 0
    while done < 20:
        mesh = random_box_mesh(rng, 2, 9)
        bs = BoundarySet.from_function(mesh, random_quasi_copula(rng, 2))
        if not check_conditions_PB(bs).passed:
            continue
        pc = patch_difference_G(bs)
        if abs(pc.V) < 1e-3:
            continue
        Q = random_quasi_copula(rng, 2)
        P = conjectured_patch_P(pc, Q)
        assert check_increasing(P).passed and check_lipschitz(P).passed
        # P has the prescribed boundary
        for k in range(2):
            np.testing.assert_allclose(np.take(P.values, 0, axis=k), bs.lower[k].values, atol=1e-12)
            np.testing.assert_allclose(np.take(P.values, -1, axis=k), bs.upper[k].values, atol=1e-12)
        done += 1


def test_conjectured_patch_fails_in_three_dimensions():
    pc = patch_difference_G(example_boundary(33))
    sf = sklar_factorize(pc)
    P = conjectured_patch_P(pc, sf.combined_at)
    assert not check_increasing(P).passed
    assert np.any(np.diff(P.values, axis=0) < -1e-9)
    line = patch_P_at(pc, sf.combined_at, [[19 / 30, 0.5, 0.4], [2 / 3, 0.5, 0.4]])
    np.testing.assert_allclose(line, [123 / 900, 120 / 900], atol=1e-12)


# --- local bounds ------------------------------------------------------------


def test_local_bounds_recover_frechet_hoeffding():
    up, lo = local_patch_bounds(unit_boundary(product_Pi, 2, 33))
    nodes = up.mesh.nodes()
    np.testing.assert_array_equal(up.values.reshape(-1), frechet_M(nodes))
    np.testing.assert_array_equal(lo.values.reshape(-1), frechet_W(nodes))


def test_local_bounds_sandwich_additive_patches():
    bs = example_boundary(17)
    up, lo = local_patch_bounds(bs)
    A, B = additive_patch_A(bs), additive_patch_B(bs)
    F = GridFunction.from_function(bs.mesh, old3d)
    # F itself is a patch with this boundary
    assert np.all(lo.values <= F.values + 1e-12) and np.all(F.values <= up.values + 1e-12)
    # A and B each carry only half of the faces: A rises from the lower
    # faces, B falls from the upper ones, and V != 0 pushes them across
    # the opposite bound near the far corner
    assert np.all(lo.values <= A.values + 1e-12) and np.all(B.values <= up.values + 1e-12)
    assert A.at((-1, -1, -1)) - up.at((-1, -1, -1)) == pytest.approx(-patch_difference_G(bs).V, abs=1e-12)


def test_local_bounds_on_degenerate_box():
    # a_1 = b_1: every point sits on both faces 1, so the bounds collapse
    rng = np.random.default_rng(5)
    f = random_quasi_copula(rng, 3)
    box = NBox([0.5, 0.2, 0.1], [0.5, 0.9, 0.6])
    x = np.column_stack([np.full(50, 0.5), rng.uniform(0.2, 0.9, 50), rng.uniform(0.1, 0.6, 50)])
    lower_vals, upper_vals, from_a, to_b = [], [], [], []
    for k in range(3):
        z = np.zeros(3, dtype=int)
        z[k] = -1
        lower_vals.append(f(corner_point(box, x, z)))
        z[k] = 1
        upper_vals.append(f(corner_point(box, x, z)))
        from_a.append(x[:, k] - box.a[k])
        to_b.append(x[:, k] - box.b[k])
    up, lo = envelope_bounds(lower_vals, upper_vals, from_a, to_b)
    np.testing.assert_allclose(up, f(x), atol=1e-15)
    np.testing.assert_allclose(lo, f(x), atol=1e-15)


@pytest.mark.parametrize("func", [frechet_M, frechet_W, product_Pi, lambda p: (frechet_M(p) + frechet_W(p)) / 2])
def test_local_bounds_match_brute_force_2d(func):
    bs = BoundarySet.from_function(Mesh([np.linspace(0, 1, 5), np.linspace(0.25, 1, 4)]), func)
    given = np.full(bs.mesh.shape, np.nan)
    given[0, :], given[-1, :] = bs.lower[0].values, bs.upper[0].values
    given[:, 0], given[:, -1] = bs.lower[1].values, bs.upper[1].values
    hi, lo = brute_force_fills(*bs.mesh.axes, given, 1 / 16)
    up, low = local_patch_bounds(bs)
    np.testing.assert_array_equal(up.values[1:-1, 1:-1], hi[1:-1, 1:-1])
    np.testing.assert_array_equal(low.values[1:-1, 1:-1], lo[1:-1, 1:-1])


def test_local_bounds_brute_force_on_ninths_quasi_copula():
    bs = BoundarySet.from_function(Mesh([np.linspace(1 / 3, 1, 3), np.linspace(0, 2 / 3, 3)]), ninths_D)
    up, low = local_patch_bounds(bs)
    # one free node at (2/3, 1/3): bounds from its four neighbours
    left, right = bs.lower[0].values[1], bs.upper[0].values[1]
    down, top = bs.lower[1].values[1], bs.upper[1].values[1]
    assert up.at((1, 1)) == pytest.approx(min(right, top, left + 1 / 3, down + 1 / 3), abs=1e-15)
    assert low.at((1, 1)) == pytest.approx(max(left, down, right - 1 / 3, top - 1 / 3), abs=1e-15)
