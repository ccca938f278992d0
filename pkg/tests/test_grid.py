import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from phenokpp.grid import BC, Axis, assemble_operator, axis_stiffness, build_grid


def test_total_nodes_examples():
    g = build_grid([Axis(1.0, 8)], [Axis(1.0, 9, "neumann")])
    assert g.total_nodes == 72
    g = build_grid([Axis(2.0, 4), Axis(2.0, 4)], [Axis(1.0, 5, "neumann")])
    assert g.total_nodes == 80
    assert g.shape == (4, 4, 5)


@pytest.mark.parametrize(
    "kwargs",
    [dict(length=1.0, points=2), dict(length=0.0, points=5), dict(length=-1.0, points=5), dict(length=1.0, points=4.5)],
)
def test_axis_rejects_bad_input(kwargs):
    with pytest.raises(ValueError):
        Axis(**kwargs)


def test_build_grid_rejects_dimensions_and_periodic_phenotype():
    a = Axis(1.0, 4)
    n = Axis(1.0, 5, "neumann")
    with pytest.raises(ValueError):
        build_grid([a, a, a], [n])
    with pytest.raises(ValueError):
        build_grid([], [n])
    with pytest.raises(ValueError):
        build_grid([a], [n, n, n])
    with pytest.raises(ValueError):
        build_grid([a], [a])


def test_bc_parse():
    assert BC.parse("Neumann") is BC.NEUMANN
    assert BC.parse("dirichlet") is BC.DIRICHLET
    with pytest.raises(ValueError):
        BC.parse("robin")


@pytest.mark.parametrize(
    "bc, points, h",
    [("periodic", 8, 1 / 8), ("neumann", 9, 1 / 8), ("dirichlet", 7, 1 / 8)],
)
def test_spacing(bc, points, h):
    assert Axis(1.0, points, bc).spacing == pytest.approx(h, rel=0, abs=1e-15)


def test_coordinates():
    assert np.allclose(Axis(1.0, 4).coordinates, [0, 0.25, 0.5, 0.75])
    assert np.allclose(Axis(2.0, 5, "neumann", -1.0).coordinates, [-1, -0.5, 0, 0.5, 1])
    assert np.allclose(Axis(4.0, 3, "dirichlet", -2.0).coordinates, [-1, 0, 1])


def test_periodic_rows_are_second_differences():
    ax = Axis(1.0, 8)
    A = axis_stiffness(ax).toarray()
    h2 = ax.spacing**2
    for i in range(8):
        row = np.zeros(8)
        row[i], row[(i - 1) % 8], row[(i + 1) % 8] = -2 / h2, 1 / h2, 1 / h2
        assert np.array_equal(A[i], row)


def test_interior_rows_on_neumann_axis():
    g = build_grid([Axis(1.0, 4)], [Axis(1.0, 9, "neumann")])
    op = assemble_operator(g, np.zeros(g.total_nodes))
    A = sp.diags(1 / op.weights) @ op.matrix
    h2 = (1 / 8) ** 2
    i = g.index((1, 4))
    row = A.getrow(i).toarray().ravel()
    assert row[i] == pytest.approx(-2 / h2 - 2 / (1 / 4) ** 2)
    assert row[g.index((1, 3))] == pytest.approx(1 / h2)
    assert row[g.index((1, 5))] == pytest.approx(1 / h2)


def _random_axes(draw, bcs, max_points=7):
    n = draw(st.integers(1, 2))
    return [
        Axis(draw(st.floats(0.5, 3.0)), draw(st.integers(3, max_points)), draw(st.sampled_from(bcs)))
        for _ in range(n)
    ]


@st.composite
def grids(draw):
    space = _random_axes(draw, ["periodic", "neumann", "dirichlet"])
    pheno = _random_axes(draw, ["neumann", "dirichlet"])
    return build_grid(space, pheno)


@given(grids(), st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_operator_exactly_symmetric(g, d, seed):
    r = np.random.default_rng(seed).normal(size=g.total_nodes)
    B = assemble_operator(g, r, d).matrix
    assert abs(B - B.T).max() == 0.0


@given(grids())
def test_total_nodes_is_product_and_index_roundtrip(g):
    assert g.total_nodes == math.prod(a.points for a in g.axes)
    for k in (0, g.total_nodes // 3, g.total_nodes - 1):
        assert g.index(g.multi_index(k)) == k


@given(grids())
def test_laplacian_kills_constants_on_closed_axes(g):
    op = assemble_operator(g, np.zeros(g.total_nodes))
    row_sums = np.asarray(op.laplacian.sum(axis=1)).ravel()
    # rows touching a Dirichlet boundary leak; all others conserve
    closed = np.ones(g.total_nodes, dtype=bool)
    for k, a in enumerate(g.axes):
        if a.bc is BC.DIRICHLET:
            idx = np.indices(g.shape)[k].ravel()
            closed &= (idx != 0) & (idx != a.points - 1)
    scale = max(1.0, float(abs(op.laplacian).max()))
    assert np.all(np.abs(row_sums[closed]) <= 1e-12 * scale)


def test_coordinates_match_multi_index(small_grid):
    x, th = small_grid.space_coords(), small_grid.pheno_coords()
    for k in (0, 17, 71):
        i, j = small_grid.multi_index(k)
        assert x[k, 0] == small_grid.space_axes[0].coordinates[i]
        assert th[k, 0] == small_grid.pheno_axes[0].coordinates[j]


def test_assemble_rejects_bad_values(small_grid):
    n = small_grid.total_nodes
    with pytest.raises(ValueError):
        assemble_operator(small_grid, np.zeros(n - 1))
    bad = np.zeros(n)
    bad[3] = np.nan
    with pytest.raises(ValueError):
        assemble_operator(small_grid, bad)
    bad[3] = np.inf
    with pytest.raises(ValueError):
        assemble_operator(small_grid, bad)
    with pytest.raises(ValueError):
        assemble_operator(small_grid, np.zeros(n), d=0.0)


def test_diffusivity_scales_space_part_only():
    g = build_grid([Axis(1.0, 6)], [Axis(1.0, 5, "neumann")])
    zero = np.zeros(g.total_nodes)
    l1 = assemble_operator(g, zero, 1.0).laplacian
    l4 = assemble_operator(g, zero, 4.0).laplacian
    f = np.cos(2 * np.pi * g.space_coords()[:, 0])  # x-only: theta part is zero
    assert np.allclose(l4 @ f, 4 * (l1 @ f), atol=1e-10)
    t = np.cos(np.pi * g.pheno_coords()[:, 0])  # theta-only: x part is zero
    assert np.allclose(l4 @ t, l1 @ t, atol=1e-10)


def test_with_shift_adds_constant(small_grid, rng):
    r = rng.normal(size=small_grid.total_nodes)
    op = assemble_operator(small_grid, r)
    v = rng.normal(size=small_grid.total_nodes)
    assert np.allclose(op.with_shift(0.7).apply(v), op.apply(v) + 0.7 * v, atol=1e-10)


def test_second_order_consistency():
    # smooth f = sin(2 pi x) cos(pi theta), Neumann-compatible on [0, 1]
    errs = []
    for n in (8, 16, 32, 64):
        g = build_grid([Axis(1.0, n)], [Axis(1.0, n + 1, "neumann")])
        x, th = g.space_coords()[:, 0], g.pheno_coords()[:, 0]
        f = np.sin(2 * np.pi * x) * np.cos(np.pi * th)
        op = assemble_operator(g, np.zeros(g.total_nodes), 2.0)
        exact = -(2 * 4 * np.pi**2 + np.pi**2) * f
        errs.append(np.max(np.abs(op.apply(f) - exact)))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((orders > 1.9) & (orders < 2.1)), orders


def test_dirichlet_sine_is_discrete_eigenvector():
    R, n = 1.5, 29
    ax = Axis(2 * R, n, "dirichlet", -R)
    g = build_grid([ax], [Axis(1.0, 3, "neumann")])
    x = g.space_coords()[:, 0]
    f = np.sin(np.pi * (x + R) / (2 * R))
    op = assemble_operator(g, np.zeros(g.total_nodes))
    h = ax.spacing
    lam_h = -4 / h**2 * np.sin(np.pi * h / (4 * R)) ** 2
    assert np.allclose(op.apply(f), lam_h * f, atol=1e-10)


def test_describe_and_weights(small_grid):
    d = small_grid.describe()
    assert d["total_nodes"] == 72
    assert d["pheno"][0][2] == "neumann"
    assert small_grid.pheno_quadrature.sum() == pytest.approx(2.0)
    assert small_grid.space_quadrature.sum() == pytest.approx(1.0)
