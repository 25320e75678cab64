import math

import numpy as np
import pytest
import scipy.sparse.linalg as spla
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_field
from gpfv.discrete_ops import (
    BCMode,
    assemble_laplacian,
    cell_gradient,
    discrete_ibp_residual,
    edge_gradient,
    h1_seminorm,
    ibp_scale,
    inner_product,
    lp_norm,
    mean_interpolant,
    pointwise_interpolant,
    triangle_rule,
)
from gpfv.mesh import build_polygon_mesh, generate_uniform_rectangle_mesh


def five_point(n: int, dirichlet: bool) -> np.ndarray:
    """Independent 5-point stencil on an n x n unit-square grid, row-major cells."""
    s = 1.0 / n
    end = -3.0 if dirichlet else -1.0  # ghost value 0 at distance s/2 doubles the boundary flux
    T = np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)
    T[0, 0] = T[-1, -1] = end
    eye = np.eye(n)
    return (np.kron(eye, T) + np.kron(T, eye)) / s**2


# ------------------------------------------------------------------ norms


def test_norm_examples(two_cell):
    assert lp_norm(two_cell, np.zeros(2), 2) == 0.0
    assert lp_norm(two_cell, np.zeros(2), math.inf) == 0.0
    assert lp_norm(two_cell, np.array([0.0, 1.0]), 2) == 1.0
    assert lp_norm(two_cell, np.array([3.0, -4.0]), math.inf) == 4.0
    assert h1_seminorm(two_cell, np.array([0.0, 1.0])) == 1.0
    assert h1_seminorm(two_cell, np.array([2.5, 2.5])) == 0.0
    with pytest.raises(ValueError):
        lp_norm(two_cell, np.zeros(2), 0.5)
    with pytest.raises(ValueError):
        h1_seminorm(two_cell, np.zeros(3))


def test_inner_product_examples(two_cell):
    assert inner_product(two_cell, np.array([1, 0]), np.array([0, 1])) == 0
    assert inner_product(two_cell, np.array([1 + 1j, 0]), np.array([1, 0])) == 1 + 1j


def test_inner_product_properties(disk_coarse, rng):
    U, W = random_field(rng, disk_coarse.n_cells), random_field(rng, disk_coarse.n_cells)
    uu = inner_product(disk_coarse, U, U)
    assert uu.imag == 0 and uu.real > 0
    assert uu.real == pytest.approx(lp_norm(disk_coarse, U) ** 2, rel=1e-13)
    assert inner_product(disk_coarse, U, W) == pytest.approx(np.conj(inner_product(disk_coarse, W, U)), rel=1e-13)
    a = 0.3 - 2j
    assert inner_product(disk_coarse, a * U, W) == pytest.approx(a * inner_product(disk_coarse, U, W), rel=1e-13)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, 64, elements=st.floats(-1e3, 1e3)), st.floats(-1e3, 1e3))
def test_h1_shift_invariant(values, c):
    m = generate_uniform_rectangle_mesh(8, 8)
    assert h1_seminorm(m, values + c) == pytest.approx(h1_seminorm(m, values), rel=1e-9, abs=1e-6)


# -------------------------------------------------------------- Laplacian


def test_two_cell_laplacian(two_cell):
    np.testing.assert_array_equal(assemble_laplacian(two_cell, BCMode.INTERIOR_ONLY).dense(), [[-1, 1], [1, -1]])


@pytest.mark.parametrize("dirichlet", [False, True])
def test_five_point_stencil(dirichlet):
    n = 8
    A = assemble_laplacian(generate_uniform_rectangle_mesh(n, n), "dirichlet" if dirichlet else "interior")
    np.testing.assert_array_equal(A.dense(), five_point(n, dirichlet))


def test_bc_mode_parse():
    assert BCMode.parse("InteriorOnly") is BCMode.INTERIOR_ONLY
    assert BCMode.parse("dirichlet-flux") is BCMode.DIRICHLET_FLUX
    with pytest.raises(ValueError):
        BCMode.parse("neumann")


@pytest.mark.parametrize("mode", ["interior", "dirichlet"])
def test_laplacian_self_adjoint_and_nonpositive(disk_coarse, rng, mode):
    A = assemble_laplacian(disk_coarse, mode)
    U, W = random_field(rng, disk_coarse.n_cells), random_field(rng, disk_coarse.n_cells)
    lhs = inner_product(disk_coarse, A.apply(U), W)
    rhs = inner_product(disk_coarse, U, A.apply(W))
    assert abs(lhs - rhs) <= 1e-12 * abs(lhs)
    assert (A.stiffness - A.stiffness.T).count_nonzero() == 0
    assert inner_product(disk_coarse, -A.apply(U), U).real >= 0


def test_laplacian_pattern_matches_adjacency(disk_coarse):
    S = assemble_laplacian(disk_coarse, "interior").stiffness.tocoo()
    off = {(int(r), int(c)) for r, c in zip(S.row, S.col) if r != c}
    i = disk_coarse.interior
    pairs = {(int(k), int(l)) for k, l in zip(disk_coarse.edge_K[i], disk_coarse.edge_L[i])}
    assert off == pairs | {(l, k) for k, l in pairs}


def test_energy_identity_interior(disk_coarse, rng):
    A = assemble_laplacian(disk_coarse, "interior")
    for _ in range(10):
        U = random_field(rng, disk_coarse.n_cells)
        lhs = inner_product(disk_coarse, -A.apply(U), U).real
        assert lhs == pytest.approx(h1_seminorm(disk_coarse, U) ** 2, rel=1e-12)


# ------------------------------------------------------------ interpolants


def test_pointwise_examples(two_cell, disk_coarse, rng):
    np.testing.assert_array_equal(pointwise_interpolant(lambda x, y: np.ones_like(x), two_cell), [1, 1])
    np.testing.assert_array_equal(pointwise_interpolant(lambda x, y: x, two_cell), [0.5, 1.5])
    g = lambda x, y: np.sin(3 * x) * y  # noqa: E731
    np.testing.assert_array_equal(
        pointwise_interpolant(lambda x, y: np.exp(g(x, y)), disk_coarse), np.exp(pointwise_interpolant(g, disk_coarse))
    )
    f2 = lambda x, y: x * y + 1  # noqa: E731
    np.testing.assert_array_equal(
        pointwise_interpolant(lambda x, y: g(x, y) * f2(x, y), disk_coarse),
        pointwise_interpolant(g, disk_coarse) * pointwise_interpolant(f2, disk_coarse),
    )


def test_pointwise_scalar_only_callable(two_cell):
    out = pointwise_interpolant(lambda x, y: math.hypot(x, y), two_cell)
    np.testing.assert_allclose(out, [math.hypot(0.5, 0.5), math.hypot(1.5, 0.5)])


def test_mean_interpolant_examples():
    unit = generate_uniform_rectangle_mesh(1, 1)
    assert mean_interpolant(lambda x, y: x, unit)[0] == pytest.approx(0.5, abs=1e-15)
    for q in (1, 2, 5):
        np.testing.assert_allclose(mean_interpolant(lambda x, y: 0 * x + 3.25, unit, q), 3.25, rtol=1e-15)


REF_TRIANGLE = (np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), [np.array([0, 1, 2])], np.array([[0.5, 0.5]]))


@pytest.mark.parametrize("degree", [1, 2, 5])
def test_quadrature_exactness(degree):
    # mean over the reference triangle of x^a y^b is 2 a! b! / (a+b+2)!
    mesh = build_polygon_mesh(*REF_TRIANGLE, check_tol=None)
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = 2 * math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)
            got = mean_interpolant(lambda x, y: x**a * y**b, mesh, degree)[0]
            assert got == pytest.approx(exact, rel=1e-13, abs=1e-16), (a, b)


def test_quadrature_rule_selection():
    pts, w = triangle_rule(3)
    assert len(w) == 7 and w.sum() == pytest.approx(1.0, rel=1e-15)
    with pytest.raises(ValueError):
        triangle_rule(6)


def test_mean_interpolant_complex(disk_coarse):
    f = lambda x, y: np.exp(1j * x) * (1 + y * y)  # noqa: E731
    v = mean_interpolant(f, disk_coarse, 5)
    assert np.iscomplexobj(v)
    re = mean_interpolant(lambda x, y: np.real(f(x, y)), disk_coarse, 5)
    im = mean_interpolant(lambda x, y: np.imag(f(x, y)), disk_coarse, 5)
    np.testing.assert_allclose(v, re + 1j * im, rtol=1e-14, atol=1e-15)
    # O(h^2) gap between averages and centroid-free point values is not expected; only O(h)
    gap = np.abs(v - pointwise_interpolant(f, disk_coarse)).max()
    assert gap < 2 * disk_coarse.h


def _sinsin(x, y):
    return np.sin(math.pi * x) * np.sin(math.pi * y)


def _order(errors):
    return [math.log2(a / b) for a, b in zip(errors, errors[1:])]


def test_interpolant_gap_order():
    errs = []
    for n in (8, 16, 32, 64):
        m = generate_uniform_rectangle_mesh(n, n)
        errs.append(h1_seminorm(m, pointwise_interpolant(_sinsin, m) - mean_interpolant(_sinsin, m)))
    assert min(_order(errs)) >= 1.0


def test_mean_interpolant_h1_stable():
    # ||pi_h f||_{H1_h} / ||f||_{H1}, with ||grad sin sin||^2 = pi^2/2 on the unit square
    ref = math.pi / math.sqrt(2)
    ratios = []
    for n in (8, 16, 32, 64):
        m = generate_uniform_rectangle_mesh(n, n)
        ratios.append(h1_seminorm(m, mean_interpolant(_sinsin, m)) / ref)
    assert max(ratios) < 1.1
    assert abs(ratios[-1] - 1) < abs(ratios[0] - 1)


def smooth_u(x, y):
    return np.sin(math.pi * x) * np.sin(2 * math.pi * y) * np.exp(x)


def smooth_lap_u(x, y):
    s1, c1 = np.sin(math.pi * x), np.cos(math.pi * x)
    uxx = np.exp(x) * ((1 - math.pi**2) * s1 + 2 * math.pi * c1)
    return (uxx - 4 * math.pi**2 * s1 * np.exp(x)) * np.sin(2 * math.pi * y)


def consistency_errors(n):
    """(L2_h residual on cells away from the boundary, H1_h norm of A^-1 residual)."""
    m = generate_uniform_rectangle_mesh(n, n)
    A = assemble_laplacian(m, "dirichlet")
    r = A.apply(pointwise_interpolant(smooth_u, m)) - mean_interpolant(smooth_lap_u, m, 5)
    inner = np.ones(m.n_cells, bool)
    inner[m.edge_K[m.exterior]] = False
    return lp_norm(m, np.where(inner, r, 0)), h1_seminorm(m, spla.spsolve(A.matrix.tocsc(), r))


def test_flux_consistency_order():
    l2, h1 = zip(*(consistency_errors(n) for n in (16, 32, 64, 128)))
    assert min(_order(l2)) >= 1.9
    assert min(_order(h1)) >= 1.0


# ---------------------------------------------------------------- gradients


def test_edge_gradient_two_cell(two_cell):
    g = edge_gradient(two_cell, np.array([0.0, 1.0]))
    (e,) = two_cell.interior
    sign = 1.0 if two_cell.edge_K[e] == 0 else -1.0
    np.testing.assert_allclose(g[e] * sign, [2, 0])


def test_edge_gradient_constant_and_linear(disk_coarse, rng):
    g = edge_gradient(disk_coarse, np.full(disk_coarse.n_cells, 2.0 - 1j))
    assert np.all(g[disk_coarse.interior] == 0)
    U, W = random_field(rng, disk_coarse.n_cells), random_field(rng, disk_coarse.n_cells)
    a, b = 1.5 - 0.5j, -2.0
    np.testing.assert_allclose(
        edge_gradient(disk_coarse, a * U + b * W),
        a * edge_gradient(disk_coarse, U) + b * edge_gradient(disk_coarse, W), atol=1e-10,
    )


def test_cell_gradient_affine_exact_on_interior_cells():
    m = generate_uniform_rectangle_mesh(8, 8)
    a, b = 0.75, -1.25
    g = cell_gradient(m, pointwise_interpolant(lambda x, y: a * x + b * y, m))
    inner = np.ones(m.n_cells, bool)
    inner[m.edge_K[m.exterior]] = False
    np.testing.assert_allclose(g[inner].real, np.tile([a, b], (inner.sum(), 1)), atol=1e-13)
    assert np.all(cell_gradient(m, np.full(m.n_cells, 3.0 + 1j)) == 0)


def test_cell_gradient_linear(disk_coarse, rng):
    U, W = random_field(rng, disk_coarse.n_cells), random_field(rng, disk_coarse.n_cells)
    np.testing.assert_allclose(
        cell_gradient(disk_coarse, 2 * U - 1j * W),
        2 * cell_gradient(disk_coarse, U) - 1j * cell_gradient(disk_coarse, W), atol=1e-9,
    )


def test_ibp_identity(two_cell, disk, rng):
    U = rng.standard_normal(2) + 1j * rng.standard_normal(2)
    assert discrete_ibp_residual(two_cell, U, U) <= 1e-14 * ibp_scale(two_cell, U, U)
    worst = 0.0
    for _ in range(100):
        U, W = random_field(rng, disk.n_cells), random_field(rng, disk.n_cells)
        worst = max(worst, discrete_ibp_residual(disk, U, W) / ibp_scale(disk, U, W))
    assert worst <= 1e-12


# ---------------------------------------------------------- inequalities


def _boundary_free(mesh, U):
    U = U.copy()
    U[mesh.edge_K[mesh.exterior]] = 0
    return U


@pytest.mark.parametrize("n", [4, 8, 16, 32])
def test_poincare(n, rng):
    m = generate_uniform_rectangle_mesh(n, n)
    for _ in range(5):
        U = _boundary_free(m, random_field(rng, m.n_cells))
        assert lp_norm(m, U) <= m.domain_diameter * h1_seminorm(m, U)


def test_linf_log_ratio_bounded(rng):
    ratios = []
    for n in (8, 16, 32, 64, 128):
        m = generate_uniform_rectangle_mesh(n, n)
        best = 0.0
        for _ in range(5):
            U = _boundary_free(m, random_field(rng, m.n_cells))
            best = max(best, lp_norm(m, U, math.inf) / (abs(math.log(m.h)) * h1_seminorm(m, U)))
        # bumps are the worst case for the embedding
        bump = _boundary_free(m, pointwise_interpolant(lambda x, y: np.exp(-((x - .5)**2 + (y - .5)**2) * n), m))
        best = max(best, lp_norm(m, bump, math.inf) / (abs(math.log(m.h)) * h1_seminorm(m, bump)))
        ratios.append(best)
    assert max(ratios) < 2.0
    assert ratios[-1] <= 1.5 * ratios[0]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_product_estimate(seed):
    rng = np.random.default_rng(seed)
    m = generate_uniform_rectangle_mesh(6, 5, 1.0, 0.7)
    U, W = random_field(rng, m.n_cells), random_field(rng, m.n_cells)
    lhs = h1_seminorm(m, U * W)
    rhs = math.sqrt(2) * (lp_norm(m, U, math.inf) * h1_seminorm(m, W) + h1_seminorm(m, U) * lp_norm(m, W, math.inf))
    assert lhs <= rhs * (1 + 1e-12)
