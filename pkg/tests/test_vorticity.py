import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_field
from gpfv.discrete_ops import pointwise_interpolant
from gpfv.mesh import Point2, generate_uniform_rectangle_mesh
from gpfv.vorticity import VortexMark, detect_vortices, pseudo_vorticity, write_vortex_csv


def interior_cells(mesh):
    inner = np.ones(mesh.n_cells, bool)
    inner[mesh.edge_K[mesh.exterior]] = False
    return inner


def test_affine_field_unit_vorticity():
    m = generate_uniform_rectangle_mesh(8, 8)
    w = pseudo_vorticity(m, pointwise_interpolant(lambda x, y: x + 1j * y, m))
    np.testing.assert_array_equal(w[interior_cells(m)], 1.0)


def test_real_field_zero(disk, rng):
    assert np.all(pseudo_vorticity(disk, rng.standard_normal(disk.n_cells)) == 0.0)


def test_conjugation_flips_sign(disk_coarse, rng):
    U = random_field(rng, disk_coarse.n_cells)
    np.testing.assert_array_equal(pseudo_vorticity(disk_coarse, np.conj(U)), -pseudo_vorticity(disk_coarse, U))


@settings(max_examples=25, deadline=None)
@given(st.floats(-10, 10))
def test_global_phase_invariance(alpha):
    m = generate_uniform_rectangle_mesh(6, 6)
    U = random_field(np.random.default_rng(1), m.n_cells)
    w = pseudo_vorticity(m, U)
    np.testing.assert_allclose(pseudo_vorticity(m, np.exp(1j * alpha) * U), w, atol=1e-12 * np.abs(w).max())


def _pair_field(a, b, core=0.15):
    def f(x, y):
        z = x + 1j * y
        da, db = z - a, z - b
        return (np.tanh(np.abs(da) / core) * np.exp(1j * np.angle(da))
                * np.tanh(np.abs(db) / core) * np.exp(-1j * np.angle(db)))
    return f


def test_vortex_pair_localized():
    m = generate_uniform_rectangle_mesh(64, 64, 2.0, 2.0, (-1.0, -1.0))
    a, b = -0.4 + 0.1j, 0.35 - 0.2j
    marks = detect_vortices(m, pseudo_vorticity(m, pointwise_interpolant(_pair_field(a, b), m)))
    assert len(marks) == 2
    assert {mk.sign for mk in marks} == {1, -1}
    for mk in marks:
        planted = a if mk.sign > 0 else b
        assert abs(complex(*mk.position) - planted) <= 2 * m.h


def test_detect_edge_cases(two_cell, square8):
    assert detect_vortices(square8, np.zeros(square8.n_cells)) == []
    assert detect_vortices(square8, np.full(square8.n_cells, 2.0)) == []
    with pytest.raises(ValueError):
        detect_vortices(square8, np.zeros(square8.n_cells), rel_threshold=0.0)
    with pytest.raises(ValueError):
        detect_vortices(square8, np.zeros(3))


def test_detect_sorted_and_thresholded(square8):
    w = np.zeros(square8.n_cells)
    w[[9, 30, 54]] = [-3.0, 5.0, 1.0]
    marks = detect_vortices(square8, w, rel_threshold=0.5)
    assert [mk.cell_id for mk in marks] == [30, 9]
    assert [mk.sign for mk in marks] == [1, -1]
    assert [mk.strength for mk in marks] == [5.0, 3.0]


def test_vortex_csv():
    buf = io.StringIO()
    write_vortex_csv([VortexMark(3, Point2(0.5, -0.25), -1, 2.0)], buf)
    assert buf.getvalue() == "cell_id,x,y,sign,strength\n3,0.5,-0.25,-1,2.0\n"
