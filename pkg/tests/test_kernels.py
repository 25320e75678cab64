import os
import subprocess
import sys

import numpy as np
import pytest

from conftest import random_field
from gpfv import _kernels
from gpfv.discrete_ops import _gradient_offsets


@pytest.fixture
def edge_data(disk):
    i = disk.interior
    return disk.edge_K[i], disk.edge_L[i], disk.transmissibility


def test_edge_energy_agree(edge_data, rng, disk):
    np_impl, nb_impl = _kernels.implementations("edge_energy")
    U = random_field(rng, disk.n_cells)
    assert nb_impl(*edge_data, U) == pytest.approx(np_impl(*edge_data, U), rel=1e-12)


def test_cell_gradient_agree(edge_data, rng, disk):
    np_impl, nb_impl = _kernels.implementations("cell_gradient")
    offK, offL = _gradient_offsets(disk)
    U = random_field(rng, disk.n_cells)
    a = np_impl(*edge_data, offK, offL, disk.areas, U)
    b = nb_impl(*edge_data, offK, offL, disk.areas, U)
    np.testing.assert_allclose(b, a, rtol=1e-11, atol=1e-12 * np.abs(a).max())


@pytest.mark.parametrize("name", ["cubic_phase", "phase_rotate"])
def test_phase_kernels_agree(name, rng):
    np_impl, nb_impl = _kernels.implementations(name)
    U = random_field(rng, 1000)
    arg = 0.37 if name == "cubic_phase" else rng.uniform(-50, 50, 1000)
    np.testing.assert_allclose(nb_impl(U, arg), np_impl(U, arg), rtol=1e-13, atol=1e-14)


def test_local_maxima_agree(edge_data, rng, disk):
    np_impl, nb_impl = _kernels.implementations("local_maxima")
    K, L, _ = edge_data
    for a in (rng.random(disk.n_cells), np.round(rng.random(disk.n_cells), 1)):
        np.testing.assert_array_equal(nb_impl(K, L, a, 0.3), np_impl(K, L, a, 0.3))


def test_local_maxima_ties_and_plateaus():
    K = np.array([0, 1, 2])
    L = np.array([1, 2, 3])
    for impl in _kernels.implementations("local_maxima"):
        # plateau of two equal peaks: the lower id wins
        np.testing.assert_array_equal(impl(K, L, np.array([0.1, 1.0, 1.0, 0.1]), 0.0), [False, True, False, False])
        # flat field: no strict neighbour, so nothing
        assert not impl(K, L, np.ones(4), 0.0).any()


def test_env_flag_selects_numpy():
    code = "from gpfv import _kernels as k; print(k.USE_NUMBA, k.edge_energy is k.edge_energy_np)"
    env = dict(os.environ, GPFV_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["False", "True"]
