"""Hot per-edge / per-cell loops.

Every kernel has a pure-numpy implementation (``*_np``) and a numba one
(``*_nb``). The public name is bound to the numba version unless numba is
missing or ``GPFV_DISABLE_NUMBA`` is set to a truthy value at import time.
Both paths use a fixed summation order, so each is bit-reproducible run to
run; they may differ from each other by roundoff.
"""
from __future__ import annotations

import os

import numpy as np

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

_DISABLED = os.environ.get("GPFV_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}
USE_NUMBA = _HAVE_NUMBA and not _DISABLED


def _njit(func):
    if not _HAVE_NUMBA:
        return func
    return numba.njit(cache=True, nogil=True)(func)


# ---------------------------------------------------------------- H1_h sum


def edge_energy_np(K, L, trans, U):
    diff = U[L] - U[K]
    return float(np.sum(trans * (diff.real**2 + diff.imag**2)))


@_njit
def edge_energy_nb(K, L, trans, U):
    acc = 0.0
    for e in range(K.shape[0]):
        d = U[L[e]] - U[K[e]]
        acc += trans[e] * (d.real * d.real + d.imag * d.imag)
    return acc


# ------------------------------------------------------- cell gradient


def cell_gradient_np(K, L, trans, offK, offL, areas, U):
    """Sum of trans*(U_L-U_K)*(x_sigma - x_cell) over interior edges, per cell."""
    n = areas.shape[0]
    flux = trans * (U[L] - U[K])
    out = np.empty((n, 2), dtype=np.result_type(U.dtype, np.float64))
    for c in range(2):
        # the flux seen from L is -(U_L - U_K) with offset x_sigma - x_L
        wK = flux * offK[:, c]
        wL = -flux * offL[:, c]
        idx = np.concatenate((K, L))
        w = np.concatenate((wK, wL))
        if np.iscomplexobj(w):
            col = np.bincount(idx, weights=w.real, minlength=n) + 1j * np.bincount(
                idx, weights=w.imag, minlength=n
            )
        else:
            col = np.bincount(idx, weights=w, minlength=n)
        out[:, c] = col / areas
    return out


@_njit
def cell_gradient_nb(K, L, trans, offK, offL, areas, U):
    n = areas.shape[0]
    out = np.zeros((n, 2), dtype=np.complex128)
    for e in range(K.shape[0]):
        f = trans[e] * (U[L[e]] - U[K[e]])
        out[K[e], 0] += f * offK[e, 0]
        out[K[e], 1] += f * offK[e, 1]
    for e in range(K.shape[0]):
        f = trans[e] * (U[L[e]] - U[K[e]])
        out[L[e], 0] -= f * offL[e, 0]
        out[L[e], 1] -= f * offL[e, 1]
    for k in range(n):
        out[k, 0] /= areas[k]
        out[k, 1] /= areas[k]
    return out


# -------------------------------------------------- pointwise phase maps


def cubic_phase_np(U, c):
    """U * exp(-i c |U|^2)."""
    return U * np.exp(-1j * c * (U.real**2 + U.imag**2))


@_njit
def cubic_phase_nb(U, c):
    out = np.empty_like(U)
    for k in range(U.shape[0]):
        u = U[k]
        ph = c * (u.real * u.real + u.imag * u.imag)
        out[k] = u * complex(np.cos(ph), -np.sin(ph))
    return out


def phase_rotate_np(U, G):
    """U * exp(-i G) for real G."""
    return U * np.exp(-1j * G)


@_njit
def phase_rotate_nb(U, G):
    out = np.empty_like(U)
    for k in range(U.shape[0]):
        out[k] = U[k] * complex(np.cos(G[k]), -np.sin(G[k]))
    return out


# ----------------------------------------------------------- local maxima


def local_maxima_np(K, L, a, threshold):
    """Cells that dominate every edge neighbour of ``a`` (ties -> lower id).

    A cell needs at least one strictly smaller neighbour, so flat plateaus
    yield nothing.
    """
    n = a.shape[0]
    aK, aL = a[K], a[L]
    # K loses to L if aL > aK, or tie and L < K
    loseK = (aL > aK) | ((aL == aK) & (L < K))
    loseL = (aK > aL) | ((aK == aL) & (K < L))
    lost = np.zeros(n, dtype=bool)
    lost[K[loseK]] = True
    lost[L[loseL]] = True
    beats = np.zeros(n, dtype=bool)
    beats[K[aK > aL]] = True
    beats[L[aL > aK]] = True
    return (~lost) & beats & (a >= threshold) & (a > 0.0)


@_njit
def local_maxima_nb(K, L, a, threshold):
    n = a.shape[0]
    lost = np.zeros(n, dtype=np.bool_)
    beats = np.zeros(n, dtype=np.bool_)
    for e in range(K.shape[0]):
        k = K[e]
        m = L[e]
        if a[m] > a[k]:
            lost[k] = True
            beats[m] = True
        elif a[k] > a[m]:
            lost[m] = True
            beats[k] = True
        elif m < k:
            lost[k] = True
        else:
            lost[m] = True
    out = np.zeros(n, dtype=np.bool_)
    for k in range(n):
        out[k] = (not lost[k]) and beats[k] and a[k] >= threshold and a[k] > 0.0
    return out


_PAIRS = {
    "edge_energy": (edge_energy_np, edge_energy_nb),
    "cell_gradient": (cell_gradient_np, cell_gradient_nb),
    "cubic_phase": (cubic_phase_np, cubic_phase_nb),
    "phase_rotate": (phase_rotate_np, phase_rotate_nb),
    "local_maxima": (local_maxima_np, local_maxima_nb),
}


def implementations(name):
    """Return ``(numpy_impl, numba_impl)`` for a kernel name."""
    return _PAIRS[name]


_pick = 1 if USE_NUMBA else 0
edge_energy = _PAIRS["edge_energy"][_pick]
cell_gradient = _PAIRS["cell_gradient"][_pick]
cubic_phase = _PAIRS["cubic_phase"][_pick]
phase_rotate = _PAIRS["phase_rotate"][_pick]
local_maxima = _PAIRS["local_maxima"][_pick]
