"""Pseudo-vorticity of a discrete wave function and vortex localisation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from . import _kernels
from .discrete_ops import cell_gradient
from .mesh import Mesh, Point2


@dataclass(frozen=True)
class VortexMark:
    cell_id: int
    position: Point2
    sign: int
    strength: float


def pseudo_vorticity(mesh: Mesh, U) -> np.ndarray:
    """``Re grad U x Im grad U`` per cell, from the cell gradient reconstruction."""
    g = cell_gradient(mesh, U)
    re, im = g.real, g.imag
    return re[:, 0] * im[:, 1] - re[:, 1] * im[:, 0]


def detect_vortices(mesh: Mesh, omega, rel_threshold: float = 0.3) -> list[VortexMark]:
    """Local maxima of ``|omega|`` over edge neighbours, above ``rel_threshold * max|omega|``.

    Equal neighbours are resolved in favour of the lower cell id, and a cell
    must beat at least one neighbour strictly; a constant field has no marks.
    Marks are sorted by decreasing strength, then cell id.
    """
    if mesh.n_cells == 0:
        raise ValueError("empty mesh")
    if not 0 < rel_threshold <= 1:
        raise ValueError("rel_threshold must be in (0, 1]")
    omega = np.ascontiguousarray(omega, dtype=np.float64)
    if omega.shape != (mesh.n_cells,):
        raise ValueError("field does not match the mesh")
    a = np.abs(omega)
    top = float(a.max())
    if top == 0.0:
        return []
    i = mesh.interior
    mask = _kernels.local_maxima(mesh.edge_K[i], mesh.edge_L[i], a, rel_threshold * top)
    ids = np.flatnonzero(mask)
    ids = ids[np.lexsort((ids, -a[ids]))]
    return [
        VortexMark(int(k), Point2(*map(float, mesh.centers[k])), 1 if omega[k] > 0 else -1, float(a[k]))
        for k in ids
    ]


def write_vortex_csv(marks: Sequence[VortexMark], fp: IO[str]) -> None:
    fp.write("cell_id,x,y,sign,strength\n")
    for m in marks:
        fp.write(f"{m.cell_id},{m.position.x!r},{m.position.y!r},{m.sign},{m.strength!r}\n")
