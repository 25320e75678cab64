"""Time the numba and pure-numpy kernel paths side by side.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--square 400]

Runs on the packaged disk fixture and on a large uniform square mesh.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from gpfv import _kernels
from gpfv.discrete_ops import _gradient_offsets
from gpfv.harness import resolve_mesh
from gpfv.mesh import generate_uniform_rectangle_mesh


def cases(mesh, rng):
    i = mesh.interior
    K, L, t = mesh.edge_K[i], mesh.edge_L[i], mesh.transmissibility
    offK, offL = _gradient_offsets(mesh)
    U = rng.standard_normal(mesh.n_cells) + 1j * rng.standard_normal(mesh.n_cells)
    G = rng.uniform(-10, 10, mesh.n_cells)
    a = np.abs(rng.standard_normal(mesh.n_cells))
    return {
        "edge_energy": (K, L, t, U),
        "cell_gradient": (K, L, t, offK, offL, mesh.areas, U),
        "cubic_phase": (U, 0.1),
        "phase_rotate": (U, G),
        "local_maxima": (K, L, a, 0.3),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--square", type=int, default=400, help="cells per side of the square mesh")
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    meshes = {"disk": resolve_mesh("disk"), f"square{args.square}": generate_uniform_rectangle_mesh(args.square, args.square)}
    print(f"{'mesh':<12}{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>9}")
    for mname, mesh in meshes.items():
        for kname, kargs in cases(mesh, rng).items():
            np_impl, nb_impl = _kernels.implementations(kname)
            nb_impl(*kargs)  # compile outside the timing
            t_np = min(timeit.repeat(lambda: np_impl(*kargs), number=1, repeat=args.repeat)) * 1e3
            t_nb = min(timeit.repeat(lambda: nb_impl(*kargs), number=1, repeat=args.repeat)) * 1e3
            print(f"{mname:<12}{kname:<16}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
