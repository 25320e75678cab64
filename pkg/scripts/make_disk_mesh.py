"""Generate a triangulated disk of radius 2 in MSH 2.2 ASCII with gmsh.

    python3 scripts/make_disk_mesh.py H OUT.msh

Uses the Frontal-Delaunay algorithm with a uniform target size ``H``. The
packaged fixtures were made with H=0.1 (about 3k triangles) and H=0.2.
H=0.0227 gives a mesh of roughly 57k triangles. At that size gmsh emits a few
right or obtuse triangles, so build it with
``build_fv_mesh_from_triangulation(tri, tol=-1.0)`` or repair those cells.

Requires the ``gmsh`` Python wheel, which is not a package dependency.
"""
import sys

import gmsh


def main(h: float, out: str) -> None:
    gmsh.initialize()
    try:
        gmsh.option.setNumber("General.Terminal", 0)
        gmsh.model.add("disk")
        gmsh.model.occ.addDisk(0, 0, 0, 2, 2)
        gmsh.model.occ.synchronize()
        gmsh.option.setNumber("Mesh.Algorithm", 6)
        gmsh.option.setNumber("Mesh.MeshSizeMin", h)
        gmsh.option.setNumber("Mesh.MeshSizeMax", h)
        gmsh.option.setNumber("Mesh.MshFileVersion", 2.2)
        gmsh.model.mesh.generate(2)
        gmsh.write(out)
    finally:
        gmsh.finalize()


if __name__ == "__main__":
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    main(float(sys.argv[1]), sys.argv[2])
