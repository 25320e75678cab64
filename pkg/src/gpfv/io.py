"""File formats: GMSH 2.2 ASCII input, native mesh dump, VTK legacy and CSV output."""
from __future__ import annotations

import csv
import io as _io
import math
import os
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

from .mesh import Mesh, MeshError, Triangulation, build_polygon_mesh


class GmshFormatError(MeshError):
    pass


# number of nodes for the element types we read; others are rejected
_ELEMENT_NODES = {1: 2, 2: 3, 15: 1}


def _as_text(source) -> str:
    if isinstance(source, bytes):
        return source.decode("ascii")
    if isinstance(source, (str, os.PathLike)) and not (isinstance(source, str) and "\n" in source):
        return Path(source).read_text()
    if hasattr(source, "read"):
        data = source.read()
        return data.decode("ascii") if isinstance(data, bytes) else data
    return source


def parse_gmsh(source) -> Triangulation:
    """Read an MSH 2.2 ASCII file (path, bytes, text or file object).

    Only line (type 1), triangle (type 2) and point (type 15) elements are
    accepted; points are skipped. Tags and z-coordinates are ignored.
    """
    lines = [ln.strip() for ln in _as_text(source).splitlines()]
    lines = [ln for ln in lines if ln]
    sections: dict[str, list[str]] = {}
    i = 0
    while i < len(lines):
        head = lines[i]
        if not head.startswith("$") or head.startswith("$End"):
            raise GmshFormatError(f"malformed section header: {head!r}")
        name = head[1:]
        try:
            j = lines.index(f"$End{name}", i + 1)
        except ValueError:
            raise GmshFormatError(f"section ${name} is not closed") from None
        sections[name] = lines[i + 1 : j]
        i = j + 1

    for required in ("MeshFormat", "Nodes", "Elements"):
        if required not in sections:
            raise GmshFormatError(f"missing ${required} section")
    fmt = sections["MeshFormat"]
    if not fmt or fmt[0].split()[0] not in ("2.2", "2.1", "2"):
        raise GmshFormatError(f"unsupported MSH version: {fmt[0] if fmt else ''!r}")
    if len(fmt[0].split()) > 1 and fmt[0].split()[1] != "0":
        raise GmshFormatError("binary MSH files are not supported")

    body = sections["Nodes"]
    try:
        n_nodes = int(body[0])
    except (IndexError, ValueError):
        raise GmshFormatError("bad $Nodes count") from None
    if len(body) - 1 != n_nodes:
        raise GmshFormatError(f"$Nodes declares {n_nodes} nodes, found {len(body) - 1}")
    tag_to_idx: dict[int, int] = {}
    coords = np.empty((n_nodes, 2))
    for k, ln in enumerate(body[1:]):
        parts = ln.split()
        if len(parts) < 3:
            raise GmshFormatError(f"bad node line: {ln!r}")
        tag_to_idx[int(parts[0])] = k
        coords[k] = float(parts[1]), float(parts[2])

    body = sections["Elements"]
    try:
        n_elem = int(body[0])
    except (IndexError, ValueError):
        raise GmshFormatError("bad $Elements count") from None
    if len(body) - 1 != n_elem:
        raise GmshFormatError(f"$Elements declares {n_elem} elements, found {len(body) - 1}")
    tris, segs = [], []
    for ln in body[1:]:
        parts = [int(v) for v in ln.split()]
        etype, ntags = parts[1], parts[2]
        if etype not in _ELEMENT_NODES:
            raise GmshFormatError(f"unsupported element type {etype}")
        conn = parts[3 + ntags :]
        if len(conn) != _ELEMENT_NODES[etype]:
            raise GmshFormatError(f"element line has wrong node count: {ln!r}")
        try:
            ids = [tag_to_idx[t] for t in conn]
        except KeyError as exc:
            raise GmshFormatError(f"element references unknown node {exc.args[0]}") from None
        if etype == 2:
            tris.append(ids)
        elif etype == 1:
            segs.append(ids)

    # keep only nodes used by triangles (gmsh may emit geometry-only points)
    tris_arr = np.array(tris, dtype=np.int64).reshape(-1, 3)
    segs_arr = np.array(segs, dtype=np.int64).reshape(-1, 2)
    used = np.unique(tris_arr)
    remap = np.full(n_nodes, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    if len(segs_arr) and np.any(remap[segs_arr] < 0):
        raise GmshFormatError("boundary element uses a node not in any triangle")
    return Triangulation(coords[used], remap[tris_arr], remap[segs_arr] if len(segs_arr) else segs_arr)


# --------------------------------------------------------- native mesh dump


def dump_mesh(mesh: Mesh, fp: IO[str]) -> None:
    """Write the line-oriented mesh dump.

    NODE and POLY lines carry the geometry; CELL and EDGE lines carry the
    derived quantities and are checked against the rebuilt mesh on load.
    Floats use ``repr`` so values round-trip exactly.
    """
    r = repr
    fp.write(f"GPFVMESH 1 {mesh.nodes.shape[0]} {mesh.n_cells} {mesh.n_edges}\n")
    for i, (x, y) in enumerate(mesh.nodes):
        fp.write(f"NODE {i} {r(float(x))} {r(float(y))}\n")
    for k in range(mesh.n_cells):
        poly = mesh.cell_nodes(k)
        fp.write(f"POLY {k} {len(poly)} {' '.join(str(int(v)) for v in poly)}\n")
    for k in range(mesh.n_cells):
        cx, cy = mesh.centers[k]
        fp.write(f"CELL {k} {r(float(cx))} {r(float(cy))} {r(float(mesh.areas[k]))}\n")
    for e in range(mesh.n_edges):
        interior = mesh.edge_L[e] >= 0
        nx, ny = mesh.normals[e]
        fp.write(
            f"EDGE {e} {'INT' if interior else 'EXT'} {int(mesh.edge_K[e])} {int(mesh.edge_L[e])} "
            f"{r(float(mesh.measures[e]))} {r(float(mesh.d_KL[e]))} {r(float(mesh.d_Ksigma[e]))} "
            f"{r(float(mesh.d_Lsigma[e]))} {r(float(nx))} {r(float(ny))}\n"
        )


def load_mesh(fp: IO[str]) -> Mesh:
    nodes, polys, centers, cells, edges = {}, {}, {}, {}, {}
    for ln in fp:
        parts = ln.split()
        if not parts or parts[0] == "GPFVMESH":
            continue
        tag, idx = parts[0], int(parts[1])
        if tag == "NODE":
            nodes[idx] = (float(parts[2]), float(parts[3]))
        elif tag == "POLY":
            polys[idx] = [int(v) for v in parts[3 : 3 + int(parts[2])]]
        elif tag == "CELL":
            centers[idx] = (float(parts[2]), float(parts[3]))
            cells[idx] = float(parts[4])
        elif tag == "EDGE":
            edges[idx] = parts[2:]
        else:
            raise MeshError(f"unknown record {tag!r}")
    node_arr = np.array([nodes[i] for i in range(len(nodes))])
    mesh = build_polygon_mesh(
        node_arr, [polys[k] for k in range(len(polys))], np.array([centers[k] for k in range(len(centers))]),
        check_tol=None,
    )
    areas = np.array([cells[k] for k in range(len(cells))])
    if not np.array_equal(areas, mesh.areas):
        raise MeshError("CELL areas do not match the polygons")
    if len(edges) != mesh.n_edges:
        raise MeshError("EDGE count does not match the polygons")
    for e, rec in edges.items():
        if int(rec[1]) != mesh.edge_K[e] or int(rec[2]) != mesh.edge_L[e]:
            raise MeshError(f"EDGE {e} connectivity does not match")
        stored = np.array([float(v) for v in rec[3:]])
        rebuilt = np.array([
            mesh.measures[e], mesh.d_KL[e], mesh.d_Ksigma[e], mesh.d_Lsigma[e], *mesh.normals[e]
        ])
        if not np.array_equal(stored, rebuilt, equal_nan=True):
            raise MeshError(f"EDGE {e} geometry does not match")
    return mesh


def save_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fp:
        dump_mesh(mesh, fp)


def read_mesh(path) -> Mesh:
    with open(path) as fp:
        return load_mesh(fp)


# -------------------------------------------------------------- CSV formats


def write_gridfunction_csv(values: np.ndarray, fp: IO[str]) -> None:
    values = np.asarray(values)
    w = csv.writer(fp, lineterminator="\n")
    w.writerow(["cell_id", "re", "im"])
    for k, v in enumerate(values.astype(np.complex128)):
        w.writerow([k, repr(float(v.real)), repr(float(v.imag))])


def read_gridfunction_csv(fp: IO[str]) -> np.ndarray:
    rows = list(csv.DictReader(fp))
    out = np.empty(len(rows), dtype=np.complex128)
    for r in rows:
        out[int(r["cell_id"])] = complex(float(r["re"]), float(r["im"]))
    return out


def write_operator_coo(matrix, fp: IO[str]) -> None:
    """Coordinate text export, one ``row col re im`` line per stored entry."""
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
        v = complex(v)
        fp.write(f"{int(r)} {int(c)} {v.real!r} {v.imag!r}\n")


def write_csv(rows: Iterable[Mapping], header: list[str], fp: IO[str]) -> None:
    w = csv.DictWriter(fp, fieldnames=header, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow(row)


# ----------------------------------------------------------------- VTK


def _wrap_arg(z: np.ndarray) -> np.ndarray:
    """Phase in [-pi, pi)."""
    a = np.angle(z)
    a[a >= math.pi] -= 2 * math.pi
    return a


def export_vtk(mesh: Mesh, fields: Mapping[str, np.ndarray], path, title: str = "gpfv") -> None:
    """Write a VTK legacy ASCII 2.0 unstructured grid of polygon cells.

    Real fields become one scalar array each; complex fields become
    ``<name>_abs`` and ``<name>_arg``.
    """
    arrays: list[tuple[str, np.ndarray]] = []
    for name, vals in fields.items():
        vals = np.asarray(vals)
        if vals.shape != (mesh.n_cells,):
            raise ValueError(f"field {name!r} does not match the mesh")
        if np.iscomplexobj(vals):
            arrays.append((f"{name}_abs", np.abs(vals)))
            arrays.append((f"{name}_arg", _wrap_arg(vals)))
        else:
            arrays.append((name, vals.astype(np.float64)))

    buf = _io.StringIO()
    buf.write("# vtk DataFile Version 2.0\n")
    buf.write(title[:255].replace("\n", " ") + "\n")
    buf.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
    buf.write(f"POINTS {len(mesh.nodes)} double\n")
    for x, y in mesh.nodes:
        buf.write(f"{x!r} {y!r} 0.0\n")
    sizes = np.diff(mesh.cell_ptr)
    buf.write(f"CELLS {mesh.n_cells} {int(sizes.sum() + mesh.n_cells)}\n")
    for k in range(mesh.n_cells):
        poly = mesh.cell_nodes(k)
        buf.write(f"{len(poly)} {' '.join(str(int(v)) for v in poly)}\n")
    buf.write(f"CELL_TYPES {mesh.n_cells}\n")
    for s in sizes:
        # 5 = VTK_TRIANGLE, 9 = VTK_QUAD, 7 = VTK_POLYGON
        buf.write(f"{5 if s == 3 else 9 if s == 4 else 7}\n")
    if arrays:
        buf.write(f"CELL_DATA {mesh.n_cells}\n")
        for name, vals in arrays:
            buf.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            buf.write("\n".join(repr(float(v)) for v in vals))
            buf.write("\n")
    Path(path).write_text(buf.getvalue())


def read_vtk_cell_data(path) -> tuple[int, dict[str, np.ndarray]]:
    """Minimal reader for files written by :func:`export_vtk` (cell count, arrays)."""
    tokens = Path(path).read_text().split("\n")
    n_cells = 0
    data: dict[str, np.ndarray] = {}
    i = 0
    while i < len(tokens):
        ln = tokens[i].split()
        if ln and ln[0] == "CELLS":
            n_cells = int(ln[1])
        elif ln and ln[0] == "SCALARS":
            name = ln[1]
            vals = np.array([float(tokens[i + 2 + k]) for k in range(n_cells)])
            data[name] = vals
            i += 1 + n_cells
        i += 1
    return n_cells, data
