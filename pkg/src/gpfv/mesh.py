"""Admissible finite-volume meshes in two dimensions.

A mesh is stored as flat numpy arrays (struct-of-arrays). Cells are convex
polygons with counter-clockwise node lists; each cell carries a center
``x_K`` such that the segment between neighbouring centers is orthogonal to
their common edge. ``Cell`` / ``Edge`` records are available as read-only
views through :meth:`Mesh.cell` and :meth:`Mesh.edge`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np


class MeshError(ValueError):
    """Raised for meshes that are malformed or not admissible."""


class Point2(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Cell:
    center: Point2
    area: float
    edge_ids: tuple[int, ...]
    diameter: float
    on_boundary_center: bool


@dataclass(frozen=True)
class Edge:
    kind: str  # "interior" or "exterior"
    K: int
    L: int | None
    measure: float
    d_KL: float | None
    d_Ksigma: float
    d_Lsigma: float | None
    normal_K: Point2
    x_sigma: Point2
    vertices: tuple[Point2, Point2]


@dataclass(frozen=True)
class Triangulation:
    """Conforming triangulation: node coordinates and positively oriented triangles."""

    nodes: np.ndarray  # (n_nodes, 2)
    triangles: np.ndarray  # (n_tri, 3) int
    boundary_edges: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        tris = np.array(self.triangles, dtype=np.int64).reshape(-1, 3)
        bnd = np.array(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        if nodes.ndim != 2 or nodes.shape[1] != 2:
            raise MeshError("nodes must have shape (n, 2)")
        if tris.size and (tris.min() < 0 or tris.max() >= len(nodes)):
            raise MeshError("triangle references a node that does not exist")
        # orient every triangle counter-clockwise
        a, b, c = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
        signed = _cross(b - a, c - a)
        flip = signed < 0
        tris[flip] = tris[flip][:, [0, 2, 1]]
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "triangles", tris)
        object.__setattr__(self, "boundary_edges", bnd)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def edge_multiplicity(self) -> dict[tuple[int, int], int]:
        count: dict[tuple[int, int], int] = {}
        for tri in self.triangles:
            for i in range(3):
                a, b = int(tri[i]), int(tri[(i + 1) % 3])
                key = (a, b) if a < b else (b, a)
                count[key] = count.get(key, 0) + 1
        return count

    def check_conforming(self) -> None:
        """Raise MeshError unless every edge is shared by at most two triangles."""
        mult = self.edge_multiplicity()
        bad = [k for k, v in mult.items() if v > 2]
        if bad:
            raise MeshError(f"non-conforming triangulation: edge {bad[0]} shared by more than 2 triangles")
        if len(self.boundary_edges):
            declared = {tuple(sorted(map(int, e))) for e in self.boundary_edges}
            once = {k for k, v in mult.items() if v == 1}
            if not declared <= once:
                raise MeshError("declared boundary edge is not on the triangulation boundary")


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable admissible finite-volume mesh.

    Edge arrays use ``edge_L == -1`` for exterior edges; ``d_KL`` and
    ``d_Lsigma`` are NaN there. ``normals`` are the outward unit normals of
    ``edge_K`` computed from the edge geometry (not from the centers), so
    they expose any loss of orthogonality.
    """

    nodes: np.ndarray
    cell_ptr: np.ndarray
    cell_node_idx: np.ndarray
    centers: np.ndarray
    areas: np.ndarray
    diameters: np.ndarray
    on_boundary_center: np.ndarray
    edge_nodes: np.ndarray
    edge_K: np.ndarray
    edge_L: np.ndarray
    measures: np.ndarray
    d_KL: np.ndarray
    d_Ksigma: np.ndarray
    d_Lsigma: np.ndarray
    normals: np.ndarray
    x_sigma: np.ndarray
    cell_edge_ptr: np.ndarray
    cell_edge_idx: np.ndarray

    # ------------------------------------------------------------ sizes
    @property
    def n_cells(self) -> int:
        return len(self.areas)

    @property
    def n_edges(self) -> int:
        return len(self.measures)

    @property
    def h(self) -> float:
        return float(self.diameters.max())

    @property
    def interior(self) -> np.ndarray:
        """Indices of interior edges."""
        return self._cache("interior", lambda: np.flatnonzero(self.edge_L >= 0))

    @property
    def exterior(self) -> np.ndarray:
        return self._cache("exterior", lambda: np.flatnonzero(self.edge_L < 0))

    @property
    def transmissibility(self) -> np.ndarray:
        """|sigma| / d_KL on interior edges, in the order of :attr:`interior`."""
        i = self.interior
        return self._cache("trans", lambda: self.measures[i] / self.d_KL[i])

    @property
    def xi(self) -> float:
        """Measured regularity: min over (K, sigma) of min(d_Ksigma/h_K, |sigma|/h_K)."""
        def compute():
            owners = np.concatenate((self.edge_K, self.edge_L[self.interior]))
            dist = np.concatenate((self.d_Ksigma, self.d_Lsigma[self.interior]))
            meas = np.concatenate((self.measures, self.measures[self.interior]))
            hk = self.diameters[owners]
            return float(min((dist / hk).min(), (meas / hk).min()))

        return self._cache("xi", compute)

    @property
    def domain_area(self) -> float:
        """Area enclosed by the exterior edges (shoelace on the boundary)."""
        def compute():
            e = self.exterior
            p0 = self.nodes[self.edge_nodes[e, 0]]
            p1 = self.nodes[self.edge_nodes[e, 1]]
            return float(0.5 * np.sum(_cross(p0, p1)))

        return self._cache("domain_area", compute)

    @property
    def domain_diameter(self) -> float:
        def compute():
            ids = np.unique(self.edge_nodes[self.exterior])
            pts = self.nodes[ids] if len(ids) else self.nodes
            if len(pts) > 3:
                from scipy.spatial import ConvexHull

                pts = pts[ConvexHull(pts).vertices]
            diff = pts[:, None, :] - pts[None, :, :]
            return float(np.sqrt((diff**2).sum(-1)).max())

        return self._cache("domain_diameter", compute)

    def _cache(self, key, fn):
        store = self.__dict__.setdefault("_memo", {})
        if key not in store:
            store[key] = fn()
        return store[key]

    # ------------------------------------------------------------ views
    def cell_nodes(self, k: int) -> np.ndarray:
        return self.cell_node_idx[self.cell_ptr[k] : self.cell_ptr[k + 1]]

    def cell_edges(self, k: int) -> np.ndarray:
        return self.cell_edge_idx[self.cell_edge_ptr[k] : self.cell_edge_ptr[k + 1]]

    def cell(self, k: int) -> Cell:
        return Cell(
            center=Point2(*map(float, self.centers[k])),
            area=float(self.areas[k]),
            edge_ids=tuple(int(e) for e in self.cell_edges(k)),
            diameter=float(self.diameters[k]),
            on_boundary_center=bool(self.on_boundary_center[k]),
        )

    def edge(self, e: int) -> Edge:
        interior = self.edge_L[e] >= 0
        a, b = self.edge_nodes[e]
        return Edge(
            kind="interior" if interior else "exterior",
            K=int(self.edge_K[e]),
            L=int(self.edge_L[e]) if interior else None,
            measure=float(self.measures[e]),
            d_KL=float(self.d_KL[e]) if interior else None,
            d_Ksigma=float(self.d_Ksigma[e]),
            d_Lsigma=float(self.d_Lsigma[e]) if interior else None,
            normal_K=Point2(*map(float, self.normals[e])),
            x_sigma=Point2(*map(float, self.x_sigma[e])),
            vertices=(Point2(*map(float, self.nodes[a])), Point2(*map(float, self.nodes[b]))),
        )

    def polygons(self) -> list[np.ndarray]:
        return [self.cell_nodes(k) for k in range(self.n_cells)]

    def with_centers(self, centers: np.ndarray) -> "Mesh":
        """Same cells, different centers; no admissibility checks are run."""
        return build_polygon_mesh(self.nodes, self.polygons(), centers, check_tol=None)


def build_polygon_mesh(
    nodes: np.ndarray,
    polygons: Sequence[Sequence[int]],
    centers: np.ndarray,
    check_tol: float | None = 1e-8,
) -> Mesh:
    """Assemble a :class:`Mesh` from convex CCW polygons and their centers.

    With ``check_tol`` set, raises :class:`MeshError` when a center is not
    strictly on the inner side of one of its edges (``d_Ksigma < tol*h_K``),
    or when two neighbouring centers coincide.
    """
    nodes = np.ascontiguousarray(nodes, dtype=np.float64)
    centers = np.ascontiguousarray(centers, dtype=np.float64).reshape(-1, 2)
    n_cells = len(polygons)
    if len(centers) != n_cells:
        raise MeshError("one center per polygon is required")
    if n_cells == 0:
        raise MeshError("empty mesh")

    ptr = np.zeros(n_cells + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(p) for p in polygons])
    idx = np.concatenate([np.asarray(p, dtype=np.int64) for p in polygons])

    areas = np.empty(n_cells)
    diameters = np.empty(n_cells)
    edge_index: dict[tuple[int, int], int] = {}
    e_nodes: list[tuple[int, int]] = []
    e_K: list[int] = []
    e_L: list[int] = []
    cell_edges: list[list[int]] = []
    for k, poly in enumerate(polygons):
        poly = [int(v) for v in poly]
        if len(poly) < 3:
            raise MeshError(f"cell {k} has fewer than 3 vertices")
        pts = nodes[poly]
        areas[k] = 0.5 * float(np.sum(_cross(pts, np.roll(pts, -1, axis=0))))
        diff = pts[:, None, :] - pts[None, :, :]
        diameters[k] = math.sqrt(float((diff**2).sum(-1).max()))
        mine = []
        for i in range(len(poly)):
            a, b = poly[i], poly[(i + 1) % len(poly)]
            key = (a, b) if a < b else (b, a)
            e = edge_index.get(key)
            if e is None:
                e = len(e_nodes)
                edge_index[key] = e
                e_nodes.append((a, b))  # oriented CCW w.r.t. K
                e_K.append(k)
                e_L.append(-1)
            else:
                if e_L[e] != -1 or e_K[e] == k:
                    raise MeshError(f"edge {key} is shared by more than two cells")
                e_L[e] = k
            mine.append(e)
        cell_edges.append(mine)

    if check_tol is not None:
        tiny = np.flatnonzero(areas <= check_tol * diameters**2)
        if len(tiny):
            raise MeshError(f"degenerate cell {int(tiny[0])}: area {areas[tiny[0]]:.3e}")

    edge_nodes = np.array(e_nodes, dtype=np.int64)
    edge_K = np.array(e_K, dtype=np.int64)
    edge_L = np.array(e_L, dtype=np.int64)
    p0 = nodes[edge_nodes[:, 0]]
    p1 = nodes[edge_nodes[:, 1]]
    tangent = p1 - p0
    measures = np.hypot(tangent[:, 0], tangent[:, 1])
    if np.any(measures <= 0):
        raise MeshError("zero-length edge")
    tangent /= measures[:, None]
    normals = np.column_stack((tangent[:, 1], -tangent[:, 0]))

    xK = centers[edge_K]
    d_Ksigma = np.einsum("ij,ij->i", normals, p0 - xK)
    interior = edge_L >= 0
    d_Lsigma = np.full(len(edge_K), np.nan)
    d_KL = np.full(len(edge_K), np.nan)
    xL = centers[edge_L[interior]]
    d_Lsigma[interior] = np.einsum("ij,ij->i", normals[interior], xL - p0[interior])
    d_KL[interior] = np.hypot(*(xL - xK[interior]).T)
    x_sigma = xK + d_Ksigma[:, None] * normals

    if check_tol is not None:
        hK = diameters[edge_K]
        bad = np.flatnonzero(d_Ksigma < check_tol * hK)
        if len(bad) == 0 and interior.any():
            hL = diameters[edge_L[interior]]
            badL = np.flatnonzero(d_Lsigma[interior] < check_tol * hL)
            bad = np.flatnonzero(interior)[badL]
        if len(bad):
            e = int(bad[0])
            raise MeshError(
                f"non-admissible edge {e}: a cell center lies on or outside the edge "
                f"(d_Ksigma={d_Ksigma[e]:.3e}, d_Lsigma={d_Lsigma[e]:.3e}); "
                "obtuse or right triangle?"
            )
        coincide = np.flatnonzero(interior & (d_KL < check_tol * diameters[edge_K]))
        if len(coincide):
            raise MeshError(f"coincident centers across edge {int(coincide[0])}")

    cell_edge_ptr = np.zeros(n_cells + 1, dtype=np.int64)
    cell_edge_ptr[1:] = np.cumsum([len(c) for c in cell_edges])
    cell_edge_idx = np.concatenate([np.asarray(c, dtype=np.int64) for c in cell_edges])

    # (boundary): center lies on one of its exterior edges
    on_bnd = np.zeros(n_cells, dtype=bool)
    ext = ~interior
    scale = diameters[edge_K[ext]]
    on_bnd_edges = np.abs(d_Ksigma[ext]) <= 1e-10 * scale
    on_bnd[edge_K[ext][on_bnd_edges]] = True

    arrays = (
        nodes, ptr, idx, centers, areas, diameters, on_bnd, edge_nodes, edge_K, edge_L,
        measures, d_KL, d_Ksigma, d_Lsigma, normals, x_sigma, cell_edge_ptr, cell_edge_idx,
    )
    arrays = tuple(np.array(a) for a in arrays)
    _freeze(*arrays)
    return Mesh(*arrays)


def generate_uniform_rectangle_mesh(nx: int, ny: int, Lx: float = 1.0, Ly: float = 1.0,
                                    origin: tuple[float, float] = (0.0, 0.0)) -> Mesh:
    """Structured ``nx`` x ``ny`` rectangle mesh with centers at the cell midpoints.

    Cells are numbered row by row (x fastest).
    """
    if nx < 1 or ny < 1:
        raise MeshError("nx and ny must be >= 1")
    if not (Lx > 0 and Ly > 0):
        raise MeshError("Lx and Ly must be positive")
    x = origin[0] + np.linspace(0.0, Lx, nx + 1)
    y = origin[1] + np.linspace(0.0, Ly, ny + 1)
    X, Y = np.meshgrid(x, y)
    nodes = np.column_stack((X.ravel(), Y.ravel()))

    def nid(i, j):
        return j * (nx + 1) + i

    polys = []
    centers = np.empty((nx * ny, 2))
    for j in range(ny):
        for i in range(nx):
            polys.append((nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)))
            centers[j * nx + i] = (0.5 * (x[i] + x[i + 1]), 0.5 * (y[j] + y[j + 1]))
    return build_polygon_mesh(nodes, polys, centers)


def circumcenters(nodes: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = nodes[triangles[:, 0]]
    b = nodes[triangles[:, 1]] - a
    c = nodes[triangles[:, 2]] - a
    d = 2.0 * _cross(b, c)
    b2 = (b**2).sum(1)
    c2 = (c**2).sum(1)
    ux = (c[:, 1] * b2 - b[:, 1] * c2) / d
    uy = (b[:, 0] * c2 - c[:, 0] * b2) / d
    return a + np.column_stack((ux, uy))


def build_fv_mesh_from_triangulation(tri: Triangulation, tol: float = 1e-8) -> Mesh:
    """Circumcenter finite-volume mesh of an acute triangulation.

    ``tol`` is relative to the cell diameter: every center must sit at least
    ``tol*h_K`` inside each of its edges.
    """
    tri.check_conforming()
    if tri.n_triangles == 0:
        raise MeshError("empty triangulation")
    nodes, tris = tri.nodes, tri.triangles
    a, b, c = nodes[tris[:, 0]], nodes[tris[:, 1]], nodes[tris[:, 2]]
    area = 0.5 * _cross(b - a, c - a)
    longest = np.max(np.stack([np.hypot(*(b - a).T), np.hypot(*(c - b).T), np.hypot(*(a - c).T)]), axis=0)
    deg = np.flatnonzero(area <= tol * longest**2)
    if len(deg):
        raise MeshError(f"degenerate triangle {int(deg[0])}")
    return build_polygon_mesh(nodes, tris, circumcenters(nodes, tris), check_tol=tol)


@dataclass(frozen=True)
class ValidationReport:
    orthogonality_defect: float  # max angle (rad) between x_L - x_K and the edge normal
    distance_defect: float  # max |d_Ksigma + d_Lsigma - d_KL| / d_KL
    iso_defect: float  # max |2 d_Ksigma - d_KL| / d_KL
    xi: float
    area_residual: float  # relative |sum |K| - domain area|
    boundary_ok: bool
    iso_ok: bool
    reg_ok: bool
    orthogonality_ok: bool
    cross_references_ok: bool
    n_cells: int
    n_edges: int
    n_interior: int
    h: float

    def as_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)

    def lines(self) -> list[str]:
        return [f"{k} = {v}" for k, v in self.as_dict().items()]


def validate_admissibility(mesh: Mesh, tol: float = 1e-10) -> ValidationReport:
    """Measure how well ``mesh`` satisfies the admissibility properties. Never raises."""
    i = mesh.interior
    if len(i):
        delta = mesh.centers[mesh.edge_L[i]] - mesh.centers[mesh.edge_K[i]]
        nu = mesh.normals[i]
        angle = np.arctan2(np.abs(_cross(nu, delta)), np.einsum("ij,ij->i", nu, delta))
        ortho = float(angle.max())
        dkl = mesh.d_KL[i]
        dist = float(np.max(np.abs(mesh.d_Ksigma[i] + mesh.d_Lsigma[i] - dkl) / dkl))
        iso = float(np.max(np.abs(2 * mesh.d_Ksigma[i] - dkl) / dkl))
    else:
        ortho = dist = iso = 0.0

    has_ext = np.zeros(mesh.n_cells, dtype=bool)
    has_ext[mesh.edge_K[mesh.exterior]] = True
    boundary_ok = bool(np.all(mesh.on_boundary_center[has_ext]))

    owners = np.concatenate((mesh.edge_K, mesh.edge_L[i]))
    dists = np.concatenate((mesh.d_Ksigma, mesh.d_Lsigma[i]))
    meas = np.concatenate((mesh.measures, mesh.measures[i]))
    hk = mesh.diameters[owners]
    xi = mesh.xi
    reg_ok = bool(0 < xi < 1 and np.all(dists <= hk * (1 + tol)) and np.all(meas <= hk * (1 + tol)))

    ref = mesh.domain_area
    area_res = abs(float(mesh.areas.sum()) - ref) / abs(ref)

    xref = True
    for k in range(mesh.n_cells):
        for e in mesh.cell_edges(k):
            if k not in (mesh.edge_K[e], mesh.edge_L[e]):
                xref = False
    counts = np.bincount(owners, minlength=mesh.n_cells)
    if not np.array_equal(counts, np.diff(mesh.cell_edge_ptr)):
        xref = False

    return ValidationReport(
        orthogonality_defect=ortho,
        distance_defect=dist,
        iso_defect=iso,
        xi=xi,
        area_residual=area_res,
        boundary_ok=boundary_ok,
        iso_ok=iso <= tol,
        reg_ok=reg_ok,
        orthogonality_ok=ortho <= tol,
        cross_references_ok=xref,
        n_cells=mesh.n_cells,
        n_edges=mesh.n_edges,
        n_interior=int(len(i)),
        h=mesh.h,
    )
