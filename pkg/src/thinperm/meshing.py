"""Simplicial meshes of the fluid cell and of the thin perforated layer.

Cell meshes are built on a structured grid; interior obstacles are cut out
by Delaunay triangulation against the obstacle polyline (grid points too
close to the obstacle are dropped first, so element quality stays bounded).
The two lateral faces always carry identical vertex sets, which makes the
periodic pairing exact.  Layer meshes are unions of eps-scaled copies of
one cell mesh glued along those faces, so unfolding a layer field onto the
reference cell is a pure reindexing.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.spatial import Delaunay

from .errors import EmptyGammaD, MeshingFailed, TagAmbiguity
from .geometry import CellGeometry, Disk, LayerGeometry, Polygon

TAG_GAMMA_D = "GammaD"
TAG_SN_PLUS = "SNplus"
TAG_SN_MINUS = "SNminus"
TAG_LATERAL0 = "LateralPeriodic0"
TAG_LATERAL1 = "LateralPeriodic1"
TAG_GAMMA_N = "GammaN"

PAIR_TOL = 1e-12
_GEOM_TOL = 1e-8


@dataclass
class Mesh:
    """Triangle mesh with tagged boundary and optional periodic pairing.

    ``boundary`` maps tag -> (k, 2) vertex-index array; each edge (a, b) is
    oriented so its owning triangle lies on the left, hence the outward
    normal is the tangent rotated by -90 degrees.  ``periodic_pairs`` holds
    (slave, master) vertex rows (slave on the x=1 face).  For layer meshes,
    ``provenance`` gives the cell-copy index of every triangle and
    ``cell_mesh``/``vertex_ids`` tie the mesh back to the reference cell.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    h: float
    boundary: Dict[str, np.ndarray]
    periodic_pairs: Optional[np.ndarray] = None
    geometry: Optional[CellGeometry] = None
    provenance: Optional[np.ndarray] = None
    cell_mesh: Optional["Mesh"] = None
    vertex_ids: Optional[np.ndarray] = None
    scale: float = 1.0
    _edge_cache: tuple = field(default=None, repr=False, compare=False)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def boundary_edges(self):
        """Iterate (v0, v1, tag) over all tagged boundary edges."""
        for tag, edges in self.boundary.items():
            for a, b in edges:
                yield int(a), int(b), tag

    def edge_arrays(self):
        """Unique undirected edges and the per-triangle edge indices.

        Returns (edges, tri_edges): edges is (ne, 2) with sorted vertex
        pairs; tri_edges[t, k] is the edge opposite local vertex k, i.e.
        (v1,v2), (v2,v0), (v0,v1) for k = 0, 1, 2.
        """
        if self._edge_cache is None:
            t = self.triangles
            raw = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
            raw.sort(axis=1)
            edges, inv = np.unique(raw, axis=0, return_inverse=True)
            tri_edges = inv.reshape(3, -1).T
            lookup = {(int(a), int(b)): i for i, (a, b) in enumerate(edges)}
            self._edge_cache = (edges, tri_edges, lookup)
        return self._edge_cache[0], self._edge_cache[1]

    def edge_index(self, a, b):
        self.edge_arrays()
        return self._edge_cache[2][(min(a, b), max(a, b))]

    def area(self):
        p = self.vertices[self.triangles]
        return 0.5 * np.abs(
            np.sum(
                (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
                - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
            )
        )

    def edge_length(self, a, b):
        return float(np.hypot(*(self.vertices[b] - self.vertices[a])))

    def outward_normals(self, tag):
        """Unit outward normal per boundary edge of the given tag."""
        edges = self.boundary.get(tag, np.empty((0, 2), dtype=int))
        t = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        L = np.hypot(t[:, 0], t[:, 1])
        return np.column_stack([t[:, 1] / L, -t[:, 0] / L])

    def validate(self):
        """Check the structural mesh invariants; raises MeshingFailed."""
        p = self.vertices[self.triangles]
        det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
            p[:, 2, 0] - p[:, 0, 0]
        ) * (p[:, 1, 1] - p[:, 0, 1])
        if np.any(det <= 0):
            raise MeshingFailed("mesh contains degenerate or inverted triangles")
        if self.periodic_pairs is not None and len(self.periodic_pairs):
            s, m = self.periodic_pairs.T
            shift = self.vertices[s] - self.vertices[m]
            if not np.allclose(shift[:, 0], self.scale, atol=PAIR_TOL) or not np.allclose(
                shift[:, 1], 0.0, atol=PAIR_TOL
            ):
                raise MeshingFailed("periodic pairing does not match the unit translation")
            if len(np.unique(s)) != len(s) or len(np.unique(m)) != len(m):
                raise MeshingFailed("periodic pairing is not a bijection")


def _structured_rectangle(xlo, xhi, ylo, yhi, h):
    """Structured crossed-diagonal triangulation of a rectangle."""
    nx = max(1, round((xhi - xlo) / h))
    ny = max(1, round((yhi - ylo) / h))
    xs = np.linspace(xlo, xhi, nx + 1)
    ys = np.linspace(ylo, yhi, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            v00, v10 = vid(i, j), vid(i + 1, j)
            v01, v11 = vid(i, j + 1), vid(i + 1, j + 1)
            if (i + j) % 2 == 0:
                tris.append((v00, v10, v11))
                tris.append((v00, v11, v01))
            else:
                tris.append((v00, v10, v01))
                tris.append((v10, v11, v01))
    return verts, np.asarray(tris, dtype=int)


def _delaunay_with_holes(geom: CellGeometry, h):
    """Grid + obstacle-polyline Delaunay mesh of the fluid region."""
    ylo, yhi = geom.fluid_ybounds
    nx = max(2, round(1.0 / h))
    ny = max(2, round((yhi - ylo) / h))
    xs = np.linspace(0.0, 1.0, nx + 1)
    ys = np.linspace(ylo, yhi, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    grid = np.column_stack([X.ravel(), Y.ravel()])

    clearance = 0.55 * h
    keep = np.ones(len(grid), dtype=bool)
    loops = []
    for hole in geom.holes:
        keep &= hole.signed_distance(grid) > clearance
        loops.append(hole.loop_points(h))
    pts = np.vstack([grid[keep]] + loops)

    tri = Delaunay(pts)
    cells = tri.simplices.copy()
    cent = pts[cells].mean(axis=1)
    drop = np.zeros(len(cells), dtype=bool)
    for hole in geom.holes:
        if isinstance(hole, Disk):
            m = len(hole.loop_points(h))
            ang = np.arctan2(cent[:, 1] - hole.center[1], cent[:, 0] - hole.center[0])
            rad = np.hypot(cent[:, 0] - hole.center[0], cent[:, 1] - hole.center[1])
            drop |= rad < hole.polygon_radius(ang, m)
        else:
            drop |= hole.contains(cent)
    cells = cells[~drop]

    # every obstacle polyline segment must survive as a boundary edge
    offsets = np.cumsum([keep.sum()] + [len(lp) for lp in loops])
    counts = _edge_counts(cells)
    for lo, lp in zip(offsets[:-1], loops):
        m = len(lp)
        for k in range(m):
            a, b = lo + k, lo + (k + 1) % m
            if counts.get((min(a, b), max(a, b)), 0) != 1:
                raise MeshingFailed(
                    "obstacle boundary not conforming; refine h or adjust the geometry"
                )
    return pts, cells


def _edge_counts(tris):
    counts = {}
    for tri in tris:
        for k in range(3):
            a, b = tri[k], tri[(k + 1) % 3]
            key = (min(a, b), max(a, b))
            counts[key] = counts.get(key, 0) + 1
    return counts


def _orient_ccw(verts, tris):
    p = verts[tris]
    det = (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1]) - (
        p[:, 2, 0] - p[:, 0, 0]
    ) * (p[:, 1, 1] - p[:, 0, 1])
    flip = det < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    if np.any(np.abs(det) < 1e-14):
        raise MeshingFailed("degenerate triangle produced during meshing")
    return tris


def _oriented_boundary_edges(tris):
    """Boundary edges (a, b) in triangle orientation (interior on the left)."""
    counts = _edge_counts(tris)
    out = []
    for tri in tris:
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            if counts[(min(a, b), max(a, b))] == 1:
                out.append((a, b))
    return out


def _tag_cell_boundary(verts, oriented_edges, geom: CellGeometry):
    ylo, yhi = -1.0, 1.0
    tol = _GEOM_TOL
    groups = {}

    def put(tag, e):
        groups.setdefault(tag, []).append(e)

    for a, b in oriented_edges:
        pa, pb = verts[a], verts[b]
        if abs(pa[0]) < tol and abs(pb[0]) < tol:
            put(TAG_LATERAL0, (a, b))
        elif abs(pa[0] - 1.0) < tol and abs(pb[0] - 1.0) < tol:
            put(TAG_LATERAL1, (a, b))
        elif abs(pa[1] - yhi) < tol and abs(pb[1] - yhi) < tol and not geom.sn_empty:
            put(TAG_SN_PLUS, (a, b))
        elif abs(pa[1] - ylo) < tol and abs(pb[1] - ylo) < tol and not geom.sn_empty:
            put(TAG_SN_MINUS, (a, b))
        else:
            d = geom.solid_boundary_distance(np.vstack([pa, pb]))
            if np.all(d < tol):
                put(TAG_GAMMA_D, (a, b))
            else:
                raise TagAmbiguity(
                    f"boundary edge {pa}-{pb} matches no tag within tolerance"
                )
    return {tag: np.asarray(e, dtype=int) for tag, e in groups.items()}


def _periodic_vertex_pairs(verts):
    tol = 1e-9
    left = np.flatnonzero(np.abs(verts[:, 0]) < tol)
    right = np.flatnonzero(np.abs(verts[:, 0] - 1.0) < tol)
    if len(left) != len(right):
        raise MeshingFailed("lateral faces are meshed differently; periodic pairing impossible")
    left = left[np.argsort(verts[left, 1])]
    right = right[np.argsort(verts[right, 1])]
    if not np.allclose(verts[left, 1], verts[right, 1], atol=PAIR_TOL):
        raise MeshingFailed("lateral face vertex coordinates do not match")
    return np.column_stack([right, left])


def build_cell_mesh(geom: CellGeometry, h) -> Mesh:
    """Conforming triangulation of the fluid cell with tags and pairing."""
    if not 0 < h < 0.5:
        raise MeshingFailed(f"mesh size must lie in (0, 0.5), got {h}")
    geom.validate_for_meshing(h)
    ylo, yhi = geom.fluid_ybounds
    if geom.holes:
        verts, tris = _delaunay_with_holes(geom, h)
    else:
        verts, tris = _structured_rectangle(0.0, 1.0, ylo, yhi, h)
    tris = _orient_ccw(verts, np.asarray(tris, dtype=int))
    boundary = _tag_cell_boundary(verts, _oriented_boundary_edges(tris), geom)
    mesh = Mesh(
        vertices=verts,
        triangles=tris,
        h=h,
        boundary=boundary,
        periodic_pairs=_periodic_vertex_pairs(verts),
        geometry=geom,
    )
    mesh.validate()
    return mesh


def build_layer_mesh(layer: LayerGeometry, h, cell_mesh: Optional[Mesh] = None) -> Mesh:
    """Mesh of the perforated layer as glued eps-scaled cell copies.

    ``h`` is the physical target size; the underlying cell is meshed at
    h / eps (or ``cell_mesh`` is reused as-is).  Exterior boundary (top,
    bottom, lateral ends) is GammaN, the perforation boundary GammaD.
    Triangle provenance (copy index) and the copy-to-cell vertex map are
    retained for unfolding.
    """
    eps = layer.eps
    cell = cell_mesh if cell_mesh is not None else build_cell_mesh(layer.cell, h / eps)
    ncopy = layer.n_cells
    nv = cell.n_vertices

    on_left = np.zeros(nv, dtype=bool)
    partner_of_left = {}
    for s, m in cell.periodic_pairs:
        on_left[m] = True
        partner_of_left[int(m)] = int(s)

    ids = np.full((ncopy, nv), -1, dtype=int)
    coords = []
    counter = 0
    for k in range(ncopy):
        for v in range(nv):
            if k > 0 and on_left[v]:
                ids[k, v] = ids[k - 1, partner_of_left[v]]
            else:
                ids[k, v] = counter
                coords.append(eps * (cell.vertices[v] + np.array([k, 0.0])))
                counter += 1
    coords = np.asarray(coords)

    tris = np.concatenate([ids[k][cell.triangles] for k in range(ncopy)])
    provenance = np.repeat(np.arange(ncopy), cell.n_triangles)

    L1 = float(layer.sigma_lengths[0])
    tol = _GEOM_TOL * max(1.0, L1)
    groups = {}
    for a, b in _oriented_boundary_edges(tris):
        pa, pb = coords[a], coords[b]
        if (abs(pa[0]) < tol and abs(pb[0]) < tol) or (
            abs(pa[0] - L1) < tol and abs(pb[0] - L1) < tol
        ):
            groups.setdefault(TAG_GAMMA_N, []).append((a, b))
        elif abs(abs(pa[1]) - eps) < tol * eps + tol and abs(abs(pb[1]) - eps) < tol * eps + tol:
            groups.setdefault(TAG_GAMMA_N, []).append((a, b))
        else:
            mid = 0.5 * (pa + pb)
            k = min(int(mid[0] / eps), ncopy - 1)
            ends = np.vstack([pa, pb]) / eps - np.array([k, 0.0])
            d = layer.cell.solid_boundary_distance(ends)
            if np.all(d < 1e-6):
                groups.setdefault(TAG_GAMMA_D, []).append((a, b))
            else:
                raise TagAmbiguity(f"layer boundary edge at {mid} matches no tag")
    boundary = {tag: np.asarray(e, dtype=int) for tag, e in groups.items()}

    mesh = Mesh(
        vertices=coords,
        triangles=tris,
        h=h,
        boundary=boundary,
        periodic_pairs=None,
        geometry=layer.cell,
        provenance=provenance,
        cell_mesh=cell,
        vertex_ids=ids,
        scale=eps,
    )
    mesh.validate()
    return mesh


@dataclass
class NormalField:
    """Averaged outward unit normals on a tagged part of the boundary.

    ``normals`` maps vertex id -> unit normal; ``corners`` flags vertices
    whose adjacent tagged edges disagree by more than the corner threshold.
    ``edge_normal`` gives the exact per-edge normal, keyed by sorted pair.
    """

    normals: Dict[int, np.ndarray]
    corners: Dict[int, bool]
    edge_normal: Dict[Tuple[int, int], np.ndarray]

    @classmethod
    def from_mesh(cls, mesh: Mesh, tags=(TAG_GAMMA_D,), corner_threshold_deg=20.0):
        per_vertex = {}
        edge_normal = {}
        for tag in tags:
            edges = mesh.boundary.get(tag)
            if edges is None:
                continue
            t = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
            L = np.hypot(t[:, 0], t[:, 1])
            n = np.column_stack([t[:, 1] / L, -t[:, 0] / L])
            for (a, b), nk in zip(edges, n):
                edge_normal[(min(int(a), int(b)), max(int(a), int(b)))] = nk
                per_vertex.setdefault(int(a), []).append(nk)
                per_vertex.setdefault(int(b), []).append(nk)
        normals, corners = {}, {}
        cos_thresh = np.cos(np.radians(corner_threshold_deg))
        for v, ns in per_vertex.items():
            avg = np.mean(ns, axis=0)
            norm = np.hypot(*avg)
            corner = False
            for na in ns:
                for nb in ns:
                    if na @ nb < cos_thresh:
                        corner = True
            if norm < 1e-12:
                corner = True
                avg = ns[0]
                norm = 1.0
            normals[v] = avg / norm
            corners[v] = corner
        return cls(normals=normals, corners=corners, edge_normal=edge_normal)


@dataclass
class A4Report:
    moment_matrix: np.ndarray
    rank: int
    satisfied: bool
    eigenvalues: np.ndarray


def check_assumption_A4(mesh: Mesh) -> A4Report:
    """Moment matrix of the interface normals, int_GammaD n n^T dsigma.

    The normals span the plane exactly when the matrix has full rank; the
    verdict uses the relative eigenvalue threshold 1e-8 * trace.
    """
    edges = mesh.boundary.get(TAG_GAMMA_D)
    if edges is None or len(edges) == 0:
        raise EmptyGammaD("mesh has no GammaD edges")
    t = mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]
    L = np.hypot(t[:, 0], t[:, 1])
    n = np.column_stack([t[:, 1] / L, -t[:, 0] / L])
    M = np.einsum("e,ei,ej->ij", L, n, n)
    lam = np.linalg.eigvalsh(M)
    tol = 1e-8 * np.trace(M)
    rank = int(np.sum(lam > tol))
    return A4Report(moment_matrix=M, rank=rank, satisfied=bool(lam.min() > tol), eigenvalues=lam)
