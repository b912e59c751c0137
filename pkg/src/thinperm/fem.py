"""Inf-sup stable P2/P1 (Taylor-Hood) discretization of Stokes systems.

Velocity is continuous piecewise-quadratic (vector), pressure continuous
piecewise-linear.  Constraints (periodic identification, zero normal trace
in rotated nodal frames, strong zeros, corner pinning) are realized by one
sparse transformation T mapping reduced dofs to the full nodal layout, so
every assembled operator stays symmetric.  Saddle systems are solved by a
direct sparse LU factorization; structural singularity is detected from
the residual and reported together with a near-null vector when one can be
recovered by shift-invert iteration.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import InconsistentMesh, SingularSystem
from .kernels import _ref
from .meshing import (
    TAG_GAMMA_D,
    TAG_GAMMA_N,
    TAG_SN_MINUS,
    TAG_SN_PLUS,
    Mesh,
    NormalField,
)
from .quadrature import EDGE_POINTS, EDGE_WEIGHTS

logger = logging.getLogger("thinperm")

RESIDUAL_TOL = 1e-10
_SINGULAR_TOL = 1e-8


def edge_basis(s):
    """Quadratic basis on an edge, nodes at s=0, s=1, s=1/2."""
    s = np.asarray(s)
    return np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])


_EDGE_PSI = edge_basis(EDGE_POINTS)


@dataclass(frozen=True)
class ConstraintSpec:
    """Which boundary tags carry which velocity constraints."""

    normal_zero: Tuple[str, ...] = ()
    strong_zero: Tuple[str, ...] = ()
    periodic: bool = False


class StokesDiscretization:
    """Taylor-Hood spaces on a mesh plus the constraint transformation.

    P2 nodes are the vertices followed by the edge midpoints.  Velocity
    dofs are interleaved ((node, comp) -> 2*node + comp); pressure dofs are
    the vertices.  ``Tu``/``Tp`` map reduced to full coefficients.
    """

    def __init__(self, mesh: Mesh, constraints: ConstraintSpec, gauge: str = "none"):
        if gauge not in ("none", "zero_mean"):
            raise ValueError(f"unknown pressure gauge {gauge!r}")
        self.mesh = mesh
        self.constraints = constraints
        self.gauge = gauge

        edges, tri_edges = mesh.edge_arrays()
        nv = mesh.n_vertices
        self.n_vertices = nv
        self.edges = edges
        self.n2 = nv + len(edges)
        self.p2_coords = np.vstack(
            [mesh.vertices, 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])]
        )
        self.tri2 = np.column_stack([mesh.triangles, nv + tri_edges])
        self.vel_dofs = np.empty((mesh.n_triangles, 12), dtype=int)
        self.vel_dofs[:, 0::2] = 2 * self.tri2
        self.vel_dofs[:, 1::2] = 2 * self.tri2 + 1

        # affine geometry factors
        p = mesh.vertices[mesh.triangles]
        J = np.empty((mesh.n_triangles, 2, 2))
        J[:, :, 0] = p[:, 1] - p[:, 0]
        J[:, :, 1] = p[:, 2] - p[:, 0]
        self.det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        inv = np.empty_like(J)
        inv[:, 0, 0] = J[:, 1, 1]
        inv[:, 0, 1] = -J[:, 0, 1]
        inv[:, 1, 0] = -J[:, 1, 0]
        inv[:, 1, 1] = J[:, 0, 0]
        self.inv_j = np.ascontiguousarray(inv / self.det[:, None, None])
        self.tri_origin = p[:, 0]
        self.jacobians = J

        self.normal_field: Optional[NormalField] = None
        self._build_transforms()
        self._matrix_cache: Dict[str, object] = {}

    # ------------------------------------------------------------------
    # constraint transformation
    # ------------------------------------------------------------------
    def _edge_mid_node(self, a, b):
        return self.n_vertices + self.mesh.edge_index(a, b)

    def _nodes_of_tagged_edges(self, tags):
        """(vertex nodes, midpoint->edge map) of all edges in the tags."""
        vertex_nodes = set()
        mid_nodes = {}
        for tag in tags:
            for a, b in self.mesh.boundary.get(tag, ()):
                vertex_nodes.update((int(a), int(b)))
                mid_nodes[self._edge_mid_node(a, b)] = (min(int(a), int(b)), max(int(a), int(b)))
        return vertex_nodes, mid_nodes

    def _periodic_p2_map(self):
        """Geometric slave->master map for all P2 nodes on the lateral faces."""
        coords = self.p2_coords
        tol = 1e-9 * self.mesh.scale
        left = np.flatnonzero(np.abs(coords[:, 0]) < tol)
        right = np.flatnonzero(np.abs(coords[:, 0] - self.mesh.scale) < tol)
        if len(left) != len(right):
            raise InconsistentMesh("lateral faces carry different P2 node counts")
        left = left[np.argsort(coords[left, 1])]
        right = right[np.argsort(coords[right, 1])]
        if not np.allclose(coords[left, 1], coords[right, 1], atol=1e-12):
            raise InconsistentMesh("lateral P2 nodes do not coincide up to translation")
        return {int(s): int(m) for s, m in zip(right, left)}

    def _build_transforms(self):
        spec = self.constraints
        n2 = self.n2

        pinned = np.zeros(n2, dtype=bool)
        sv, sm = self._nodes_of_tagged_edges(spec.strong_zero)
        for node in sv:
            pinned[node] = True
        for node in sm:
            pinned[node] = True

        tangent: Dict[int, np.ndarray] = {}
        node_normal: Dict[int, np.ndarray] = {}
        if spec.normal_zero:
            nf = NormalField.from_mesh(self.mesh, tags=spec.normal_zero)
            self.normal_field = nf
            gv, gm = self._nodes_of_tagged_edges(spec.normal_zero)
            for node in gv:
                if pinned[node]:
                    continue
                if nf.corners.get(node, False):
                    pinned[node] = True
                    continue
                n = nf.normals[node]
                node_normal[node] = n
                tangent[node] = np.array([-n[1], n[0]])
            for node, key in gm.items():
                if pinned[node]:
                    continue
                n = nf.edge_normal[key]
                node_normal[node] = n
                tangent[node] = np.array([-n[1], n[0]])

        master_of = {}
        if spec.periodic:
            if self.mesh.periodic_pairs is None:
                raise InconsistentMesh("mesh carries no periodic pairing")
            master_of = self._periodic_p2_map()

        rows_u, cols_u, vals_u = [], [], []
        node_record: Dict[int, tuple] = {}
        n_red = 0
        for node in range(n2):
            if node in master_of:
                continue
            if pinned[node]:
                node_record[node] = ("pinned",)
            elif node in tangent:
                t = tangent[node]
                node_record[node] = ("tangent", n_red, t)
                rows_u += [2 * node, 2 * node + 1]
                cols_u += [n_red, n_red]
                vals_u += [t[0], t[1]]
                n_red += 1
            else:
                node_record[node] = ("free", n_red)
                rows_u += [2 * node, 2 * node + 1]
                cols_u += [n_red, n_red + 1]
                vals_u += [1.0, 1.0]
                n_red += 2
        for node, master in master_of.items():
            rec = node_record[master]
            node_record[node] = rec
            if rec[0] == "pinned":
                if not pinned[node] and node not in tangent:
                    raise InconsistentMesh("periodic pair classification mismatch")
                continue
            if rec[0] == "tangent":
                t = rec[2]
                if node in tangent and abs(tangent[node] @ t) < 1 - 1e-8:
                    raise InconsistentMesh("periodic pair normals disagree")
                rows_u += [2 * node, 2 * node + 1]
                cols_u += [rec[1], rec[1]]
                vals_u += [t[0], t[1]]
            else:
                rows_u += [2 * node, 2 * node + 1]
                cols_u += [rec[1], rec[1] + 1]
                vals_u += [1.0, 1.0]
        self.node_record = node_record
        self.Tu = sp.coo_matrix(
            (vals_u, (rows_u, cols_u)), shape=(2 * n2, n_red)
        ).tocsr()

        rows_p, cols_p = [], []
        n_red_p = 0
        vert_master = {s: m for s, m in master_of.items() if s < self.n_vertices}
        p_col = {}
        for v in range(self.n_vertices):
            if v in vert_master:
                continue
            p_col[v] = n_red_p
            rows_p.append(v)
            cols_p.append(n_red_p)
            n_red_p += 1
        for s, m in vert_master.items():
            rows_p.append(s)
            cols_p.append(p_col[m])
        self.Tp = sp.coo_matrix(
            (np.ones(len(rows_p)), (rows_p, cols_p)), shape=(self.n_vertices, n_red_p)
        ).tocsr()

    # ------------------------------------------------------------------
    # element batches and global matrices
    # ------------------------------------------------------------------
    def _cached(self, key, builder):
        if key not in self._matrix_cache:
            self._matrix_cache[key] = builder()
        return self._matrix_cache[key]

    def sym_grad_stiffness(self):
        """Global 2*int D(u):D(v) matrix on the full velocity layout."""

        def build():
            loc = kernels.p2_sym_grad_stiffness(self.inv_j, self.det)
            return _scatter_square(loc, self.vel_dofs, 2 * self.n2)

        return self._cached("sym_grad", build)

    def scalar_stiffness(self):
        def build():
            loc = kernels.p2_scalar_stiffness(self.inv_j, self.det)
            return _scatter_square(loc, self.tri2, self.n2)

        return self._cached("scalar_stiffness", build)

    def vector_grad_stiffness(self):
        """Full-gradient vector stiffness int grad(u):grad(v)."""

        def build():
            return _expand_scalar_to_vector(self.scalar_stiffness())

        return self._cached("vector_grad", build)

    def scalar_mass(self):
        def build():
            ref = np.einsum("q,qa,qb->ab", _ref.QUAD_WEIGHTS, _ref.REF_P2, _ref.REF_P2)
            loc = self.det[:, None, None] * ref[None, :, :]
            return _scatter_square(loc, self.tri2, self.n2)

        return self._cached("scalar_mass", build)

    def vector_mass(self):
        def build():
            return _expand_scalar_to_vector(self.scalar_mass())

        return self._cached("vector_mass", build)

    def divergence_matrix(self):
        """B with B[q, udof] = int lambda_q  d_beta phi_b."""

        def build():
            loc = kernels.p2_p1_divergence(self.inv_j, self.det)
            rows = np.broadcast_to(
                self.mesh.triangles[:, :, None], loc.shape
            ).reshape(-1)
            cols = np.broadcast_to(self.vel_dofs[:, None, :], loc.shape).reshape(-1)
            return sp.coo_matrix(
                (loc.reshape(-1), (rows, cols)), shape=(self.n_vertices, 2 * self.n2)
            ).tocsr()

        return self._cached("divergence", build)

    def pressure_mass(self):
        def build():
            ref = np.full((3, 3), 1.0 / 24.0)
            np.fill_diagonal(ref, 1.0 / 12.0)
            loc = self.det[:, None, None] * ref[None, :, :]
            return _scatter_square(loc, self.mesh.triangles, self.n_vertices)

        return self._cached("pressure_mass", build)

    def pressure_integral(self):
        """Vector m with m . p = int p dx for P1 pressures."""

        def build():
            m = np.zeros(self.n_vertices)
            np.add.at(m, self.mesh.triangles.ravel(), np.repeat(self.det / 6.0, 3))
            return m

        return self._cached("pressure_integral", build)

    def velocity_integrals(self):
        """Rows I with I[alpha] . u = int u_alpha dx (P2 exact)."""

        def build():
            ref = np.einsum("q,qa->a", _ref.QUAD_WEIGHTS, _ref.REF_P2)
            contrib = self.det[:, None] * ref[None, :]
            vec = np.zeros(self.n2)
            np.add.at(vec, self.tri2.ravel(), contrib.ravel())
            out = np.zeros((2, 2 * self.n2))
            out[0, 0::2] = vec
            out[1, 1::2] = vec
            return out

        return self._cached("velocity_integrals", build)

    # ------------------------------------------------------------------
    # boundary machinery
    # ------------------------------------------------------------------
    def boundary_edge_data(self, tags):
        """Per tagged edge: node triple, quad points, weights, normal."""
        out = []
        for tag in tags:
            for a, b in self.mesh.boundary.get(tag, ()):
                a, b = int(a), int(b)
                pa, pb = self.mesh.vertices[a], self.mesh.vertices[b]
                t = pb - pa
                L = float(np.hypot(*t))
                n = np.array([t[1], -t[0]]) / L
                pts = pa[None, :] + EDGE_POINTS[:, None] * t[None, :]
                nodes = (a, b, self._edge_mid_node(a, b))
                out.append((nodes, pts, EDGE_WEIGHTS * L, n, t / L, tag))
        return out

    def boundary_vector_mass(self, tags):
        M = sp.lil_matrix((2 * self.n2, 2 * self.n2))
        for nodes, _pts, w, _n, _t, _tag in self.boundary_edge_data(tags):
            loc = np.einsum("q,qa,qb->ab", w, _EDGE_PSI, _EDGE_PSI)
            dofs = np.array([2 * nodes[0], 2 * nodes[1], 2 * nodes[2]])
            for comp in range(2):
                M[np.ix_(dofs + comp, dofs + comp)] += loc
        return M.tocsr()

    def boundary_normal_mass(self, tags):
        """int (u.n)(v.n) over the tagged edges, exact edge normals."""
        M = sp.lil_matrix((2 * self.n2, 2 * self.n2))
        for nodes, _pts, w, n, _t, _tag in self.boundary_edge_data(tags):
            loc = np.einsum("q,qa,qb->ab", w, _EDGE_PSI, _EDGE_PSI)
            dofs = np.array([2 * nodes[0], 2 * nodes[1], 2 * nodes[2]])
            for al in range(2):
                for be in range(2):
                    M[np.ix_(dofs + al, dofs + be)] += loc * n[al] * n[be]
        return M.tocsr()

    def boundary_load(self, tags, fn, kind="vector"):
        """Load vector for a boundary density.

        kind='vector': r[(a,alpha)] = int fn_alpha psi_a; fn(pts) -> (k, 2)
        or, if fn.needs_frame, fn(pts, normal, tangent).
        kind='traction': r[(a,alpha)] = -int fn * n_alpha * psi_a (scalar fn).
        """
        r = np.zeros(2 * self.n2)
        needs_frame = getattr(fn, "needs_frame", False)
        for nodes, pts, w, n, t, _tag in self.boundary_edge_data(tags):
            if kind == "traction":
                vals = np.asarray(fn(pts), dtype=float).reshape(-1)
                dens = -vals[:, None] * n[None, :]
            else:
                dens = fn(pts, n, t) if needs_frame else fn(pts)
                dens = np.asarray(dens, dtype=float).reshape(len(pts), 2)
            contrib = np.einsum("q,qa,qd->ad", w, _EDGE_PSI, dens)
            for a, node in enumerate(nodes):
                r[2 * node] += contrib[a, 0]
                r[2 * node + 1] += contrib[a, 1]
        return r

    def boundary_l2_sq(self, u_full, tags):
        """Squared L2 norm of a velocity field over the tagged edges."""
        total = 0.0
        un = u_full.reshape(self.n2, 2)
        for nodes, _pts, w, _n, _t, _tag in self.boundary_edge_data(tags):
            vals = _EDGE_PSI @ un[list(nodes)]
            total += float(np.sum(w * np.sum(vals**2, axis=1)))
        return total

    def body_load(self, fn):
        """r[(a,alpha)] = int fn_alpha phi_a over the mesh."""
        if fn is None:
            return np.zeros(2 * self.n2)
        if not callable(fn):
            vec = np.asarray(fn, dtype=float)
            fn = lambda pts: np.broadcast_to(vec, (len(pts), 2))  # noqa: E731
        qp = _ref.QUAD_POINTS
        phys = self.tri_origin[:, None, :] + np.einsum("eij,qj->eqi", self.jacobians, qp)
        vals = np.asarray(fn(phys.reshape(-1, 2)), dtype=float).reshape(-1, len(qp), 2)
        contrib = np.einsum("q,qa,eqd,e->ead", _ref.QUAD_WEIGHTS, _ref.REF_P2, vals, self.det)
        r = np.zeros(2 * self.n2)
        np.add.at(r, (2 * self.tri2).ravel(), contrib[:, :, 0].ravel())
        np.add.at(r, (2 * self.tri2 + 1).ravel(), contrib[:, :, 1].ravel())
        return r

    def max_normal_trace(self, u_full):
        """Largest |u . n| over all rotated (tangent) constraint nodes."""
        un = u_full.reshape(self.n2, 2)
        worst = 0.0
        for node, rec in self.node_record.items():
            if rec[0] == "tangent":
                t = rec[2]
                n = np.array([t[1], -t[0]])
                worst = max(worst, abs(float(un[node] @ n)))
        return worst


def _scatter_square(local, dofmap, n):
    nt, m, _ = local.shape
    rows = np.broadcast_to(dofmap[:, :, None], (nt, m, m)).reshape(-1)
    cols = np.broadcast_to(dofmap[:, None, :], (nt, m, m)).reshape(-1)
    return sp.coo_matrix((local.reshape(-1), (rows, cols)), shape=(n, n)).tocsr()


def _expand_scalar_to_vector(S):
    """Blow a scalar n2 x n2 operator up to interleaved vector dofs."""
    S = S.tocoo()
    rows = np.concatenate([2 * S.row, 2 * S.row + 1])
    cols = np.concatenate([2 * S.col, 2 * S.col + 1])
    vals = np.concatenate([S.data, S.data])
    n = 2 * S.shape[0]
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()


@dataclass
class StokesProblemData:
    """Coefficients and data of one Stokes boundary value problem.

    ``c_slip`` multiplies the GammaD boundary mass (realizes alpha*eps^gamma
    in the micro problem, alpha in the critical cell problem).  ``g`` is the
    tangential stress on GammaD; any normal component is projected out with
    a warning.  ``p_b`` is the traction pressure on the traction tags.
    """

    mu: float = 1.0
    f: Optional[Callable] = None
    g: Optional[Callable] = None
    c_slip: float = 0.0
    p_b: Optional[Callable] = None
    traction_tags: Tuple[str, ...] = (TAG_GAMMA_N, TAG_SN_PLUS, TAG_SN_MINUS)
    slip_tags: Tuple[str, ...] = (TAG_GAMMA_D,)

    def __post_init__(self):
        if not np.isfinite(self.c_slip) or self.c_slip < 0:
            raise ValueError("slip coefficient must be finite and nonnegative")
        if self.p_b is not None and not callable(self.p_b):
            val = float(self.p_b)
            self.p_b = lambda pts: np.full(len(np.atleast_2d(pts)), val)


@dataclass
class SaddleSystem:
    """Assembled saddle-point system [A, B^T; B, 0] plus its reduction."""

    disc: StokesDiscretization
    A: sp.csr_matrix
    A_visc: sp.csr_matrix
    M_slip: Optional[sp.csr_matrix]
    B: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    data: StokesProblemData
    _lu: object = field(default=None, repr=False)
    _K: object = field(default=None, repr=False)

    def _reduced(self):
        if self._K is None:
            Tu, Tp = self.disc.Tu, self.disc.Tp
            Ar = (Tu.T @ self.A @ Tu).tocsr()
            Br = (Tp.T @ self.B @ Tu).tocsr()
            blocks = [[Ar, -Br.T], [-Br, None]]
            if self.disc.gauge == "zero_mean":
                m = Tp.T @ self.disc.pressure_integral()
                nu = Ar.shape[0]
                col = sp.csr_matrix(
                    (m, (np.arange(len(m)), np.zeros(len(m), dtype=int))),
                    shape=(len(m), 1),
                )
                blocks = [
                    [Ar, -Br.T, None],
                    [-Br, None, col],
                    [None, col.T, None],
                ]
            self._K = sp.bmat(blocks, format="csc")
        return self._K

    def factorize(self):
        if self._lu is None:
            K = self._reduced()
            try:
                self._lu = spla.splu(K)
            except RuntimeError as exc:
                raise self._singular(f"factorization failed: {exc}")
        return self._lu

    def _singular(self, message):
        near = self._near_null()
        return SingularSystem(message, near_null=near)

    def _near_null(self):
        K = self._reduced()
        scale = abs(K).sum() / max(K.nnz, 1)
        for sigma in (1e-10 * scale, -1e-10 * scale):
            try:
                vals, vecs = spla.eigsh(K, k=1, sigma=sigma, which="LM")
            except Exception:
                continue
            if abs(vals[0]) < 1e-5 * scale:
                nu = self.disc.Tu.shape[1]
                u = self.disc.Tu @ vecs[:nu, 0]
                nrm = np.abs(u).max()
                return u / nrm if nrm > 0 else None
        return None

    def _check_pressure_gauge(self):
        """An ungauged pressure with no reachable boundary flux is a
        structural constant-pressure kernel."""
        Tu, Tp = self.disc.Tu, self.disc.Tp
        ones = Tp @ np.ones(Tp.shape[1])
        flux = Tu.T @ (self.B.T @ ones)
        scale = max(abs(self.B).max(), 1e-300)
        if np.abs(flux).max() < 1e-12 * scale:
            raise SingularSystem(
                "constant-pressure kernel: sealed cell needs the zero-mean gauge",
                near_null=None,
            )

    def solve(self, rhs_u=None, rhs_p=None):
        """Direct solve; raises SingularSystem on structural singularity."""
        if self.disc.gauge == "none":
            self._check_pressure_gauge()
        Tu, Tp = self.disc.Tu, self.disc.Tp
        ru = Tu.T @ (self.rhs_u if rhs_u is None else rhs_u)
        rp = -(Tp.T @ (self.rhs_p if rhs_p is None else rhs_p))
        b = np.concatenate([ru, rp])
        if self.disc.gauge == "zero_mean":
            b = np.concatenate([b, [0.0]])
        lu = self.factorize()
        x = lu.solve(b)
        K = self._reduced()
        bnorm = float(np.linalg.norm(b))
        res = float(np.linalg.norm(K @ x - b))
        rel = res / bnorm if bnorm > 0 else res
        if not np.all(np.isfinite(x)) or rel > _SINGULAR_TOL or (
            bnorm > 0 and np.linalg.norm(x) > 1e13 * bnorm
        ):
            raise self._singular(
                f"saddle system is singular (relative residual {rel:.2e})"
            )
        nu = Tu.shape[1]
        npr = Tp.shape[1]
        u = Tu @ x[:nu]
        p = Tp @ x[nu : nu + npr]
        return StokesField(disc=self.disc, u=u, p=p, residual=rel, system=self)


@dataclass
class StokesField:
    """Mixed solution with its discretization handle."""

    disc: StokesDiscretization
    u: np.ndarray
    p: np.ndarray
    residual: float
    system: Optional[SaddleSystem] = None

    def velocity_nodal(self):
        return self.u.reshape(self.disc.n2, 2)

    def divergence_residual(self):
        """sup over discrete pressures of (q, div u), reduced space."""
        B = self.disc.divergence_matrix()
        r = self.disc.Tp.T @ (B @ self.u)
        if self.system is not None and np.any(self.system.rhs_p):
            r = r - self.disc.Tp.T @ self.system.rhs_p
        return float(np.abs(r).max()) if len(r) else 0.0

    def velocity_integral(self):
        return self.disc.velocity_integrals() @ self.u

    def pressure_integral(self):
        return float(self.disc.pressure_integral() @ self.p)


def assemble(disc: StokesDiscretization, data: StokesProblemData) -> SaddleSystem:
    """Assemble the saddle system for the given problem data."""
    if data.mu <= 0:
        raise ValueError("viscosity must be positive")
    A_visc = (data.mu * disc.sym_grad_stiffness()).tocsr()
    M_slip = None
    A = A_visc
    if data.c_slip > 0:
        M_slip = disc.boundary_vector_mass(data.slip_tags)
        A = (A_visc + data.c_slip * M_slip).tocsr()

    rhs_u = disc.body_load(data.f)
    if data.g is not None:
        rhs_u += disc.boundary_load(data.slip_tags, _tangential(data.g, disc), kind="vector")
    if data.p_b is not None:
        tags = tuple(t for t in data.traction_tags if t in disc.mesh.boundary)
        if tags:
            rhs_u += disc.boundary_load(tags, data.p_b, kind="traction")

    return SaddleSystem(
        disc=disc,
        A=A,
        A_visc=A_visc,
        M_slip=M_slip,
        B=disc.divergence_matrix(),
        rhs_u=rhs_u,
        rhs_p=np.zeros(disc.n_vertices),
        data=data,
    )


def _tangential(fn, disc):
    """Wrap a GammaD stress density: project out any normal component."""
    warned = [False]

    def wrapped(pts, n, t):
        needs_frame = getattr(fn, "needs_frame", False)
        vals = fn(pts, n, t) if needs_frame else fn(pts)
        vals = np.asarray(vals, dtype=float).reshape(len(pts), 2)
        normal_part = vals @ n
        if not warned[0] and np.max(np.abs(normal_part)) > 1e-10 * (1 + np.abs(vals).max()):
            logger.warning("GammaD stress has a normal component; projecting it out")
            warned[0] = True
        return vals - normal_part[:, None] * n[None, :]

    wrapped.needs_frame = True
    return wrapped


def solve(system: SaddleSystem) -> StokesField:
    return system.solve()


def energy(field: StokesField, system: Optional[SaddleSystem] = None):
    """Energy balance: viscous + slip against the external work."""
    system = system or field.system
    u = field.u
    viscous = float(u @ (system.A_visc @ u))
    slip = float(system.data.c_slip * (u @ (system.M_slip @ u))) if system.M_slip is not None else 0.0
    work = float(system.rhs_u @ u)
    return {
        "viscous": viscous,
        "slip": slip,
        "work": work,
        "balance_defect": viscous + slip - work,
    }


def inf_sup_constant(disc: StokesDiscretization):
    """Discrete LBB constant via the dense pressure Schur eigenproblem.

    beta^2 = min eig of B A1^{-1} B^T q = beta^2 Mp q with A1 the velocity
    H1 operator on the constrained space; near-null pressure directions
    (constants when unreachable) are discarded.
    """
    Tu, Tp = disc.Tu, disc.Tp
    A1 = (Tu.T @ (disc.vector_grad_stiffness() + disc.vector_mass()) @ Tu).tocsc()
    Br = (Tp.T @ disc.divergence_matrix() @ Tu).tocsr()
    Mp = (Tp.T @ disc.pressure_mass() @ Tp).toarray()
    lu = spla.splu(A1)
    npr = Br.shape[0]
    S = np.empty((npr, npr))
    BrT = Br.T.tocsc()
    for lo in range(0, npr, 256):
        hi = min(lo + 256, npr)
        rhs = np.asarray(BrT[:, lo:hi].todense())
        S[:, lo:hi] = Br @ lu.solve(rhs)
    from scipy.linalg import eigh

    vals = eigh(S, Mp, eigvals_only=True)
    vals = vals[vals > 1e-10 * vals.max()]
    return float(np.sqrt(vals.min()))


def eval_p2(disc: StokesDiscretization, coeffs, pts, fill=np.nan):
    """Evaluate a nodal coefficient field at arbitrary points.

    Fields of length n2 (or (n2, d)) are treated as P2, fields of length
    n_vertices as P1.  Point location via nearest-centroid candidates;
    points outside the mesh get ``fill``.
    """
    from scipy.spatial import cKDTree

    pts = np.atleast_2d(pts)
    mesh = disc.mesh
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    tree = cKDTree(centroids)
    _, cand = tree.query(pts, k=min(12, len(centroids)))
    cand = np.atleast_2d(cand)
    coeffs = np.asarray(coeffs)
    p1 = len(coeffs) == disc.n_vertices and disc.n_vertices != disc.n2
    scalar = coeffs.ndim == 1
    out_dim = 1 if scalar else coeffs.shape[1]
    out = np.full((len(pts), out_dim), fill, dtype=float)
    origins = disc.tri_origin
    for i, x in enumerate(pts):
        for t in cand[i]:
            xi = disc.inv_j[t] @ (x - origins[t])
            if xi[0] >= -1e-10 and xi[1] >= -1e-10 and xi.sum() <= 1 + 1e-10:
                if p1:
                    phi = np.array([1.0 - xi[0] - xi[1], xi[0], xi[1]])
                    nodes = mesh.triangles[t]
                else:
                    phi = _ref.p2_values(xi[None, :])[0]
                    nodes = disc.tri2[t]
                vals = coeffs[nodes] if not scalar else coeffs[nodes, None]
                out[i] = phi @ vals
                break
    return out[:, 0] if scalar else out
