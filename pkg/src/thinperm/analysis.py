"""Functional-inequality constants, the discrete Bogovskii operator, and
the layer restriction operator.

Inequality constants are estimated as extremal generalized eigenvalues of
the corresponding quadratic forms on the constrained discrete spaces; a
vanishing smallest eigenvalue exposes the surviving rigid motion.  The
restriction operator is built cell by cell: a smooth face-flux field
carries the lateral fluxes, and a zero-boundary divergence correction
(least-gradient Bogovskii solve) restores the divergence identity
elementwise.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import BogovskiiFailure, MeanNotZero, MeshingFailed
from .fem import _EDGE_PSI, ConstraintSpec, StokesDiscretization
from .geometry import CellGeometry, LayerGeometry
from .meshing import TAG_GAMMA_D, TAG_LATERAL0, TAG_LATERAL1, Mesh, build_layer_mesh
from .micro import layer_cell_node_map
from .poly import Poly2, VecPoly2, random_vector_poly
from .quadrature import TRI_POINTS_HI, TRI_WEIGHTS_HI

KORN_NORMAL_TRACE = "korn_normal_trace"
POINCARE_HN = "poincare_Hn"
TRACE_SCALED = "trace_scaled"


@dataclass
class ConstantEstimate:
    """Best-constant estimate with its extremal discrete field."""

    inequality: str
    value: float
    eigenvalue: float
    h: float
    extremal: np.ndarray
    constraint: str = ""

    def to_row(self):
        return [self.inequality, self.constraint, self.h, self.eigenvalue, self.value]


def _smallest_generalized_eig(A, M):
    """Smallest eigenpair of A x = lam M x for PSD A, PD M."""
    s = float(A.diagonal().mean() / max(M.diagonal().mean(), 1e-300))
    sigma = -1e-9 * max(s, 1e-12)
    vals, vecs = spla.eigsh(A, k=1, M=M, sigma=sigma, which="LM")
    lam = float(vals[0])
    return max(lam, 0.0), vecs[:, 0]


def estimate_korn_constant(mesh: Mesh, constraint="periodic_normal_zero") -> ConstantEstimate:
    """Best constant in ||u|| <= C ||D(u)|| on the constrained space.

    constraint='normal_zero_GammaD' uses only the zero normal trace (the
    single-cell inequality, which rotations may defeat); the periodic
    variant adds the lateral identification.  A vanishing eigenvalue is a
    meaningful outcome: its eigenvector is the surviving rigid motion.
    """
    specs = {
        "normal_zero_GammaD": ConstraintSpec(normal_zero=(TAG_GAMMA_D,), periodic=False),
        "periodic_normal_zero": ConstraintSpec(normal_zero=(TAG_GAMMA_D,), periodic=True),
    }
    disc = StokesDiscretization(mesh, specs[constraint], gauge="none")
    Tu = disc.Tu
    A = (Tu.T @ (0.5 * disc.sym_grad_stiffness()) @ Tu).tocsc()
    M = (Tu.T @ disc.vector_mass() @ Tu).tocsc()
    lam, vec = _smallest_generalized_eig(A, M)
    value = float(1.0 / np.sqrt(lam)) if lam > 1e-14 else np.inf
    return ConstantEstimate(
        inequality=KORN_NORMAL_TRACE,
        value=value,
        eigenvalue=lam,
        h=mesh.h,
        extremal=Tu @ vec,
        constraint=constraint,
    )


def estimate_poincare_constant(mesh: Mesh, constrained=False) -> ConstantEstimate:
    """Best constant in ||u||^2 <= C^2 (||grad u||^2 + int_G |u.n|^2).

    Unconstrained form on the periodic space; with ``constrained`` the
    zero-normal-trace subspace is used instead (the boundary term then
    nearly vanishes and the estimate can only improve).
    """
    spec = ConstraintSpec(
        normal_zero=(TAG_GAMMA_D,) if constrained else (), periodic=True
    )
    disc = StokesDiscretization(mesh, spec, gauge="none")
    Tu = disc.Tu
    A_full = disc.vector_grad_stiffness() + disc.boundary_normal_mass((TAG_GAMMA_D,))
    A = (Tu.T @ A_full @ Tu).tocsc()
    M = (Tu.T @ disc.vector_mass() @ Tu).tocsc()
    lam, vec = _smallest_generalized_eig(A, M)
    value = float(1.0 / np.sqrt(lam)) if lam > 1e-14 else np.inf
    return ConstantEstimate(
        inequality=POINCARE_HN,
        value=value,
        eigenvalue=lam,
        h=mesh.h,
        extremal=Tu @ vec,
        constraint="normal_zero" if constrained else "periodic_only",
    )


def _scalar_boundary_mass(disc: StokesDiscretization, tags):
    M = sp.lil_matrix((disc.n2, disc.n2))
    for nodes, _pts, w, _n, _t, _tag in disc.boundary_edge_data(tags):
        loc = np.einsum("q,qa,qb->ab", w, _EDGE_PSI, _EDGE_PSI)
        idx = np.array(nodes)
        M[np.ix_(idx, idx)] += loc
    return M.tocsr()


def estimate_trace_constant(mesh: Mesh, eps: float) -> ConstantEstimate:
    """Largest constant ratio in eps ||v||^2_bnd <= C^2 (||v||^2 + eps^2 ||grad v||^2)
    over the scalar P2 space of the layer (quadratic-metric variant)."""
    disc = StokesDiscretization(mesh, ConstraintSpec(), gauge="none")
    tags = tuple(mesh.boundary.keys())
    A = (eps * _scalar_boundary_mass(disc, tags)).tocsr()
    Mmet = (disc.scalar_mass() + eps**2 * disc.scalar_stiffness()).tocsc()
    vals, vecs = spla.eigsh(A, k=1, M=Mmet, which="LA")
    lam = float(vals[0])
    return ConstantEstimate(
        inequality=TRACE_SCALED,
        value=float(np.sqrt(max(lam, 0.0))),
        eigenvalue=lam,
        h=mesh.h,
        extremal=vecs[:, 0],
        constraint=f"eps={eps}",
    )


# ----------------------------------------------------------------------
# discrete Bogovskii operator
# ----------------------------------------------------------------------
@dataclass
class BogovskiiResult:
    disc: StokesDiscretization
    u: np.ndarray
    multiplier: np.ndarray
    divergence_residual: float
    grad_norm: float
    bound_constant: float


class BogovskiiSolver:
    """Least-gradient right inverse of the divergence with zero boundary.

    Velocity space: P2 vanishing on the whole fluid boundary; divergence
    is enforced against piecewise constants, one constraint per element,
    via a saddle solve minimizing ||grad w||.  The factorization is kept
    for repeated data.
    """

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        spec = ConstraintSpec(strong_zero=tuple(mesh.boundary.keys()), periodic=False)
        self.disc = StokesDiscretization(mesh, spec, gauge="none")
        disc = self.disc
        self.G = (disc.Tu.T @ disc.vector_grad_stiffness() @ disc.Tu).tocsr()

        from .kernels import p2_p1_divergence

        loc = p2_p1_divergence(disc.inv_j, disc.det).sum(axis=1)  # (nt, 12)
        nt = mesh.n_triangles
        rows = np.repeat(np.arange(nt), 12)
        cols = disc.vel_dofs.reshape(-1)
        B0 = sp.coo_matrix((loc.reshape(-1), (rows, cols)), shape=(nt, 2 * disc.n2)).tocsr()
        self.B0_full = B0
        self.B0 = (B0 @ disc.Tu).tocsr()
        self.areas = disc.det / 2.0

        a_col = sp.csr_matrix(
            (self.areas, (np.arange(nt), np.zeros(nt, dtype=int))), shape=(nt, 1)
        )
        self.K = sp.bmat(
            [[self.G, self.B0.T, None], [self.B0, None, a_col], [None, a_col.T, None]],
            format="csc",
        )
        self._lu = None

    def factorize(self):
        if self._lu is None:
            self._lu = spla.splu(self.K)
        return self._lu

    def element_integrals(self, f):
        """F_tau = int_tau f for a callable or per-element mean values."""
        if callable(f):
            disc = self.disc
            phys = disc.tri_origin[:, None, :] + np.einsum(
                "eij,qj->eqi", disc.jacobians, TRI_POINTS_HI
            )
            vals = np.asarray(f(phys.reshape(-1, 2)), dtype=float).reshape(
                -1, len(TRI_WEIGHTS_HI)
            )
            return disc.det * (vals @ TRI_WEIGHTS_HI)
        vals = np.asarray(f, dtype=float)
        if vals.shape != (self.mesh.n_triangles,):
            raise ValueError("per-element data must have one value per triangle")
        return vals * self.areas

    def solve_integrals(self, F, l2_scale=None):
        """Solve with prescribed per-element divergence integrals."""
        F = np.asarray(F, dtype=float)
        total = float(F.sum())
        scale = max(float(np.abs(F).sum()), 1.0)
        if abs(total) > 1e-10 * scale:
            raise MeanNotZero(f"divergence data has mean {total:.3e} (must vanish)")
        F = F - total * self.areas / self.areas.sum()

        nu = self.G.shape[0]
        nt = len(F)
        rhs = np.concatenate([np.zeros(nu), F, [0.0]])
        x = self.factorize().solve(rhs)
        w = x[:nu]
        lam = x[nu : nu + nt]
        resid = float(np.abs(self.B0 @ w - F).max())
        if not np.isfinite(resid) or resid > 1e-9 * max(1.0, np.abs(F).max() / self.areas.min()):
            raise BogovskiiFailure(f"divergence constraint violated (residual {resid:.3e})")
        grad = float(np.sqrt(max(w @ (self.G @ w), 0.0)))
        if l2_scale is None:
            l2_scale = float(np.sqrt(np.sum(F**2 / self.areas)))
        return BogovskiiResult(
            disc=self.disc,
            u=self.disc.Tu @ w,
            multiplier=lam,
            divergence_residual=resid,
            grad_norm=grad,
            bound_constant=grad / l2_scale if l2_scale > 0 else 0.0,
        )


def discrete_bogovskii(mesh: Mesh, f) -> BogovskiiResult:
    """One-shot least-gradient solve of div w = f, w = 0 on the boundary.

    ``f`` is a callable or per-element mean values; its mean must vanish
    to 1e-10 (relative), otherwise MeanNotZero is raised.
    """
    solver = BogovskiiSolver(mesh)
    F = solver.element_integrals(f)
    if callable(f):
        disc = solver.disc
        phys = disc.tri_origin[:, None, :] + np.einsum(
            "eij,qj->eqi", disc.jacobians, TRI_POINTS_HI
        )
        vals = np.asarray(f(phys.reshape(-1, 2)), dtype=float).reshape(-1, len(TRI_WEIGHTS_HI))
        l2 = float(np.sqrt(np.sum(disc.det * ((vals**2) @ TRI_WEIGHTS_HI))))
    else:
        l2 = float(np.sqrt(np.sum(np.asarray(f) ** 2 * solver.areas)))
    return solver.solve_integrals(F, l2_scale=l2)


# ----------------------------------------------------------------------
# restriction operator
# ----------------------------------------------------------------------
def _smoothstep(x):
    return x * x * (3.0 - 2.0 * x)


def _smoothstep_dx(x):
    return 6.0 * x * (1.0 - x)


@dataclass
class RestrictionSetup:
    """Face-flux profiles and the Bogovskii solver of one cell geometry.

    The flux carrier on each lateral face is a transverse quartic bump
    supported on a fluid-only band (c0, c1), normalized to unit face flux
    by the mesh quadrature; the axial blending is a cubic smoothstep, so
    opposite faces match under the periodic translation.
    """

    geometry: CellGeometry
    cell_mesh: Mesh
    band: Tuple[float, float]
    b_norm: float
    bogovskii: BogovskiiSolver
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, geometry: CellGeometry, cell_mesh: Mesh):
        ylo, yhi = geometry.fluid_ybounds
        h = cell_mesh.h
        if geometry.holes:
            top = max(_hole_top(hole) for hole in geometry.holes)
            rows = np.unique(cell_mesh.vertices[np.abs(cell_mesh.vertices[:, 0]) < 1e-9, 1])
            ok = rows[rows >= top + 1.2 * h]
            if len(ok) == 0 or yhi - ok[0] < 2.5 * h:
                raise MeshingFailed("no room for a fluid-only face flux band above the obstacles")
            band = (float(ok[0]), float(yhi))
        else:
            band = (float(ylo), float(yhi))

        setup = cls(
            geometry=geometry,
            cell_mesh=cell_mesh,
            band=band,
            b_norm=1.0,
            bogovskii=BogovskiiSolver(cell_mesh),
        )
        raw = setup._face_flux_raw()
        if raw <= 0:
            raise MeshingFailed("degenerate face flux profile")
        setup.b_norm = raw
        setup._validate()
        return setup

    # transverse bump, clamped to zero outside the band
    def _b(self, y):
        c0, c1 = self.band
        y = np.asarray(y, dtype=float)
        v = ((y - c0) * (c1 - y)) ** 2 / self.b_norm
        return np.where((y >= c0) & (y <= c1), v, 0.0)

    def _face_flux_raw(self):
        total = 0.0
        old = self.b_norm
        disc = self.bogovskii.disc
        for nodes, pts, w, n, t, tag in disc.boundary_edge_data((TAG_LATERAL0,)):
            c0, c1 = self.band
            y = pts[:, 1]
            v = ((y - c0) * (c1 - y)) ** 2
            v = np.where((y >= c0) & (y <= c1), v, 0.0)
            total += float(np.sum(w * v))
        self.b_norm = old
        return total

    def phi_values(self, pts, face: int):
        """phi_{+1} (face=+1) or phi_{-1} (face=-1) at points of the cell."""
        pts = np.atleast_2d(pts)
        chi = _smoothstep(np.clip(pts[:, 0], 0.0, 1.0))
        axial = chi if face > 0 else 1.0 - chi
        return axial * self._b(pts[:, 1])

    def vhat(self, pts, flux_plus, flux_minus):
        """Flux carrier sum_i flux_i phi_i n_i; axial component only."""
        pts = np.atleast_2d(pts)
        u1 = flux_plus * self.phi_values(pts, +1) - flux_minus * self.phi_values(pts, -1)
        out = np.zeros((len(pts), 2))
        out[:, 0] = u1
        return out

    def div_vhat(self, pts, flux_plus, flux_minus):
        pts = np.atleast_2d(pts)
        return (flux_plus + flux_minus) * _smoothstep_dx(np.clip(pts[:, 0], 0.0, 1.0)) * self._b(
            pts[:, 1]
        )

    def _validate(self):
        # vanishes on the solid: sample the obstacles and slabs
        samples = []
        ylo, yhi = self.geometry.fluid_ybounds
        if self.geometry.slab is not None:
            ys = np.linspace(yhi + 1e-6, 1.0, 7)
            xs = np.linspace(0.0, 1.0, 9)
            X, Y = np.meshgrid(xs, ys)
            samples.append(np.column_stack([X.ravel(), Y.ravel()]))
            samples.append(np.column_stack([X.ravel(), -Y.ravel()]))
        for hole in self.geometry.holes:
            pts = hole.loop_points(self.cell_mesh.h * 2.0) * 0.999
            center = pts.mean(axis=0)
            samples.append(center[None, :] + 0.95 * (pts - center[None, :]))
        worst = 0.0
        for s in samples:
            worst = max(worst, float(np.abs(self.phi_values(s, +1)).max()))
            worst = max(worst, float(np.abs(self.phi_values(s, -1)).max()))
        flux = self._face_flux_raw() / self.b_norm
        face_match = float(
            np.abs(
                self.phi_values(np.column_stack([np.ones(5), np.linspace(*self.band, 5)]), +1)
                - self.phi_values(np.column_stack([np.zeros(5), np.linspace(*self.band, 5)]), -1)
            ).max()
        )
        self.diagnostics = {
            "solid_max": worst,
            "unit_flux_defect": abs(flux - 1.0),
            "face_compatibility": face_match,
            "off_face_value": float(np.abs(self.phi_values(np.array([[0.0, 0.5 * sum(self.band)]]), +1)).max()),
        }
        if worst > 1e-12 or abs(flux - 1.0) > 1e-10:
            raise MeshingFailed(f"face flux profile invalid: {self.diagnostics}")


def _hole_top(hole):
    from .geometry import Disk

    if isinstance(hole, Disk):
        return hole.center[1] + hole.radius
    return float(hole.corner_points()[:, 1].max())


@dataclass
class CellRestriction:
    flux_plus: float
    flux_minus: float
    compat_defect: float
    divergence_residual: float


@dataclass
class RestrictionResult:
    """Global restriction R v on the layer, cell provenance included."""

    setup: RestrictionSetup
    layer: LayerGeometry
    values: np.ndarray  # (n2_layer, 2) nodal values
    per_cell: List[CellRestriction]
    property_residual: float

    def max_divergence_residual(self):
        return max(c.divergence_residual for c in self.per_cell)


def build_restriction(
    setup: RestrictionSetup,
    v: VecPoly2,
    layer: LayerGeometry,
    layer_disc: Optional[StokesDiscretization] = None,
) -> RestrictionResult:
    """Restriction of a polynomial field vanishing on the layer top/bottom.

    Per scaled cell: pull back to the unit cell, carry the lateral fluxes
    by the face profiles, then correct the divergence by a zero-boundary
    least-gradient solve; conformity across cell faces holds because the
    face profiles match under translation and the correction vanishes on
    the boundary.
    """
    eps = layer.eps
    scale = max(1.0, abs(v.u1.c).max() + abs(v.u2.c).max())
    top = v.max_abs_on_segment(eps, 0.0, float(layer.sigma_lengths[0]))
    bot = v.max_abs_on_segment(-eps, 0.0, float(layer.sigma_lengths[0]))
    if max(top, bot) > 1e-9 * scale:
        raise ValueError("input field must vanish on the layer top/bottom")

    if layer_disc is None:
        mesh = build_layer_mesh(layer, eps * setup.cell_mesh.h, cell_mesh=setup.cell_mesh)
        layer_disc = StokesDiscretization(mesh, ConstraintSpec(), gauge="none")
    node_map = layer_cell_node_map(layer_disc)

    bog = setup.bogovskii
    disc = bog.disc
    cell_area = setup.cell_mesh.area()
    phys = disc.tri_origin[:, None, :] + np.einsum("eij,qj->eqi", disc.jacobians, TRI_POINTS_HI)
    flat = phys.reshape(-1, 2)
    coords = disc.p2_coords

    values = np.zeros((layer_disc.n2, 2))
    per_cell = []
    prop_res = 0.0
    for k in range(layer.n_cells):
        V = v.compose_affine(eps * k, eps, 0.0, eps)
        flux_plus = V.u1.line_integral_x(1.0, -1.0, 1.0)
        flux_minus = -V.u1.line_integral_x(0.0, -1.0, 1.0)
        divV = V.divergence()

        div_mesh = float(
            np.sum(disc.det * (divV(flat).reshape(-1, len(TRI_WEIGHTS_HI)) @ TRI_WEIGHTS_HI))
        )
        solid_div = divV.rect_integral(0.0, 1.0, -1.0, 1.0) - div_mesh
        const = solid_div / cell_area

        dens = divV(flat) + const - setup.div_vhat(flat, flux_plus, flux_minus)
        F = disc.det * (dens.reshape(-1, len(TRI_WEIGHTS_HI)) @ TRI_WEIGHTS_HI)
        defect = float(F.sum())
        w = bog.solve_integrals(F)

        nodal = setup.vhat(coords, flux_plus, flux_minus) + w.u.reshape(disc.n2, 2)
        values[node_map[k]] = nodal
        per_cell.append(
            CellRestriction(
                flux_plus=flux_plus,
                flux_minus=flux_minus,
                compat_defect=defect,
                divergence_residual=w.divergence_residual,
            )
        )
        prop_res = max(prop_res, w.divergence_residual + abs(defect) / layer.n_cells)
    return RestrictionResult(
        setup=setup, layer=layer, values=values, per_cell=per_cell, property_residual=prop_res
    )


def restriction_norms(result: RestrictionResult, layer_disc: StokesDiscretization):
    """L2 and gradient norms of the interpolated restriction."""
    u = np.empty(2 * layer_disc.n2)
    u[0::2] = result.values[:, 0]
    u[1::2] = result.values[:, 1]
    l2 = float(np.sqrt(u @ (layer_disc.vector_mass() @ u)))
    grad = float(np.sqrt(u @ (layer_disc.vector_grad_stiffness() @ u)))
    return l2, grad


def restriction_norm_sweep(
    geometry: CellGeometry,
    eps_list,
    h_cell=1 / 16,
    n_fields=8,
    seed=0,
    sigma_length=1,
    cell_mesh: Optional[Mesh] = None,
):
    """Operator norm estimates (||Rv|| + eps ||grad Rv||) / (eps ||grad v||)
    over random polynomial fields vanishing on the layer top/bottom."""
    from .meshing import build_cell_mesh

    if cell_mesh is None:
        cell_mesh = build_cell_mesh(geometry, h_cell)
    setup = RestrictionSetup.build(geometry, cell_mesh)
    rng = np.random.default_rng(seed)
    rows = []
    for eps in eps_list:
        layer = LayerGeometry(cell=geometry, eps=eps, sigma_lengths=(sigma_length,))
        mesh = build_layer_mesh(layer, eps * cell_mesh.h, cell_mesh=cell_mesh)
        ldisc = StokesDiscretization(mesh, ConstraintSpec(), gauge="none")
        ratios = []
        for _ in range(n_fields):
            base = random_vector_poly(rng, degree=2)
            bump = Poly2.from_coeffs([[1.0, 0.0, -1.0 / eps**2]])
            vfield = VecPoly2(bump * base.u1, bump * base.u2)
            res = build_restriction(setup, vfield, layer, layer_disc=ldisc)
            l2, grad = restriction_norms(res, ldisc)
            gv = np.sqrt(
                vfield.grad_norm_sq_integral(0.0, float(sigma_length), -eps, eps)
            )
            ratios.append((l2 + eps * grad) / (eps * gv))
        rows.append(
            {
                "eps": eps,
                "max_ratio": float(np.max(ratios)),
                "median_ratio": float(np.median(ratios)),
                "n_fields": n_fields,
            }
        )
    return rows
