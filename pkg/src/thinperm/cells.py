"""Reference-cell problems and the effective quantities they induce.

For each parameter regime the unit-force problems (one per axis), the
boundary-stress problem, the normal-traction problem (open top/bottom
faces only) and the auxiliary vector-Laplace problems are solved on the
fluid cell.  Averaging the solutions yields the permeability tensor in its
two conventions, the shear and traction coupling vectors and the Gram
matrix of the Laplace solutions.

Regime selection of the interface conditions:

* alpha = 0, or alpha > 0 with gamma > -1: zero normal trace, zero
  tangential stress (pure slip);
* alpha > 0, gamma = -1: zero normal trace plus the Robin boundary mass
  with coefficient exactly alpha;
* alpha > 0, gamma < -1: homogeneous Dirichlet (the slip condition
  degenerates to no-slip in the limit, and the boundary stress data drops
  out of the problem).
"""
import warnings
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np
import scipy.sparse.linalg as spla

from .errors import RegimeMismatch, SingularSystem
from .fem import (
    ConstraintSpec,
    SaddleSystem,
    StokesDiscretization,
    StokesField,
    StokesProblemData,
    assemble,
)
from .meshing import TAG_GAMMA_D, TAG_SN_MINUS, TAG_SN_PLUS, Mesh

GAMMA_BELOW = "below_minus1"
GAMMA_EQUAL = "equal_minus1"
GAMMA_ABOVE = "above_minus1"
SN_EMPTY = "empty"
SN_NONEMPTY = "nonempty"


def classify_gamma(gamma) -> str:
    if gamma < -1.0:
        return GAMMA_BELOW
    if gamma == -1.0:
        return GAMMA_EQUAL
    return GAMMA_ABOVE


@dataclass(frozen=True)
class RegimeDescriptor:
    """Parameter regime: slip coefficient, slip exponent class, face class."""

    alpha: float
    gamma_class: Optional[str]
    sn_class: str

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError("alpha must be nonnegative")
        if self.sn_class not in (SN_EMPTY, SN_NONEMPTY):
            raise ValueError(f"unknown sn_class {self.sn_class!r}")
        if self.alpha == 0 and self.gamma_class is not None:
            raise ValueError("gamma_class is meaningful only for alpha > 0")
        if self.alpha > 0 and self.gamma_class not in (GAMMA_BELOW, GAMMA_EQUAL, GAMMA_ABOVE):
            raise ValueError(f"invalid gamma_class {self.gamma_class!r}")

    @classmethod
    def from_parameters(cls, alpha, gamma, sn_empty):
        """alpha = 0 makes gamma irrelevant (warned about, then dropped)."""
        sn = SN_EMPTY if sn_empty else SN_NONEMPTY
        if alpha == 0:
            if gamma is not None:
                warnings.warn("alpha = 0: gamma has no effect and is ignored")
            return cls(alpha=0.0, gamma_class=None, sn_class=sn)
        return cls(alpha=float(alpha), gamma_class=classify_gamma(float(gamma)), sn_class=sn)

    @classmethod
    def from_mesh(cls, alpha, gamma, mesh: Mesh):
        return cls.from_parameters(alpha, gamma, sn_empty=_mesh_sn_empty(mesh))

    @property
    def pure_slip(self):
        return self.alpha == 0 or self.gamma_class == GAMMA_ABOVE

    @property
    def robin(self):
        return self.alpha > 0 and self.gamma_class == GAMMA_EQUAL

    @property
    def no_slip(self):
        return self.alpha > 0 and self.gamma_class == GAMMA_BELOW

    def to_dict(self):
        return {"alpha": self.alpha, "gamma_class": self.gamma_class, "sn_class": self.sn_class}

    @classmethod
    def from_dict(cls, d):
        return cls(alpha=d["alpha"], gamma_class=d["gamma_class"], sn_class=d["sn_class"])


def _mesh_sn_empty(mesh: Mesh) -> bool:
    return TAG_SN_PLUS not in mesh.boundary and TAG_SN_MINUS not in mesh.boundary


def _check_regime_mesh(regime: RegimeDescriptor, mesh: Mesh):
    if mesh.periodic_pairs is None:
        raise RegimeMismatch("cell problems need a cell mesh with periodic pairing")
    mesh_sn = SN_EMPTY if _mesh_sn_empty(mesh) else SN_NONEMPTY
    if mesh_sn != regime.sn_class:
        raise RegimeMismatch(
            f"regime declares sn_class={regime.sn_class} but the mesh is {mesh_sn}"
        )


def cell_discretization(mesh: Mesh, regime: RegimeDescriptor) -> StokesDiscretization:
    """Constrained Taylor-Hood spaces for the regime's interface condition.

    Pressure is gauged to zero mean exactly when the top/bottom faces are
    sealed; with open faces the traction condition fixes the constant.
    """
    _check_regime_mesh(regime, mesh)
    if regime.no_slip:
        spec = ConstraintSpec(strong_zero=(TAG_GAMMA_D,), periodic=True)
    else:
        spec = ConstraintSpec(normal_zero=(TAG_GAMMA_D,), periodic=True)
    gauge = "zero_mean" if regime.sn_class == SN_EMPTY else "none"
    return StokesDiscretization(mesh, spec, gauge=gauge)


def _cell_system(disc: StokesDiscretization, regime: RegimeDescriptor, **data_kw) -> SaddleSystem:
    c_slip = regime.alpha if regime.robin else 0.0
    return assemble(disc, StokesProblemData(mu=1.0, c_slip=c_slip, **data_kw))


class TangentUnit:
    """Unit tangential interface field, oriented along a coordinate axis.

    The raw boundary tangent flips direction between opposite walls; the
    sign alignment makes the field drive a net flow instead of cancelling
    by symmetry.
    """

    needs_frame = True

    def __init__(self, scale=1.0, align_axis=0):
        self.scale = scale
        self.align_axis = align_axis

    def __call__(self, pts, n, t):
        sign = 1.0 if t[self.align_axis] >= 0 else -1.0
        return np.broadcast_to(self.scale * sign * t, (len(pts), 2)).copy()


def solve_unit_force_cell(mesh: Mesh, regime: RegimeDescriptor, axis: int) -> StokesField:
    """Cell flow driven by the unit body force along the given axis."""
    disc = cell_discretization(mesh, regime)
    e = np.zeros(2)
    e[axis] = 1.0
    system = _cell_system(disc, regime, f=tuple(e))
    return system.solve()


def solve_boundary_stress_cell(
    mesh: Mesh, regime: RegimeDescriptor, g_gamma_d: Callable
) -> StokesField:
    """Cell flow driven by a tangential interface stress.

    In the no-slip regime the interface data cannot act on the limit flow,
    so the zero solution is returned without a solve.
    """
    disc = cell_discretization(mesh, regime)
    if regime.no_slip:
        return _zero_field(disc)
    system = _cell_system(disc, regime, g=g_gamma_d)
    return system.solve()


def solve_normal_pressure_cell(
    mesh: Mesh, regime: RegimeDescriptor, p_b_n: Callable
) -> StokesField:
    """Cell flow driven by a normal traction on the open top/bottom faces."""
    if regime.sn_class == SN_EMPTY:
        raise RegimeMismatch("normal-traction cell problem needs open top/bottom faces")
    disc = cell_discretization(mesh, regime)
    system = _cell_system(
        disc, regime, p_b=p_b_n, traction_tags=(TAG_SN_PLUS, TAG_SN_MINUS)
    )
    return system.solve()


def _zero_field(disc: StokesDiscretization) -> StokesField:
    return StokesField(
        disc=disc,
        u=np.zeros(2 * disc.n2),
        p=np.zeros(disc.n_vertices),
        residual=0.0,
    )


def solve_auxiliary_laplace(mesh: Mesh, axis: int) -> StokesField:
    """Vector Laplace problem: -Lap h = e_axis, zero normal trace and zero
    tangential flux on the interface, periodic laterally, natural on open
    faces.  Well-posed exactly when the interface normals span the plane.
    """
    if mesh.periodic_pairs is None:
        raise RegimeMismatch("auxiliary problems need a cell mesh")
    disc = StokesDiscretization(
        mesh, ConstraintSpec(normal_zero=(TAG_GAMMA_D,), periodic=True), gauge="none"
    )
    G = (disc.Tu.T @ disc.vector_grad_stiffness() @ disc.Tu).tocsc()
    rhs = disc.Tu.T @ disc.velocity_integrals()[axis]
    try:
        lu = spla.splu(G)
        x = lu.solve(rhs)
    except RuntimeError as exc:
        raise SingularSystem(f"auxiliary Laplace operator singular: {exc}", _laplace_near_null(disc, G))
    res = float(np.linalg.norm(G @ x - rhs) / max(np.linalg.norm(rhs), 1e-300))
    if not np.all(np.isfinite(x)) or res > 1e-8:
        raise SingularSystem(
            f"auxiliary Laplace operator singular (residual {res:.2e})",
            _laplace_near_null(disc, G),
        )
    return StokesField(disc=disc, u=disc.Tu @ x, p=np.zeros(disc.n_vertices), residual=res)


def _laplace_near_null(disc, G):
    scale = abs(G).sum() / max(G.nnz, 1)
    try:
        vals, vecs = spla.eigsh(G, k=1, sigma=-1e-10 * scale, which="LM")
    except Exception:
        return None
    if abs(vals[0]) < 1e-5 * scale:
        u = disc.Tu @ vecs[:, 0]
        return u / np.abs(u).max()
    return None


@dataclass
class CellSolutionSet:
    """All cell solutions of one regime on one mesh.

    ``laplace`` is empty (with ``laplace_error`` set) when the auxiliary
    problems are ill-posed, i.e. when the interface normals fail to span
    the plane.
    """

    mesh: Mesh
    regime: RegimeDescriptor
    w: List[StokesField]
    w_gamma: StokesField
    w_n: Optional[StokesField]
    laplace: List[StokesField]
    laplace_error: Optional[str] = None
    g_load: Optional[np.ndarray] = None
    traction_load: Optional[np.ndarray] = None

    @property
    def disc(self):
        return self.w[0].disc


def solve_cell_suite(
    mesh: Mesh,
    regime: RegimeDescriptor,
    g_gamma_d: Optional[Callable] = None,
    p_b_n: Optional[Callable] = None,
) -> CellSolutionSet:
    """Solve every cell problem of the regime, sharing one factorization.

    The unit-force, boundary-stress and traction problems only differ in
    their right-hand sides, so a single assembled system serves them all.
    """
    disc = cell_discretization(mesh, regime)
    system = _cell_system(disc, regime)
    system.factorize()

    w = []
    for axis in range(2):
        e = np.zeros(2)
        e[axis] = 1.0
        w.append(system.solve(rhs_u=disc.body_load(tuple(e))))

    g_load = None
    if regime.no_slip or g_gamma_d is None:
        w_gamma = _zero_field(disc)
    else:
        from .fem import _tangential

        g_load = disc.boundary_load((TAG_GAMMA_D,), _tangential(g_gamma_d, disc))
        w_gamma = system.solve(rhs_u=g_load)

    w_n = None
    traction_load = None
    if regime.sn_class == SN_NONEMPTY and p_b_n is not None:
        pb = p_b_n if callable(p_b_n) else (lambda pts, v=float(p_b_n): np.full(len(pts), v))
        traction_load = disc.boundary_load((TAG_SN_PLUS, TAG_SN_MINUS), pb, kind="traction")
        w_n = system.solve(rhs_u=traction_load)

    laplace, laplace_error = [], None
    try:
        laplace = [solve_auxiliary_laplace(mesh, axis) for axis in range(1)]
    except SingularSystem as exc:
        laplace_error = str(exc)
    return CellSolutionSet(
        mesh=mesh,
        regime=regime,
        w=w,
        w_gamma=w_gamma,
        w_n=w_n,
        laplace=laplace,
        laplace_error=laplace_error,
        g_load=g_load,
        traction_load=traction_load,
    )


@dataclass
class EffectiveLaw:
    """Effective tensors of one regime.

    ``k_energy`` is the dissipation convention int D(w_i):D(w_j); ``k_avg``
    the velocity-average convention with column j holding int w_j dy.  The
    Darcy assembly consumes ``k_avg`` (it is what the averaged velocity is
    made of); both are reported along with their worst-case gap.
    """

    k_energy: np.ndarray
    k_avg: np.ndarray
    beta: np.ndarray
    kappa: Optional[np.ndarray]
    laplace_gram: Optional[np.ndarray]
    regime: RegimeDescriptor
    identity_gap: float
    h: float

    def in_plane_permeability(self):
        """Leading (n-1) x (n-1) block of the averaging convention."""
        return self.k_avg[:1, :1]

    def to_dict(self):
        return {
            "k_energy": self.k_energy.tolist(),
            "k_avg": self.k_avg.tolist(),
            "beta": self.beta.tolist(),
            "kappa": None if self.kappa is None else self.kappa.tolist(),
            "laplace_gram": None if self.laplace_gram is None else self.laplace_gram.tolist(),
            "regime": self.regime.to_dict(),
            "identity_gap": self.identity_gap,
            "h": self.h,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            k_energy=np.asarray(d["k_energy"]),
            k_avg=np.asarray(d["k_avg"]),
            beta=np.asarray(d["beta"]),
            kappa=None if d["kappa"] is None else np.asarray(d["kappa"]),
            laplace_gram=None if d["laplace_gram"] is None else np.asarray(d["laplace_gram"]),
            regime=RegimeDescriptor.from_dict(d["regime"]),
            identity_gap=d["identity_gap"],
            h=d["h"],
        )


def assemble_effective_law(cells: CellSolutionSet) -> EffectiveLaw:
    """Exact-quadrature averages of the cell solutions."""
    disc = cells.disc
    A_visc = disc.sym_grad_stiffness()
    I = disc.velocity_integrals()
    n = 2

    k_energy = np.empty((n, n))
    k_avg = np.empty((n, n))
    for j, wj in enumerate(cells.w):
        k_avg[:, j] = I @ wj.u
        for i, wi in enumerate(cells.w):
            k_energy[i, j] = 0.5 * float(wi.u @ (A_visc @ wj.u))

    beta = I @ cells.w_gamma.u
    kappa = I @ cells.w_n.u if cells.w_n is not None else None

    gram = None
    if cells.laplace:
        G = disc.vector_grad_stiffness()
        m = len(cells.laplace)
        gram = np.empty((m, m))
        for i, hi in enumerate(cells.laplace):
            for j, hj in enumerate(cells.laplace):
                gram[i, j] = float(hi.u @ (G @ hj.u))

    identity_gap = float(np.abs(k_avg - 2.0 * k_energy).max())
    return EffectiveLaw(
        k_energy=k_energy,
        k_avg=k_avg,
        beta=beta,
        kappa=kappa,
        laplace_gram=gram,
        regime=cells.regime,
        identity_gap=identity_gap,
        h=cells.mesh.h,
    )
