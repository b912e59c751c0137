"""Full microscopic solves on the thin layer and homogenization checks.

The layer mesh is a union of eps-scaled cell-mesh copies, so unfolding a
layer field onto the reference cell is exact nodal reindexing: no
interpolation enters the two-scale error.  The sweep runner solves the
micro problem for a decreasing list of eps, extends the pressure to the
solid cells, and reports the a priori scaling ratios together with the
two-scale errors against a macroscopic reconstruction.
"""
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import numpy as np

from .cells import RegimeDescriptor, solve_cell_suite
from .darcy import (
    MacroData,
    TwoScaleReconstruction,
    as_scalar_fn,
    reconstruct_two_scale,
    sigma_mesh,
    solve_darcy,
)
from .errors import RegimeMismatch
from .fem import ConstraintSpec, StokesDiscretization, StokesField, StokesProblemData, assemble
from .geometry import CellGeometry, LayerGeometry
from .meshing import TAG_GAMMA_D, TAG_GAMMA_N, Mesh, build_layer_mesh
from .quadrature import TRI_POINTS_HI, TRI_WEIGHTS_HI


@dataclass
class MicroData:
    """Data of one microscopic solve, in physical layer coordinates.

    ``from_macro`` applies the standard recipe: the body force and the
    boundary pressure are taken from the macroscopic data (constant across
    the thickness) and the interface stress oscillates with the cell,
    g(x) = eps * g_Sigma(xbar) * g_GammaD(x / eps), whose surface norm then
    scales like eps as the estimates require.
    """

    eps: float
    mu: float = 1.0
    alpha: float = 0.0
    gamma: float = 0.0
    f: Optional[Callable] = None
    g: Optional[Callable] = None
    p_b: Optional[Callable] = None

    @property
    def c_slip(self):
        return self.alpha * self.eps**self.gamma if self.alpha > 0 else 0.0

    @classmethod
    def from_macro(cls, eps, macro: MacroData, alpha=0.0, gamma=0.0, g_gamma_d=None):
        f0 = macro.f0
        p_b = macro.p_b
        g_sigma = macro.g_sigma

        def f(pts):
            return f0(np.atleast_2d(pts)[:, 0])

        def pb(pts):
            return p_b(np.atleast_2d(pts)[:, 0])

        g = None
        if g_gamma_d is not None:

            def g(pts, n, t):
                pts = np.atleast_2d(pts)
                amp = eps * g_sigma(pts[:, 0])
                y = pts / eps
                y[:, 0] -= np.floor(y[:, 0] + 1e-12)
                if getattr(g_gamma_d, "needs_frame", False):
                    vals = np.asarray(g_gamma_d(y, n, t), dtype=float)
                else:
                    vals = np.asarray(g_gamma_d(y), dtype=float)
                return amp[:, None] * vals.reshape(len(pts), 2)

            g.needs_frame = True

        return cls(eps=eps, mu=macro.mu, alpha=alpha, gamma=gamma, f=f, g=g, p_b=pb)


def micro_discretization(mesh: Mesh) -> StokesDiscretization:
    """Layer spaces: zero normal trace on the perforation boundary, free
    (traction) everywhere else, pressure ungauged."""
    return StokesDiscretization(
        mesh, ConstraintSpec(normal_zero=(TAG_GAMMA_D,), periodic=False), gauge="none"
    )


def solve_micro(layer: LayerGeometry, data: MicroData, h, mesh: Optional[Mesh] = None) -> StokesField:
    """Direct solve of the microscopic problem on the layer."""
    if abs(data.eps - layer.eps) > 1e-12:
        raise RegimeMismatch("data and layer disagree on eps")
    if mesh is None:
        mesh = build_layer_mesh(layer, h)
    disc = micro_discretization(mesh)
    problem = StokesProblemData(
        mu=data.mu,
        f=data.f,
        g=data.g,
        c_slip=data.c_slip,
        p_b=data.p_b if data.p_b is not None else 0.0,
        traction_tags=(TAG_GAMMA_N,),
    )
    return assemble(disc, problem).solve()


@dataclass
class PressureExtension:
    """Pressure deviation extended into the solid cells by fluid averages."""

    eps: float
    cell_averages: np.ndarray
    norm_total: float
    norm_fluid: float
    norm_solid: float


def extend_pressure(fld: StokesField, layer: LayerGeometry, p_b=None) -> PressureExtension:
    """L2 extension of p - p_b to the whole layer slab.

    In each solid cell the value is the fluid average of the deviation over
    the surrounding scaled cell, exactly the constant that makes the
    extension orthogonal to local divergence data.
    """
    mesh = fld.disc.mesh
    if mesh.provenance is None or mesh.cell_mesh is None:
        raise RegimeMismatch("pressure extension needs a layer mesh with provenance")
    eps = layer.eps
    pb = as_scalar_fn(p_b if p_b is not None else 0.0)

    tri = mesh.triangles
    verts = mesh.vertices
    p = fld.p
    qp, qw = TRI_POINTS_HI, TRI_WEIGHTS_HI
    lam = np.column_stack([1 - qp[:, 0] - qp[:, 1], qp[:, 0], qp[:, 1]])
    origin = verts[tri[:, 0]]
    J = np.stack([verts[tri[:, 1]] - origin, verts[tri[:, 2]] - origin], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    phys = origin[:, None, :] + np.einsum("eij,qj->eqi", J, qp)
    pvals = np.einsum("qc,ec->eq", lam, p[tri])
    dev = pvals - pb(phys.reshape(-1, 2)[:, 0]).reshape(pvals.shape)

    ncopy = len(mesh.vertex_ids)
    cell_int = np.zeros(ncopy)
    cell_sq = np.zeros(ncopy)
    int_e = det * (dev @ qw)
    sq_e = det * ((dev**2) @ qw)
    np.add.at(cell_int, mesh.provenance, int_e)
    np.add.at(cell_sq, mesh.provenance, sq_e)

    fluid_cell_area = mesh.cell_mesh.area() * eps**2
    solid_cell_area = max(2.0 * eps**2 - fluid_cell_area, 0.0)
    averages = cell_int / fluid_cell_area
    norm_fluid_sq = float(cell_sq.sum())
    norm_solid_sq = float(np.sum(averages**2) * solid_cell_area)
    return PressureExtension(
        eps=eps,
        cell_averages=averages,
        norm_total=float(np.sqrt(norm_fluid_sq + norm_solid_sq)),
        norm_fluid=float(np.sqrt(norm_fluid_sq)),
        norm_solid=float(np.sqrt(norm_solid_sq)),
    )


def layer_cell_node_map(disc: StokesDiscretization):
    """(ncopy, n2_cell) array: layer P2 node of each cell P2 node per copy."""
    mesh = disc.mesh
    cell = mesh.cell_mesh
    ids = mesh.vertex_ids
    cell_edges, _ = cell.edge_arrays()
    ncopy = len(ids)
    n2c = cell.n_vertices + len(cell_edges)
    out = np.empty((ncopy, n2c), dtype=int)
    out[:, : cell.n_vertices] = ids
    for k in range(ncopy):
        ga = ids[k][cell_edges[:, 0]]
        gb = ids[k][cell_edges[:, 1]]
        for j, (a, b) in enumerate(zip(ga, gb)):
            out[k, cell.n_vertices + j] = disc.n_vertices + disc.mesh.edge_index(int(a), int(b))
    return out


def two_scale_error(
    fld: StokesField, recon: TwoScaleReconstruction, layer: LayerGeometry
) -> Dict[str, float]:
    """Unfolded two-scale errors of the scaled velocity and the pressure.

    e_velocity^2 = eps^{-1} int |eps^{-2} u - u0(anchor, x/eps)|^2, computed
    exactly on the shared cell nodes (cell anchors at the copy centers).
    """
    disc = fld.disc
    mesh = disc.mesh
    if mesh.cell_mesh is None:
        raise RegimeMismatch("two-scale error needs a layer mesh")
    cell_disc = recon.cells.disc
    if cell_disc.mesh is not mesh.cell_mesh and not (
        cell_disc.mesh.n_vertices == mesh.cell_mesh.n_vertices
        and np.allclose(cell_disc.mesh.vertices, mesh.cell_mesh.vertices)
    ):
        raise RegimeMismatch("reconstruction and layer use different cell meshes")
    eps = layer.eps
    node_map = layer_cell_node_map(disc)
    Mv = cell_disc.vector_mass()
    Mp = cell_disc.pressure_mass()

    u = fld.velocity_nodal()
    err_u = 0.0
    err_p = 0.0
    ncopy = len(node_map)
    for k in range(ncopy):
        anchor = eps * (k + 0.5)
        d = u[node_map[k]] / eps**2 - recon.u0_nodal(anchor)
        dflat = np.empty(2 * cell_disc.n2)
        dflat[0::2] = d[:, 0]
        dflat[1::2] = d[:, 1]
        err_u += float(dflat @ (Mv @ dflat))
        dp = fld.p[mesh.vertex_ids[k]] - recon.sol.p0_at(anchor)
        err_p += float(dp @ (Mp @ dp))
    return {
        "e_velocity": float(np.sqrt(eps * err_u)),
        "e_pressure": float(np.sqrt(eps * err_p)),
    }


def micro_norms(fld: StokesField, data: MicroData) -> Dict[str, float]:
    """Norms entering the a priori estimates, plus their scaling ratios."""
    disc = fld.disc
    eps = data.eps
    u = fld.u
    u_l2 = float(np.sqrt(u @ (disc.vector_mass() @ u)))
    grad_l2 = float(np.sqrt(u @ (disc.vector_grad_stiffness() @ u)))
    trace_sq = disc.boundary_l2_sq(u, (TAG_GAMMA_D,))
    trace = float(np.sqrt(trace_sq))
    p = fld.p
    p_l2 = float(np.sqrt(p @ (disc.pressure_mass() @ p)))
    return {
        "u_l2": u_l2,
        "grad_u_l2": grad_l2,
        "u_gamma_d_l2": trace,
        "p_l2": p_l2,
        "ratio_u": u_l2 / eps**2.5,
        "ratio_grad": grad_l2 / eps**1.5,
        "ratio_trace": trace / eps**2,
    }


@dataclass
class SweepReport:
    """Per-eps norms, scaling ratios, and two-scale errors."""

    rows: List[Dict[str, float]] = field(default_factory=list)

    def validate(self):
        eps = [r["eps"] for r in self.rows]
        if any(not np.isfinite(list(r.values())).all() for r in self.rows):
            raise ValueError("sweep report contains non-finite entries")
        if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
            raise ValueError("eps values must be strictly decreasing")
        for e in eps:
            if abs(1.0 / e - round(1.0 / e)) > 1e-9:
                raise ValueError(f"1/eps must be an integer, got {e}")

    def column(self, key):
        return np.array([r[key] for r in self.rows])

    def header(self):
        return list(self.rows[0].keys()) if self.rows else []

    def table(self):
        hdr = self.header()
        return [[r[k] for k in hdr] for r in self.rows]

    def to_dict(self):
        return {"rows": self.rows}


def run_sweep(
    cell_geom: CellGeometry,
    macro: MacroData,
    eps_list,
    h_cell=1 / 32,
    alpha=0.0,
    gamma=None,
    g_gamma_d=None,
    p_b_n=None,
    sigma_length=1,
    sigma_elements=64,
    cell_mesh=None,
    jobs=1,
) -> "SweepResult":
    """Cell solves + Darcy + micro solves over a decreasing eps list.

    Sweep members are independent; with jobs > 1 they run on a thread
    pool and the report is assembled in eps order afterwards.
    """
    from .meshing import build_cell_mesh

    if cell_mesh is None:
        cell_mesh = build_cell_mesh(cell_geom, h_cell)
    regime = RegimeDescriptor.from_parameters(alpha, gamma, sn_empty=cell_geom.sn_empty)
    cells = solve_cell_suite(cell_mesh, regime, g_gamma_d=g_gamma_d, p_b_n=p_b_n)
    from .cells import assemble_effective_law

    law = assemble_effective_law(cells)
    sol = solve_darcy(law, macro, sigma_mesh(sigma_length, sigma_elements))
    recon = reconstruct_two_scale(sol, cells)

    def member(eps):
        t0 = time.monotonic()
        layer = LayerGeometry(cell=cell_geom, eps=eps, sigma_lengths=(sigma_length,))
        mesh = build_layer_mesh(layer, eps * h_cell, cell_mesh=cell_mesh)
        data = MicroData.from_macro(eps, macro, alpha=alpha, gamma=gamma or 0.0, g_gamma_d=g_gamma_d)
        fld = solve_micro(layer, data, eps * h_cell, mesh=mesh)
        row = {"eps": eps}
        row.update(micro_norms(fld, data))
        ext = extend_pressure(fld, layer, p_b=macro.p_b)
        row["p_ext"] = ext.norm_total
        row["ratio_p_ext"] = float(ext.norm_total / np.sqrt(eps))
        row.update(two_scale_error(fld, recon, layer))
        row["wall_time"] = time.monotonic() - t0
        return row

    report = SweepReport()
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            report.rows = list(pool.map(member, eps_list))
    else:
        report.rows = [member(eps) for eps in eps_list]
    report.validate()
    return SweepResult(report=report, law=law, cells=cells, darcy=sol, recon=recon)


@dataclass
class SweepResult:
    report: SweepReport
    law: object
    cells: object
    darcy: object
    recon: TwoScaleReconstruction
