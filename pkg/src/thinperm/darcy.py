"""Macroscopic Darcy problem on Sigma and the two-scale reconstruction.

With n = 2 the macroscopic domain is the interval (0, L1); the pressure is
solved with continuous piecewise-linear elements and strong Dirichlet
values at the endpoints.  The averaged velocity is evaluated elementwise
from the averaging-convention permeability, the shear coupling vector and
(open-face regimes) the traction coupling vector:

    u_bar = (1/mu) [ K (f0 - grad p0) + beta g_Sigma + kappa p_bS1 ].
"""
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from .cells import CellSolutionSet, EffectiveLaw
from .errors import DegenerateTensor, RegimeMismatch
from .fem import eval_p2
from .quadrature import gauss_legendre

_GAUSS_X, _GAUSS_W = gauss_legendre(4)


def as_scalar_fn(v):
    if v is None:
        return lambda x: np.zeros_like(np.asarray(x, dtype=float))
    if callable(v):
        return v
    val = float(v)
    return lambda x: np.full_like(np.asarray(x, dtype=float), val)


def as_vector_fn(v):
    if v is None:
        return lambda x: np.zeros((len(np.atleast_1d(x)), 2))
    if callable(v):
        return v
    vec = np.asarray(v, dtype=float)
    return lambda x: np.broadcast_to(vec, (len(np.atleast_1d(x)), 2)).copy()


@dataclass
class MacroData:
    """Macroscopic data: force, boundary shear amplitude, traction
    amplitude of the first-order external pressure, Dirichlet datum."""

    mu: float = 1.0
    f0: Optional[Callable] = None
    g_sigma: Optional[Callable] = None
    p_b_sigma1: Optional[Callable] = None
    p_b: Optional[Callable] = None

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("viscosity must be positive")
        self.f0 = as_vector_fn(self.f0)
        self.g_sigma = as_scalar_fn(self.g_sigma)
        self.p_b_sigma1 = as_scalar_fn(self.p_b_sigma1)
        self.p_b = as_scalar_fn(self.p_b if self.p_b is not None else 0.0)


def sigma_mesh(length=1.0, n_elements=64):
    return np.linspace(0.0, float(length), n_elements + 1)


@dataclass
class DarcySolution:
    """Nodal macroscopic pressure and elementwise averaged velocity."""

    nodes: np.ndarray
    p0: np.ndarray
    u_bar: np.ndarray
    law: EffectiveLaw
    data: MacroData
    residual: float

    def p0_at(self, x):
        return np.interp(np.asarray(x, dtype=float), self.nodes, self.p0)

    def grad_p0_at(self, x):
        """Piecewise-constant in-plane pressure gradient."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        el = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        dp = np.diff(self.p0) / np.diff(self.nodes)
        return dp[el]

    def u_bar_at(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        el = np.clip(np.searchsorted(self.nodes, x, side="right") - 1, 0, len(self.nodes) - 2)
        return self.u_bar[el]

    def rows(self):
        """CSV rows (x, p0, u_bar components at the left element)."""
        out = []
        for i, x in enumerate(self.nodes):
            el = min(i, len(self.u_bar) - 1)
            out.append([float(x), float(self.p0[i]), float(self.u_bar[el, 0]), float(self.u_bar[el, 1])])
        return out

    def summary(self):
        return {
            "flux_in_plane": {
                "min": float(self.u_bar[:, 0].min()),
                "max": float(self.u_bar[:, 0].max()),
                "mean": float(self.u_bar[:, 0].mean()),
            },
            "flux_vertical_max_abs": float(np.abs(self.u_bar[:, 1]).max()),
            "p0_range": [float(self.p0.min()), float(self.p0.max())],
            "residual": self.residual,
        }


def solve_darcy(law: EffectiveLaw, data: MacroData, nodes) -> DarcySolution:
    """Galerkin P1 solve of the in-plane Darcy equation on the interval.

    The equation divides through by mu, so only the averaged velocity
    carries the viscosity.
    """
    nodes = np.asarray(nodes, dtype=float)
    k_block = law.k_avg[0, 0]
    k_scale = max(np.abs(law.k_avg).max(), 1e-300)
    if k_block <= 1e-10 * k_scale:
        raise DegenerateTensor(
            f"in-plane permeability block is not positive definite (K11={k_block:.3e})"
        )

    m = len(nodes) - 1
    beta1 = float(law.beta[0])
    kappa1 = float(law.kappa[0]) if law.kappa is not None else 0.0

    diag = np.zeros(len(nodes))
    off = np.zeros(m)
    rhs = np.zeros(len(nodes))
    for e in range(m):
        x0, x1 = nodes[e], nodes[e + 1]
        h = x1 - x0
        diag[e] += k_block / h
        diag[e + 1] += k_block / h
        off[e] -= k_block / h
        xq = x0 + _GAUSS_X * h
        wq = _GAUSS_W * h
        s = (
            k_block * data.f0(xq)[:, 0]
            + beta1 * data.g_sigma(xq)
            + kappa1 * data.p_b_sigma1(xq)
        )
        # test derivative is -1/h on the left hat, +1/h on the right hat
        rhs[e] += float(np.sum(wq * s)) * (-1.0 / h)
        rhs[e + 1] += float(np.sum(wq * s)) * (1.0 / h)

    A = np.zeros((len(nodes), len(nodes)))
    A[np.arange(len(nodes)), np.arange(len(nodes))] = diag
    A[np.arange(m), np.arange(1, m + 1)] = off
    A[np.arange(1, m + 1), np.arange(m)] = off

    pb0 = float(data.p_b(np.array([nodes[0]]))[0])
    pb1 = float(data.p_b(np.array([nodes[-1]]))[0])
    rhs -= A[:, 0] * pb0 + A[:, -1] * pb1
    interior = slice(1, len(nodes) - 1)
    p0 = np.empty(len(nodes))
    p0[0], p0[-1] = pb0, pb1
    if len(nodes) > 2:
        p0[interior] = np.linalg.solve(A[interior, interior], rhs[interior])
    res = float(np.linalg.norm(A[interior, interior] @ p0[interior] - rhs[interior]))
    res /= max(np.linalg.norm(rhs[interior]), 1e-300)

    mid = 0.5 * (nodes[:-1] + nodes[1:])
    dp = np.diff(p0) / np.diff(nodes)
    grad = np.column_stack([dp, np.zeros(m)])
    u_bar = (
        law.k_avg @ (data.f0(mid) - grad).T
    ).T + np.outer(data.g_sigma(mid), law.beta)
    if law.kappa is not None:
        u_bar = u_bar + np.outer(data.p_b_sigma1(mid), law.kappa)
    u_bar /= data.mu

    return DarcySolution(nodes=nodes, p0=p0, u_bar=u_bar, law=law, data=data, residual=res)


@dataclass
class TwoScaleReconstruction:
    """Evaluator of the limit velocity and first-order pressure.

    u0(x, y) = (1/mu) sum_i d_i(x) w_i(y) + (1/mu) g(x) w_G(y)
               (+ (1/mu) q(x) w_N(y)),
    p1(x, y) =       sum_i d_i(x) pi_i(y) +       g(x) pi_G(y) (+ q pi_N),
    with d_i = f0_i - grad_i p0.  Linear in all data by construction.
    """

    sol: DarcySolution
    cells: CellSolutionSet

    def __post_init__(self):
        if self.cells.regime != self.sol.law.regime:
            raise RegimeMismatch("reconstruction mixes different regimes")

    def coefficients(self, x):
        """d coefficients at one macro point: (d_1, d_2, g, q)."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        f = self.sol.data.f0(x)
        d = f - np.column_stack([self.sol.grad_p0_at(x), np.zeros(len(x))])
        g = self.sol.data.g_sigma(x)
        q = self.sol.data.p_b_sigma1(x)
        return d, g, q

    def _fields(self):
        flds = list(self.cells.w) + [self.cells.w_gamma]
        if self.cells.w_n is not None:
            flds.append(self.cells.w_n)
        return flds

    def _weights(self, x):
        d, g, q = self.coefficients(x)
        w = [d[:, 0], d[:, 1], g]
        if self.cells.w_n is not None:
            w.append(q)
        return np.column_stack(w)

    def u0_nodal(self, x):
        """Limit velocity at all cell P2 nodes for one macro point, (n2, 2)."""
        wts = self._weights(x)[0] / self.sol.data.mu
        out = np.zeros((self.cells.disc.n2, 2))
        for c, fld in zip(wts, self._fields()):
            out += c * fld.velocity_nodal()
        return out

    def p1_nodal(self, x):
        wts = self._weights(x)[0]
        out = np.zeros(self.cells.disc.n_vertices)
        for c, fld in zip(wts, self._fields()):
            out += c * fld.p
        return out

    def u_bar_check(self, x):
        """Average of u0(x, .), for consistency against the Darcy velocity."""
        I = self.cells.disc.velocity_integrals()
        wts = self._weights(x)[0] / self.sol.data.mu
        return sum(c * (I @ f.u) for c, f in zip(wts, self._fields()))

    def __call__(self, x, y):
        """(u0, p1) at a macro point x and cell point(s) y."""
        disc = self.cells.disc
        u = eval_p2(disc, self.u0_nodal(x), y)
        p = eval_p2(disc, self.p1_nodal(x), y)
        return u, p


def reconstruct_two_scale(sol: DarcySolution, cells: CellSolutionSet) -> TwoScaleReconstruction:
    return TwoScaleReconstruction(sol=sol, cells=cells)


def verify_two_pressure_residual(
    sol: DarcySolution,
    cells: CellSolutionSet,
    test_fields: List[Tuple[Callable, np.ndarray]],
):
    """Residual of the two-pressure weak form on separable test fields.

    Each test field is (macro weight m(x), cell velocity coefficients phi)
    with phi satisfying the constraint set of the cell discretization.
    Returns one term-by-term report per field.
    """
    disc = cells.disc
    regime = cells.regime
    if regime != sol.law.regime:
        raise RegimeMismatch("test setup mixes different regimes")

    K_sym = disc.sym_grad_stiffness()
    B = disc.divergence_matrix()
    I = disc.velocity_integrals()
    M_slip = disc.boundary_vector_mass(("GammaD",)) if regime.robin else None

    fields = cells.w + [cells.w_gamma] + ([cells.w_n] if cells.w_n is not None else [])
    nodes = sol.nodes
    mid_w = []
    for e in range(len(nodes) - 1):
        x0, x1 = nodes[e], nodes[e + 1]
        mid_w.append((x0 + _GAUSS_X * (x1 - x0), _GAUSS_W * (x1 - x0)))

    def macro_integral(fn):
        return sum(float(np.sum(w * fn(x))) for x, w in mid_w)

    data = sol.data
    reports = []
    for m_fn, phi in test_fields:
        d_weights = [
            lambda x: data.f0(x)[:, 0] - sol.grad_p0_at(x),
            lambda x: data.f0(x)[:, 1],
            data.g_sigma,
        ]
        if cells.w_n is not None:
            d_weights.append(data.p_b_sigma1)

        visc = sum(
            macro_integral(lambda x, dk=dk: dk(x) * m_fn(x)) * float(f.u @ (K_sym @ phi))
            for dk, f in zip(d_weights, fields)
        )
        robin = 0.0
        if M_slip is not None:
            robin = regime.alpha / data.mu * sum(
                macro_integral(lambda x, dk=dk: dk(x) * m_fn(x)) * float(f.u @ (M_slip @ phi))
                for dk, f in zip(d_weights, fields)
            )
        p0_term = macro_integral(lambda x: sol.grad_p0_at(x) * m_fn(x)) * float(I[0] @ phi)
        p1_term = -sum(
            macro_integral(lambda x, dk=dk: dk(x) * m_fn(x)) * float(f.p @ (B @ phi))
            for dk, f in zip(d_weights, fields)
        )
        force = -sum(
            macro_integral(lambda x, al=al: data.f0(x)[:, al] * m_fn(x)) * float(I[al] @ phi)
            for al in range(2)
        )
        boundary = 0.0
        if not regime.no_slip:
            g_vec = _gamma_load(cells)
            if g_vec is not None:
                boundary = -macro_integral(lambda x: data.g_sigma(x) * m_fn(x)) * float(g_vec @ phi)
        traction = 0.0
        if cells.w_n is not None:
            t_vec = _traction_load(cells)
            if t_vec is not None:
                traction = -macro_integral(lambda x: data.p_b_sigma1(x) * m_fn(x)) * float(
                    t_vec @ phi
                )

        total = visc + robin + p0_term + p1_term + force + boundary + traction
        scale = max(abs(visc), abs(p0_term), abs(p1_term), abs(force), abs(boundary), 1e-300)
        reports.append(
            {
                "viscous": visc,
                "robin": robin,
                "p0_term": p0_term,
                "p1_term": p1_term,
                "force": force,
                "boundary": boundary,
                "traction": traction,
                "total": total,
                "relative": abs(total) / scale,
            }
        )
    return reports


def _gamma_load(cells: CellSolutionSet):
    return cells.g_load


def _traction_load(cells: CellSolutionSet):
    return cells.traction_load
