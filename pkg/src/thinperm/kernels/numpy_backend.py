"""Vectorized NumPy fallback for the element-matrix batch kernels.

Each function takes the per-element inverse Jacobians (nt, 2, 2) and
determinants (nt,) of the affine maps and returns the batch of local
matrices.  Velocity dofs are interleaved node-major: (node a, comp alpha)
-> 2a + alpha.
"""
import numpy as np

from ._ref import QUAD_WEIGHTS, REF_GRADS, REF_P1


def _phys_grads(inv_j):
    # G[e,q,a,d] = sum_D REF_GRADS[q,a,D] * inv_j[e,D,d]
    return np.einsum("qaD,eDd->eqad", REF_GRADS, inv_j)


def p2_scalar_stiffness(inv_j, det):
    """int grad(phi_a) . grad(phi_b), shape (nt, 6, 6)."""
    G = _phys_grads(inv_j)
    K = np.einsum("q,eqad,eqbd->eab", QUAD_WEIGHTS, G, G)
    return K * det[:, None, None]


def p2_sym_grad_stiffness(inv_j, det):
    """int [2 D(phi_a e_alpha) : D(phi_b e_beta)], shape (nt, 12, 12)."""
    G = _phys_grads(inv_j)
    gg = np.einsum("q,eqad,eqbd->eab", QUAD_WEIGHTS, G, G)
    cross = np.einsum("q,eqai,eqbj->eaibj", QUAD_WEIGHTS, G, G)
    nt = len(det)
    K5 = cross.transpose(0, 1, 4, 3, 2).copy()
    K5[:, :, 0, :, 0] += gg
    K5[:, :, 1, :, 1] += gg
    return K5.reshape(nt, 12, 12) * det[:, None, None]


def p2_p1_divergence(inv_j, det):
    """int lambda_c d(phi_b)/dx_beta, shape (nt, 3, 12)."""
    G = _phys_grads(inv_j)
    D = np.einsum("q,qc,eqbj->ecbj", QUAD_WEIGHTS, REF_P1, G)
    nt = len(det)
    return D.reshape(nt, 3, 12) * det[:, None, None]
