"""Quadrature rules on the reference triangle and reference edge.

The degree-4 triangle rule is exact for every P2/P1 bilinear form (mass is
degree 4); the 3-point Gauss edge rule is exact to degree 5.  A conical
product rule (machine-precision weights) is kept for smooth analytic data.
"""
import numpy as np

# Dunavant degree 4, 6 points.  Weights sum to the reference area 1/2.
_A1, _B1 = 0.816847572980459, 0.091576213509771
_A2, _B2 = 0.108103018168070, 0.445948490915965
_W1, _W2 = 0.109951743655322, 0.223381589678011

TRI_POINTS = np.array(
    [
        [_B1, _B1], [_A1, _B1], [_B1, _A1],
        [_B2, _B2], [_A2, _B2], [_B2, _A2],
    ]
)
TRI_WEIGHTS = 0.5 * np.array([_W1, _W1, _W1, _W2, _W2, _W2])


def tri_conical_rule(m):
    """Conical product rule on the reference triangle, exact for total
    degree >= 2m - 2.  Built from 1D Gauss nodes via the Duffy map
    (x, y) = (s (1 - t), t), so the weights are machine precision."""
    s, ws = np.polynomial.legendre.leggauss(m)
    s = (s + 1.0) / 2.0
    ws = ws / 2.0
    S, T = np.meshgrid(s, s, indexing="ij")
    WS, WT = np.meshgrid(ws, ws, indexing="ij")
    pts = np.column_stack([(S * (1.0 - T)).ravel(), T.ravel()])
    wts = (WS * WT * (1.0 - T)).ravel()
    return pts, wts


TRI_POINTS_HI, TRI_WEIGHTS_HI = tri_conical_rule(6)

# 3-point Gauss-Legendre on [0, 1].
_G = np.sqrt(0.6)
EDGE_POINTS = np.array([(1 - _G) / 2, 0.5, (1 + _G) / 2])
EDGE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0


def gauss_legendre(n):
    """Points and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0
