"""Reference-element data shared by the assembly backends."""
import numpy as np

from ..quadrature import TRI_POINTS, TRI_WEIGHTS


def p2_values(pts):
    """P2 basis values at reference points, shape (npts, 6).

    Node order: vertices (0,0), (1,0), (0,1), then midpoints opposite each
    vertex: m12, m20, m01.
    """
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    return np.column_stack(
        [
            l0 * (2 * l0 - 1),
            l1 * (2 * l1 - 1),
            l2 * (2 * l2 - 1),
            4 * l1 * l2,
            4 * l2 * l0,
            4 * l0 * l1,
        ]
    )


def p2_gradients(pts):
    """Reference gradients of the P2 basis, shape (npts, 6, 2)."""
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - x - y, x, y
    g = np.empty((len(pts), 6, 2))
    g[:, 0, 0] = -(4 * l0 - 1)
    g[:, 0, 1] = -(4 * l0 - 1)
    g[:, 1, 0] = 4 * l1 - 1
    g[:, 1, 1] = 0.0
    g[:, 2, 0] = 0.0
    g[:, 2, 1] = 4 * l2 - 1
    g[:, 3, 0] = 4 * l2
    g[:, 3, 1] = 4 * l1
    g[:, 4, 0] = -4 * l2
    g[:, 4, 1] = 4 * (l0 - l2)
    g[:, 5, 0] = 4 * (l0 - l1)
    g[:, 5, 1] = -4 * l1
    return g


def p1_values(pts):
    x, y = pts[:, 0], pts[:, 1]
    return np.column_stack([1.0 - x - y, x, y])


QUAD_POINTS = TRI_POINTS
QUAD_WEIGHTS = TRI_WEIGHTS
REF_GRADS = np.ascontiguousarray(p2_gradients(TRI_POINTS))
REF_P1 = np.ascontiguousarray(p1_values(TRI_POINTS))
REF_P2 = np.ascontiguousarray(p2_values(TRI_POINTS))
