"""Element-matrix oracle tests.

The expected matrices below were computed by symbolic integration of the
P2/P1 basis products over the reference triangle (0,0), (1,0), (0,1)
(exact rational arithmetic, frozen here as fractions).  Both assembly
backends must reproduce them through the quadrature rule, which is exact
for these polynomial degrees.
"""
from fractions import Fraction

import numpy as np
import pytest

from thinperm.kernels import backends

SYM_GRAD_REF = [
    [Fraction(3, 2), Fraction(1, 2), Fraction(1, 3), Fraction(1, 6), Fraction(1, 6), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(-2, 3), Fraction(0, 1), Fraction(-4, 3), Fraction(-2, 3)],
    [Fraction(1, 2), Fraction(3, 2), Fraction(0, 1), Fraction(1, 6), Fraction(1, 6), Fraction(1, 3), Fraction(0, 1), Fraction(0, 1), Fraction(-2, 3), Fraction(-4, 3), Fraction(0, 1), Fraction(-2, 3)],
    [Fraction(1, 3), Fraction(0, 1), Fraction(1, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(-4, 3), Fraction(0, 1)],
    [Fraction(1, 6), Fraction(1, 6), Fraction(0, 1), Fraction(1, 2), Fraction(-1, 6), Fraction(0, 1), Fraction(2, 3), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(-2, 3), Fraction(-2, 3)],
    [Fraction(1, 6), Fraction(1, 6), Fraction(0, 1), Fraction(-1, 6), Fraction(1, 2), Fraction(0, 1), Fraction(0, 1), Fraction(2, 3), Fraction(-2, 3), Fraction(-2, 3), Fraction(0, 1), Fraction(0, 1)],
    [Fraction(0, 1), Fraction(1, 3), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(1, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(-4, 3), Fraction(0, 1), Fraction(0, 1)],
    [Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(2, 3), Fraction(0, 1), Fraction(0, 1), Fraction(4, 1), Fraction(2, 3), Fraction(-8, 3), Fraction(-2, 3), Fraction(-4, 3), Fraction(-2, 3)],
    [Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(2, 3), Fraction(0, 1), Fraction(2, 3), Fraction(4, 1), Fraction(-2, 3), Fraction(-4, 3), Fraction(-2, 3), Fraction(-8, 3)],
    [Fraction(-2, 3), Fraction(-2, 3), Fraction(0, 1), Fraction(0, 1), Fraction(-2, 3), Fraction(0, 1), Fraction(-8, 3), Fraction(-2, 3), Fraction(4, 1), Fraction(2, 3), Fraction(0, 1), Fraction(2, 3)],
    [Fraction(0, 1), Fraction(-4, 3), Fraction(0, 1), Fraction(0, 1), Fraction(-2, 3), Fraction(-4, 3), Fraction(-2, 3), Fraction(-4, 3), Fraction(2, 3), Fraction(4, 1), Fraction(2, 3), Fraction(0, 1)],
    [Fraction(-4, 3), Fraction(0, 1), Fraction(-4, 3), Fraction(-2, 3), Fraction(0, 1), Fraction(0, 1), Fraction(-4, 3), Fraction(-2, 3), Fraction(0, 1), Fraction(2, 3), Fraction(4, 1), Fraction(2, 3)],
    [Fraction(-2, 3), Fraction(-2, 3), Fraction(0, 1), Fraction(-2, 3), Fraction(0, 1), Fraction(0, 1), Fraction(-2, 3), Fraction(-8, 3), Fraction(2, 3), Fraction(0, 1), Fraction(2, 3), Fraction(4, 1)]
]

DIV_REF = [
    [Fraction(-1, 6), Fraction(-1, 6), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(1, 6), Fraction(1, 6), Fraction(-1, 6), Fraction(1, 6), Fraction(1, 6), Fraction(-1, 6)],
    [Fraction(0, 1), Fraction(0, 1), Fraction(1, 6), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(1, 6), Fraction(1, 3), Fraction(-1, 6), Fraction(0, 1), Fraction(-1, 6), Fraction(-1, 3)],
    [Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(1, 6), Fraction(1, 3), Fraction(1, 6), Fraction(-1, 3), Fraction(-1, 6), Fraction(0, 1), Fraction(-1, 6)]
]

MASS_REF = [
    [Fraction(1, 60), Fraction(-1, 360), Fraction(-1, 360), Fraction(-1, 90), Fraction(0, 1), Fraction(0, 1)],
    [Fraction(-1, 360), Fraction(1, 60), Fraction(-1, 360), Fraction(0, 1), Fraction(-1, 90), Fraction(0, 1)],
    [Fraction(-1, 360), Fraction(-1, 360), Fraction(1, 60), Fraction(0, 1), Fraction(0, 1), Fraction(-1, 90)],
    [Fraction(-1, 90), Fraction(0, 1), Fraction(0, 1), Fraction(4, 45), Fraction(2, 45), Fraction(2, 45)],
    [Fraction(0, 1), Fraction(-1, 90), Fraction(0, 1), Fraction(2, 45), Fraction(4, 45), Fraction(2, 45)],
    [Fraction(0, 1), Fraction(0, 1), Fraction(-1, 90), Fraction(2, 45), Fraction(2, 45), Fraction(4, 45)]
]

STIFF_REF = [
    [Fraction(1, 1), Fraction(1, 6), Fraction(1, 6), Fraction(0, 1), Fraction(-2, 3), Fraction(-2, 3)],
    [Fraction(1, 6), Fraction(1, 2), Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(-2, 3)],
    [Fraction(1, 6), Fraction(0, 1), Fraction(1, 2), Fraction(0, 1), Fraction(-2, 3), Fraction(0, 1)],
    [Fraction(0, 1), Fraction(0, 1), Fraction(0, 1), Fraction(8, 3), Fraction(-4, 3), Fraction(-4, 3)],
    [Fraction(-2, 3), Fraction(0, 1), Fraction(-2, 3), Fraction(-4, 3), Fraction(8, 3), Fraction(0, 1)],
    [Fraction(-2, 3), Fraction(-2, 3), Fraction(0, 1), Fraction(-4, 3), Fraction(0, 1), Fraction(8, 3)]
]



def _as_array(frac_rows):
    return np.array([[float(v) for v in row] for row in frac_rows])


IDENTITY_INV_J = np.ascontiguousarray(np.eye(2)[None, :, :])
UNIT_DET = np.ones(1)


@pytest.fixture(params=sorted(backends()))
def backend(request):
    return backends()[request.param]


def test_sym_grad_stiffness_matches_symbolic_oracle(backend):
    got = backend.p2_sym_grad_stiffness(IDENTITY_INV_J, UNIT_DET)[0]
    assert np.abs(got - _as_array(SYM_GRAD_REF)).max() < 1e-12


def test_scalar_stiffness_matches_symbolic_oracle(backend):
    got = backend.p2_scalar_stiffness(IDENTITY_INV_J, UNIT_DET)[0]
    assert np.abs(got - _as_array(STIFF_REF)).max() < 1e-12


def test_divergence_matches_symbolic_oracle(backend):
    got = backend.p2_p1_divergence(IDENTITY_INV_J, UNIT_DET)[0]
    assert np.abs(got - _as_array(DIV_REF)).max() < 1e-12


def test_quadrature_mass_matches_symbolic_oracle():
    from thinperm.kernels import _ref

    got = np.einsum("q,qa,qb->ab", _ref.QUAD_WEIGHTS, _ref.REF_P2, _ref.REF_P2)
    assert np.abs(got - _as_array(MASS_REF)).max() < 1e-14


def test_backends_agree_on_random_geometry():
    rng = np.random.default_rng(7)
    impls = backends()
    if len(impls) < 2:
        pytest.skip("compiled backend not built")
    verts = rng.normal(size=(40, 3, 2))
    J = np.stack([verts[:, 1] - verts[:, 0], verts[:, 2] - verts[:, 0]], axis=2)
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    keep = np.abs(det) > 0.1
    J, det = J[keep], det[keep]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1]
    inv[:, 0, 1] = -J[:, 0, 1]
    inv[:, 1, 0] = -J[:, 1, 0]
    inv[:, 1, 1] = J[:, 0, 0]
    inv = np.ascontiguousarray(inv / det[:, None, None])
    det = np.ascontiguousarray(det)
    for name in ("p2_sym_grad_stiffness", "p2_scalar_stiffness", "p2_p1_divergence"):
        ref = None
        for mod in impls.values():
            out = getattr(mod, name)(inv, det)
            if ref is None:
                ref = out
            else:
                assert np.abs(out - ref).max() < 1e-12
