"""Exact bivariate polynomial arithmetic for analytic test fields.

Restriction-operator checks need divergences, face fluxes and gradient
norms of polynomial fields without quadrature error; coefficients are kept
explicitly so every operation is exact up to floating point rounding.
"""
from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npp


@dataclass(frozen=True)
class Poly2:
    """p(x, y) = sum c[i, j] x^i y^j."""

    c: np.ndarray

    @classmethod
    def from_coeffs(cls, c):
        return cls(np.atleast_2d(np.asarray(c, dtype=float)))

    @classmethod
    def constant(cls, v):
        return cls.from_coeffs([[float(v)]])

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        return npp.polyval2d(pts[:, 0], pts[:, 1], self.c)

    def dx(self):
        if self.c.shape[0] == 1:
            return Poly2.constant(0.0)
        return Poly2(self.c[1:, :] * np.arange(1, self.c.shape[0])[:, None])

    def dy(self):
        if self.c.shape[1] == 1:
            return Poly2.constant(0.0)
        return Poly2(self.c[:, 1:] * np.arange(1, self.c.shape[1])[None, :])

    def __add__(self, other):
        a, b = self.c, other.c
        m = max(a.shape[0], b.shape[0])
        n = max(a.shape[1], b.shape[1])
        out = np.zeros((m, n))
        out[: a.shape[0], : a.shape[1]] += a
        out[: b.shape[0], : b.shape[1]] += b
        return Poly2(out)

    def __sub__(self, other):
        return self + other.scale(-1.0)

    def scale(self, s):
        return Poly2(self.c * s)

    def __mul__(self, other):
        a, b = self.c, other.c
        out = np.zeros((a.shape[0] + b.shape[0] - 1, a.shape[1] + b.shape[1] - 1))
        for i in range(a.shape[0]):
            for j in range(a.shape[1]):
                if a[i, j] != 0.0:
                    out[i : i + b.shape[0], j : j + b.shape[1]] += a[i, j] * b
        return Poly2(out)

    def rect_integral(self, x0, x1, y0, y1):
        i = np.arange(self.c.shape[0]) + 1.0
        j = np.arange(self.c.shape[1]) + 1.0
        ix = (x1**i - x0**i) / i
        iy = (y1**j - y0**j) / j
        return float(ix @ self.c @ iy)

    def line_integral_x(self, x, y0, y1):
        """Integral of p(x, .) over [y0, y1] at fixed x."""
        cy = npp.polyval(x, self.c)  # coefficients in y
        j = np.arange(len(cy)) + 1.0
        return float(np.sum(cy * (y1**j - y0**j) / j))

    def compose_affine(self, ax, bx, ay, by):
        """Polynomial q(X, Y) = p(ax + bx X, ay + by Y)."""
        m, n = self.c.shape
        binx = _affine_powers(ax, bx, m)
        biny = _affine_powers(ay, by, n)
        out = np.zeros((m, n))
        for i in range(m):
            for j in range(n):
                if self.c[i, j] != 0.0:
                    out[: i + 1, : j + 1] += self.c[i, j] * np.outer(binx[i], biny[j])
        return Poly2(out)


def _affine_powers(a, b, nmax):
    """Coefficient rows of (a + b t)^k for k < nmax."""
    rows = [np.array([1.0])]
    for _ in range(1, nmax):
        rows.append(npp.polymul(rows[-1], np.array([a, b])))
    return rows


@dataclass(frozen=True)
class VecPoly2:
    """Polynomial vector field (u1, u2)."""

    u1: Poly2
    u2: Poly2

    def __call__(self, pts):
        pts = np.atleast_2d(pts)
        return np.column_stack([self.u1(pts), self.u2(pts)])

    def divergence(self):
        return self.u1.dx() + self.u2.dy()

    def compose_affine(self, ax, bx, ay, by):
        return VecPoly2(self.u1.compose_affine(ax, bx, ay, by), self.u2.compose_affine(ax, bx, ay, by))

    def scale(self, s):
        return VecPoly2(self.u1.scale(s), self.u2.scale(s))

    def __add__(self, other):
        return VecPoly2(self.u1 + other.u1, self.u2 + other.u2)

    def grad_norm_sq_integral(self, x0, x1, y0, y1):
        total = 0.0
        for comp in (self.u1, self.u2):
            for d in (comp.dx(), comp.dy()):
                total += (d * d).rect_integral(x0, x1, y0, y1)
        return total

    def max_abs_on_segment(self, y, x0, x1, n=33):
        xs = np.linspace(x0, x1, n)
        pts = np.column_stack([xs, np.full(n, y)])
        return float(np.abs(self(pts)).max())


def random_vector_poly(rng, degree=2, scale=1.0):
    """Random polynomial vector field with entries of total degree <= degree."""
    c1 = np.zeros((degree + 1, degree + 1))
    c2 = np.zeros((degree + 1, degree + 1))
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            c1[i, j] = rng.normal() * scale
            c2[i, j] = rng.normal() * scale
    return VecPoly2(Poly2(c1), Poly2(c2))
