"""Vectorized second-order Taylor (jet) arithmetic in two variables.

A Jet carries the value, gradient and Hessian of a scalar field at a batch of
points.  Sums, products, quotients and composition with smooth univariate
functions propagate derivatives exactly, which keeps every stream-function
evaluation in the package free of numerical differentiation.
"""

from __future__ import annotations

import numpy as np


class Jet:
    __slots__ = ("f", "fx", "fy", "fxx", "fxy", "fyy")

    def __init__(self, f, fx, fy, fxx, fxy, fyy):
        self.f = np.asarray(f, dtype=float)
        self.fx = np.asarray(fx, dtype=float)
        self.fy = np.asarray(fy, dtype=float)
        self.fxx = np.asarray(fxx, dtype=float)
        self.fxy = np.asarray(fxy, dtype=float)
        self.fyy = np.asarray(fyy, dtype=float)

    # -- constructors --------------------------------------------------------
    @staticmethod
    def variable_x(x, y):
        x = np.asarray(x, dtype=float)
        z = np.zeros_like(x)
        return Jet(x, np.ones_like(x), z, z, z, z)

    @staticmethod
    def variable_y(x, y):
        y = np.asarray(y, dtype=float)
        z = np.zeros_like(y)
        return Jet(y, z, np.ones_like(y), z, z, z)

    @staticmethod
    def const(c, like=None):
        if like is None:
            c = np.asarray(c, dtype=float)
            z = np.zeros_like(c)
            return Jet(c, z, z, z, z, z)
        z = np.zeros_like(np.asarray(like, dtype=float))
        return Jet(z + c, z, z, z, z, z)

    # -- ring operations -----------------------------------------------------
    def __add__(self, other):
        if isinstance(other, Jet):
            return Jet(self.f + other.f, self.fx + other.fx, self.fy + other.fy,
                       self.fxx + other.fxx, self.fxy + other.fxy,
                       self.fyy + other.fyy)
        return Jet(self.f + other, self.fx, self.fy, self.fxx, self.fxy, self.fyy)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.f, -self.fx, -self.fy, -self.fxx, -self.fxy, -self.fyy)

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -np.asarray(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Jet):
            a, b = self, other
            return Jet(
                a.f * b.f,
                a.fx * b.f + a.f * b.fx,
                a.fy * b.f + a.f * b.fy,
                a.fxx * b.f + 2.0 * a.fx * b.fx + a.f * b.fxx,
                a.fxy * b.f + a.fx * b.fy + a.fy * b.fx + a.f * b.fxy,
                a.fyy * b.f + 2.0 * a.fy * b.fy + a.f * b.fyy,
            )
        return Jet(self.f * other, self.fx * other, self.fy * other,
                   self.fxx * other, self.fxy * other, self.fyy * other)

    __rmul__ = __mul__

    def compose(self, g, g1, g2):
        """Jet of g(f) given g, g', g'' as callables of the value array."""
        v, d1, d2 = g(self.f), g1(self.f), g2(self.f)
        return Jet(
            v,
            d1 * self.fx,
            d1 * self.fy,
            d2 * self.fx * self.fx + d1 * self.fxx,
            d2 * self.fx * self.fy + d1 * self.fxy,
            d2 * self.fy * self.fy + d1 * self.fyy,
        )

    def reciprocal(self):
        return self.compose(lambda u: 1.0 / u,
                            lambda u: -1.0 / u**2,
                            lambda u: 2.0 / u**3)

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / other)

    def sqrt(self):
        return self.compose(np.sqrt,
                            lambda u: 0.5 / np.sqrt(u),
                            lambda u: -0.25 * u**-1.5)

    def square(self):
        return self * self


def poly_jet(coeffs, t: Jet) -> Jet:
    """Jet of a polynomial sum(coeffs[k] * t**k) by Horner on jets."""
    out = Jet.const(0.0, like=t.f)
    for c in reversed(coeffs):
        out = out * t + c
    return out


def grad_perp(psi: Jet):
    """Velocity (-d psi/dy, d psi/dx) of a stream-function jet, with its
    Jacobian entries; returns (v1, v2, dv1dx, dv1dy, dv2dx, dv2dy)."""
    return -psi.fy, psi.fx, -psi.fxy, -psi.fyy, psi.fxx, psi.fxy
