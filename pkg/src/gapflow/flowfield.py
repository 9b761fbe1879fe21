"""Dimensionless parameters, the Poiseuille profile, and the solenoidal
cutoff extension of the far-field flow.

The extension s carries the Poiseuille flow unchanged for |x1| >= 3, vanishes
on the channel walls and in a neighbourhood of the body, and is divergence
free by construction (it is the perpendicular gradient of a stream function).
Depending on the body's vertical position the flux is routed through a strip
along the top wall or along the bottom wall, with a smooth switch for
h in (1/4, 1/2); consequently the time derivative of s is proportional to h'
with a spatial profile supported in the central block of the channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cutoffs import Step, Window
from .geometry import ChannelBody
from .quadrature import panel_nodes


@dataclass(frozen=True)
class PhysicalParams:
    """Dimensional inputs: fluid, body and channel data."""

    mu: float       # viscosity
    rho: float      # density
    d: float        # semi-major axis
    delta: float    # semi-minor axis
    Lcal: float     # channel half-width
    P0: float       # pressure drop per unit length
    Mcal: float     # body mass
    Jcal: float     # body moment of inertia

    def __post_init__(self):
        for name in ("mu", "rho", "d", "delta", "Lcal", "Mcal", "Jcal"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.P0 < 0:
            raise ValueError("P0 must be nonnegative")
        if not self.delta < self.d:
            raise ValueError("delta < d required (d is the major semi-axis)")
        if not self.Lcal > 2 * self.d:
            raise ValueError("Lcal > 2 d required")


@dataclass(frozen=True)
class DimlessParams:
    """Dimensionless parameter set; lambda0 = p0 L^2 / 2 is the centerline
    speed of the driving flow."""

    e: float
    L: float
    p0: float
    lambda0: float
    m: float
    J: float
    energy_scale: float = 1.0   # multiplies physical energies

    def __post_init__(self):
        if abs(self.lambda0 - self.p0 * self.L**2 / 2.0) > 1e-12 * max(
                1.0, abs(self.lambda0)):
            raise ValueError("lambda0 must equal p0 L^2 / 2")

    @classmethod
    def from_lambda0(cls, e: float, L: float, lambda0: float,
                     m: float = 1.0, J: float = 1.0) -> "DimlessParams":
        return cls(e=e, L=L, p0=2.0 * lambda0 / L**2, lambda0=lambda0,
                   m=m, J=J)

    def body(self, lambda_star: float | None = None) -> ChannelBody:
        if lambda_star is None:
            return ChannelBody(e=self.e, L=self.L)
        return ChannelBody(e=self.e, L=self.L, lambda_star=lambda_star)


def nondimensionalize(phys: PhysicalParams) -> DimlessParams:
    """Scale by the reference speed mu/(rho d), time rho d^2/mu and length d."""
    e = phys.delta / phys.d
    L = phys.Lcal / phys.d
    p0 = phys.P0 * phys.rho * phys.d**3 / phys.mu**2
    return DimlessParams(
        e=e, L=L, p0=p0, lambda0=p0 * L**2 / 2.0,
        m=phys.Mcal / (phys.rho * phys.d**2),
        J=phys.Jcal / (phys.rho * phys.d**4),
        energy_scale=phys.rho / phys.mu**2,
    )


def poiseuille(x2, params: DimlessParams):
    """Driving velocity (v1, 0) with v1 = lambda0 (1 - x2^2/L^2)."""
    x2 = np.asarray(x2, dtype=float)
    if np.any(np.abs(x2) > params.L * (1 + 1e-12)):
        raise ValueError("ordinate outside the channel")
    v1 = params.lambda0 * (1.0 - (x2 / params.L) ** 2)
    return v1, np.zeros_like(v1)


class ExtensionField:
    """Solenoidal extension s of the driving flow at a frozen body height h.

    Evaluators return s, its h-sensitivity fbar (so that dt s = h' fbar) and
    the source term ghat = lap(s) - (s.grad)s - grad(pi_p), all closed form.
    """

    def __init__(self, params: DimlessParams, h: float, eps0: float = 0.25):
        self.params = params
        self.h = float(h)
        self.eps0 = eps0
        L = params.L
        self.zeta1 = Window(-3.0, -2.0, 2.0, 3.0)
        self.chi = Step(0.25, 0.5, rising=True)
        # keeps the top strip [L - eps0, L] open (used when the flux passes
        # over the body), and its mirror for the bottom strip
        self.zeta0_minus = Step(L - eps0, L - eps0 / 2.0, rising=False)
        self.zeta0_plus = Step(-L + eps0 / 2.0, -L + eps0, rising=True)
        self._bL = self._b(np.array(L))[0]
        self._bmL = self._b(np.array(-L))[0]

    # -- one-dimensional pieces ----------------------------------------------
    def _b(self, x2):
        """Stream profile of the driving flow, -lambda0 L (u - u^3/3), and its
        first three derivatives."""
        lam, L = self.params.lambda0, self.params.L
        u = x2 / L
        b0 = -lam * L * (u - u**3 / 3.0)
        b1 = -lam * (1.0 - u * u)
        b2 = 2.0 * lam * x2 / L**2
        b3 = np.full_like(np.asarray(x2, float), 2.0 * lam / L**2)
        return b0, b1, b2, b3

    def _psi_branch(self, x1, x2, strip: str, dx1: int, dx2: int):
        """Partial derivative of one branch stream (b - b_blocked) Z +
        b_blocked, where Z = 1 - zeta1(x1) zeta0(x2) blocks the flow around
        the body and keeps a strip open along one wall.  The additive
        constant is the stream value of the *blocked* wall, which makes the
        stream constant there and on the killed block."""
        if strip == "top":
            zeta0, b_blocked = self.zeta0_minus, self._bmL
        else:
            zeta0, b_blocked = self.zeta0_plus, self._bL
        bs = self._b(x2)
        out = 0.0
        z1 = self.zeta1(x1, dx1)
        for j in range(dx2 + 1):
            binom = math.comb(dx2, j)
            B = bs[j] - (b_blocked if j == 0 else 0.0)
            a, c = dx1, dx2 - j
            if a == 0 and c == 0:
                Z = 1.0 - self.zeta1(x1, 0) * zeta0(x2, 0)
            else:
                Z = -z1 * zeta0(x2, c)
            out = out + binom * B * Z
        if dx1 == 0 and dx2 == 0:
            out = out + b_blocked
        return out

    def psi(self, x1, x2, dx1: int = 0, dx2: int = 0):
        """Partial derivative of the blended stream function.  chi(h) = 1
        (body high) routes the flux under the body, chi(h) = 0 over it."""
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        w = float(self.chi(self.h, 0))
        shape = np.broadcast(x1, x2).shape
        out = np.zeros(shape)
        if w > 0.0:
            out = out + w * self._psi_branch(x1, x2, "bottom", dx1, dx2)
        if w < 1.0:
            out = out + (1.0 - w) * self._psi_branch(x1, x2, "top", dx1, dx2)
        return out

    def velocity(self, x1, x2):
        """s = (-d2 psi, d1 psi)."""
        return -self.psi(x1, x2, 0, 1), self.psi(x1, x2, 1, 0)

    def dh_stream(self, x1, x2, dx1: int = 0, dx2: int = 0):
        """h-derivative of the stream: chi'(h) (psi_bottom - psi_top)."""
        dchi = float(self.chi(self.h, 1))
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        if dchi == 0.0:
            return np.zeros(np.broadcast(x1, x2).shape)
        bot = self._psi_branch(x1, x2, "bottom", dx1, dx2)
        top = self._psi_branch(x1, x2, "top", dx1, dx2)
        return dchi * (bot - top)

    def fbar(self, x1, x2):
        """Velocity profile multiplying h' in dt s."""
        return -self.dh_stream(x1, x2, 0, 1), self.dh_stream(x1, x2, 1, 0)

    def ghat(self, x1, x2):
        """Source term lap(s) - (s.grad)s - grad(pi_p), with pi_p = -p0 x1."""
        p0 = self.params.p0
        psi = self.psi
        s1, s2 = -psi(x1, x2, 0, 1), psi(x1, x2, 1, 0)
        # velocity gradient
        d1s1, d2s1 = -psi(x1, x2, 1, 1), -psi(x1, x2, 0, 2)
        d1s2, d2s2 = psi(x1, x2, 2, 0), psi(x1, x2, 1, 1)
        lap1 = -(psi(x1, x2, 2, 1) + psi(x1, x2, 0, 3))
        lap2 = psi(x1, x2, 3, 0) + psi(x1, x2, 1, 2)
        g1 = lap1 - (s1 * d1s1 + s2 * d2s1) + p0
        g2 = lap2 - (s1 * d1s2 + s2 * d2s2)
        return g1, g2

    # -- diagnostics -----------------------------------------------------------
    def div_residual(self, x1, x2, step: float = 1e-4):
        """Central-difference divergence of s (zero up to roundoff)."""
        v = self.velocity
        d1 = (v(np.asarray(x1) + step, x2)[0] - v(np.asarray(x1) - step, x2)[0])
        d2 = (v(x1, np.asarray(x2) + step)[1] - v(x1, np.asarray(x2) - step)[1])
        return (d1 + d2) / (2.0 * step)

    def _block_nodes(self, n: int = 12):
        """Tensor quadrature over the central block [-3,3] x [-L,L], with
        panel boundaries on every cutoff junction."""
        L, e0 = self.params.L, self.eps0
        xb = [-3.0, -2.0, 0.0, 2.0, 3.0]
        yb = sorted({-L, -L + e0 / 2.0, -L + e0, 0.0, L - e0, L - e0 / 2.0, L})
        xq, xw = panel_nodes(np.asarray(xb), n)
        yq, yw = panel_nodes(np.asarray(yb), n)
        X = np.repeat(xq, yq.size)
        Y = np.tile(yq, xq.size)
        W = np.outer(xw, yw).ravel()
        return X, Y, W

    def ghat_l2(self, n: int = 12) -> float:
        X, Y, W = self._block_nodes(n)
        g1, g2 = self.ghat(X, Y)
        return float(np.sqrt(np.dot(W, g1 * g1 + g2 * g2)))

    def fbar_l2(self, n: int = 12) -> float:
        X, Y, W = self._block_nodes(n)
        f1, f2 = self.fbar(X, Y)
        return float(np.sqrt(np.dot(W, f1 * f1 + f2 * f2)))


def extension_eval(field: ExtensionField, point, fd_step: float = 1e-4):
    """(s(point), central-difference divergence residual)."""
    x1, x2 = float(point[0]), float(point[1])
    s1, s2 = field.velocity(x1, x2)
    return (float(s1), float(s2)), float(field.div_residual(x1, x2, fd_step))


def extension_sources(field: ExtensionField):
    """(fbar, ghat) evaluators of the extension."""
    return field.fbar, field.ghat
