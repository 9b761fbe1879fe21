"""Singular gap integrals, their closed-form kernel profiles, and the
decomposition of the perpendicular/rotation mixed pairing.

The basic object is

    J(p, q) = int tau^p / (dist + gamma(tau) - x2)^q dtau

over the gap graph.  Substituting tau = sqrt(dist) s turns the quadratic part
of the denominator into (1 + kappa2 s^2), so the small-distance behaviour is
governed by the full-line kernels

    I_{p,q}(kappa2) = int_R s^p / (1 + kappa2 s^2)^q ds,

which have Beta-function closed forms for even p.  Odd powers vanish at
leading order by symmetry and pick up the cubic coefficient kappa3 instead.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma as _gamma_fn

from .geometry import ChannelBody, GapFrame
from .lubrication import (BoundaryKind, boundary_stream, c_star_frame,
                          frame_at, gap_quad_1d)
from .quadrature import ExponentFit, fit_exponent, sqrt_limit


# ---------------------------------------------------------------------------
# Full-line kernels
# ---------------------------------------------------------------------------

def kernel_integral(p: int, q: int, kappa2: float) -> float:
    """I_{p,q}(kappa2) for even p < 2q - 1, via the Beta identity
    kappa2^{-(p+1)/2} Gamma((p+1)/2) Gamma(q-(p+1)/2) / Gamma(q);
    odd p gives zero by symmetry."""
    if p % 2 == 1:
        return 0.0
    if p >= 2 * q - 1:
        raise ValueError(f"I_{{{p},{q}}} diverges")
    a = (p + 1) / 2.0
    return kappa2 ** (-a) * _gamma_fn(a) * _gamma_fn(q - a) / _gamma_fn(q)


def kernel_integral_quadrature(p: int, q: int, kappa2: float,
                               tail: float = 1e-13) -> float:
    """Same kernel by truncated quadrature with a certified tail bound
    T^{p-2q+1} / ((2q-p-1) kappa2^q); cross-checks the Beta identity."""
    if p % 2 == 1:
        return 0.0
    power = 2 * q - p - 1
    if power <= 0:
        raise ValueError(f"I_{{{p},{q}}} diverges")
    ref = kernel_integral(p, q, kappa2)
    T = (2.0 / (power * kappa2**q * max(tail * abs(ref), 1e-290))) ** (1.0 / power)
    T = max(T, 10.0 / math.sqrt(kappa2))
    breaks = np.concatenate([-np.geomspace(T, 1e-3, 40), [0.0],
                             np.geomspace(1e-3, T, 40)])
    from .quadrature import adaptive_panel_quad
    val = adaptive_panel_quad(
        lambda s: s**p / (1.0 + kappa2 * s * s) ** q, breaks, rel_tol=1e-12)
    return val


# ---------------------------------------------------------------------------
# Gap integrals and the exponent table
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SingularIntegralSpec:
    p: int
    q: int
    frame: GapFrame

    def __post_init__(self):
        if self.p < 0 or self.q < 1:
            raise ValueError("need p >= 0, q >= 1")


def gap_integral(spec: SingularIntegralSpec, rel_tol: float = 1e-10) -> float:
    """J(p, q) over the frame's gap graph by graded-panel quadrature."""
    frame = spec.frame
    p, q = spec.p, spec.q
    return gap_quad_1d(lambda t: t**p / frame.height(t) ** q, frame, rel_tol)


def predicted_exponent(p: int, q: int) -> float | None:
    """Small-distance growth exponent of J(p, q); None marks the bounded
    cases."""
    if p % 2 == 0:
        if p <= 2 * q - 2:
            return (p + 1) / 2.0 - q
        return None
    if p <= 2 * q - 3:
        return (p + 2) / 2.0 - q
    return None


@dataclass(frozen=True)
class ExponentRow:
    p: int
    q: int
    theta: float
    predicted: float | None
    fitted: float | None
    max_abs: float
    passed: bool


def exponent_suite(body: ChannelBody, thetas, pq_grid,
                   dists=None, tol: float = 0.05) -> list[ExponentRow]:
    """Fitted versus predicted growth exponents over a (p, q, theta) grid.

    Odd powers at the symmetric angles integrate to zero exactly; those rows
    assert smallness of the absolute value instead of a slope.
    """
    if dists is None:
        dists = np.geomspace(1e-6, 1e-3, 13)
    dists = np.asarray(sorted(dists), dtype=float)
    rows = []
    for theta in thetas:
        frames = [frame_at(body, theta, d) for d in dists]
        symmetric = abs(math.remainder(theta, math.pi / 2)) < 1e-12
        for (p, q) in pq_grid:
            vals = np.array([gap_integral(SingularIntegralSpec(p, q, f))
                             for f in frames])
            pred = predicted_exponent(p, q)
            if p % 2 == 1 and symmetric:
                scale = np.array([gap_integral(SingularIntegralSpec(p + 1, q, f))
                                  for f in frames])
                ok = bool(np.all(np.abs(vals) <= 1e-9 * np.abs(scale)))
                rows.append(ExponentRow(p, q, theta, None, None,
                                        float(np.max(np.abs(vals))), ok))
                continue
            if pred is None:
                # bounded: fitted slope must not be substantially negative
                fitres = fit_exponent(dists, vals, drop_largest_decade=True)
                ok = fitres.slope >= -tol
                rows.append(ExponentRow(p, q, theta, None, fitres.slope,
                                        float(np.max(np.abs(vals))), ok))
            else:
                fitres = fit_exponent(dists, vals, drop_largest_decade=True)
                ok = abs(fitres.slope - pred) <= tol
                rows.append(ExponentRow(p, q, theta, pred, fitres.slope,
                                        float(np.max(np.abs(vals))), ok))
    return rows


# ---------------------------------------------------------------------------
# Kernel profile (all small-distance coefficients at one kappa2)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class KappaProfile:
    """Closed-form small-distance coefficients at one quadratic coefficient.

    c_perp/c_par/c_rot are the limits of c*/dist (the perpendicular one per
    unit kappa3); mixed_profile is the coefficient of kappa3/sqrt(dist) in
    the perpendicular-rotation pairing assembled from the decomposition
    profiles g1, g2, g3.
    """

    kappa2: float
    x2: float
    kernels: dict
    den_inf: float
    num_inf: float
    c_perp: float
    c_par: float
    c_rot: float
    g1: float
    g2: float
    g3: float
    mixed_profile: float

    def kernel(self, p: int, q: int) -> float:
        return self.kernels[(p, q)]


_PROFILE_KERNELS = ((0, 2), (0, 3), (2, 2), (2, 3), (2, 4), (4, 3), (4, 4),
                    (6, 4))


def kappa_profile(kappa2: float, body: ChannelBody) -> KappaProfile:
    """Assemble every small-distance coefficient used downstream."""
    lo, hi = body.kappa2_min, body.kappa2_max
    if not lo - 1e-12 <= kappa2 <= hi + 1e-12:
        raise ValueError(f"kappa2={kappa2} outside [{lo}, {hi}]")
    K = {pq: kernel_integral(*pq, kappa2) for pq in _PROFILE_KERNELS}
    den_inf = K[(0, 3)]
    num_inf = K[(4, 4)]
    c_perp = -3.0 * num_inf / den_inf               # = -1/(2 kappa2^2)
    c_par = (0.5 * K[(0, 2)] - kappa2 * K[(2, 3)]) / den_inf   # = 1/3
    c_rot = 0.5 * K[(2, 3)] / den_inf               # = 1/(6 kappa2)
    from .geometry import k2_maps
    x2 = k2_maps(body).X2(min(max(kappa2, lo), hi))
    g1 = -3.0 * K[(6, 4)] - c_perp * K[(2, 3)]
    g2 = x2 * (K[(4, 3)] - 3.0 * kappa2 * K[(6, 4)] - kappa2 * c_perp * K[(2, 3)])
    g3 = -x2 * (-2.0 * K[(4, 3)] - c_perp * K[(0, 2)])
    return KappaProfile(
        kappa2=kappa2, x2=x2, kernels=K, den_inf=den_inf, num_inf=num_inf,
        c_perp=c_perp, c_par=c_par, c_rot=c_rot,
        g1=g1, g2=g2, g3=g3,
        mixed_profile=6.0 * g1 + 12.0 * g2 + 6.0 * g3,
    )


def mixed_profile_closed_form(kappa2: float, body: ChannelBody) -> float:
    """Beta-identity form of the mixed-pairing profile,
    -21 pi / (4 kappa2^{7/2}) - 3 pi X2(kappa2) kappa2^{-5/2}."""
    from .geometry import k2_maps
    x2 = k2_maps(body).X2(kappa2)
    return (-21.0 * math.pi / (4.0 * kappa2**3.5)
            - 3.0 * math.pi * x2 * kappa2**-2.5)


# ---------------------------------------------------------------------------
# Mixed pairing decomposition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixedPairing:
    G1: float
    G2: float
    G3: float
    M_direct: float

    @property
    def combined(self) -> float:
        return 6.0 * self.G1 + 12.0 * self.G2 + 6.0 * self.G3


def m_opt_decomposition(frame: GapFrame, rel_tol: float = 1e-10,
                        c_perp: float | None = None) -> MixedPairing:
    """Direct pairing of the vertical-shear optima of the perpendicular field
    against the rotation-minus-x2-parallel combination, plus its three-term
    decomposition:

        G1 = int (tau - c_perp)(tau^2 - c_rot) / H^3
        G2 = int x2 (tau - c_perp)(gamma - x2 + c_par) / H^3
        G3 = -int x2 (tau - c_perp) / H^2

    The direct value M satisfies M = 6 G1 + 12 G2 + 6 G3 + O(1) while each
    side grows like kappa3 / sqrt(dist).  The sign of the G3 term is fixed by
    this very cross-check (the optimality of c_perp kills every other
    candidate combination).
    """
    from .lubrication import gap_pairing_d22

    if c_perp is None:
        c_perp = c_star_frame(BoundaryKind.PERP, frame, rel_tol)
    c_par = c_star_frame(BoundaryKind.PARALLEL, frame, rel_tol)
    c_rot = c_star_frame(BoundaryKind.ROTATION, frame, rel_tol)
    x2 = frame.x2

    m_rot = gap_pairing_d22(BoundaryKind.PERP, BoundaryKind.ROTATION,
                            frame, c_perp, c_rot, rel_tol)
    m_par = gap_pairing_d22(BoundaryKind.PERP, BoundaryKind.PARALLEL,
                            frame, c_perp, c_par, rel_tol)
    M_direct = m_rot - x2 * m_par

    H = frame.height
    G1 = gap_quad_1d(
        lambda t: (t - c_perp) * (t * t - c_rot) / H(t) ** 3, frame, rel_tol)
    G2 = gap_quad_1d(
        lambda t: x2 * (t - c_perp) * (frame.excess(t) + c_par) / H(t) ** 3,
        frame, rel_tol)
    G3 = -gap_quad_1d(
        lambda t: x2 * (t - c_perp) / H(t) ** 2, frame, rel_tol)
    return MixedPairing(G1=G1, G2=G2, G3=G3, M_direct=M_direct)


def mixed_pairing_2d(frame: GapFrame, n_tau: int = 24, n_r: int = 14,
                     c_perp: float | None = None) -> float:
    """Direct tensor quadrature of d22 psi_perp (d22 psi_rot - x2 d22 psi_par)
    over the gap in (tau, r) variables, independent of the reduced pairing
    constants."""
    from .lubrication import _POLYS
    from .quadrature import gap_breaks, panel_nodes

    if c_perp is None:
        c_perp = c_star_frame(BoundaryKind.PERP, frame)
    c_par = c_star_frame(BoundaryKind.PARALLEL, frame)
    c_rot = c_star_frame(BoundaryKind.ROTATION, frame)
    breaks = gap_breaks(frame.dist, frame.tau_max)
    tq, tw = panel_nodes(breaks, n_tau)
    rq, rw = panel_nodes([0.0, 1.0], n_r)
    H = frame.height(tq)
    p1dd = _POLYS.p1.deriv(2)(rq)
    p2dd = _POLYS.p2.deriv(2)(rq)

    def d22(kind, c):
        p, dp = boundary_stream(kind, frame, tq)
        return ((p - c)[:, None] * p1dd[None, :]
                + (dp * H)[:, None] * p2dd[None, :]) / (H**2)[:, None]

    a = d22(BoundaryKind.PERP, c_perp)
    b = (d22(BoundaryKind.ROTATION, c_rot)
         - frame.x2 * d22(BoundaryKind.PARALLEL, c_par))
    jac = (tw * H)[:, None] * rw[None, :]
    return float(np.sum(a * b * jac))


def mixed_limits(body: ChannelBody, theta: float,
                 dists=(1e-4, 1e-5, 1e-6, 1e-7)) -> dict:
    """sqrt(dist)-scaled mixed pairings along a distance sweep, extrapolated
    to their common limit kappa3 * mixed_profile(kappa2)."""
    dists = np.asarray(sorted(dists, reverse=True))
    direct, combined = [], []
    frame0 = frame_at(body, theta, dists[0])
    for d in dists:
        frame = frame_at(body, theta, d)
        dec = m_opt_decomposition(frame)
        direct.append(math.sqrt(d) * dec.M_direct)
        combined.append(math.sqrt(d) * dec.combined)
    prof = kappa_profile(frame0.kappa2, body)
    return {
        "direct_limit": sqrt_limit(dists, direct),
        "combined_limit": sqrt_limit(dists, combined),
        "predicted": frame0.kappa3 * prof.mixed_profile,
        "direct": direct,
        "combined": combined,
        "dists": list(map(float, dists)),
    }
