"""Exact ellipse/channel contact geometry.

The body is the ellipse x1**2 + (x2/e)**2 <= 1 (semi-axes 1 and e, with
0 < e < 1) rotated by theta and shifted vertically by h inside the channel
|x2| < L.  Everything exposed here is closed form: the point of the body
boundary closest to a wall, the local graph of the boundary around that
point, the quadratic/cubic Taylor coefficients of the graph, and the
diffeomorphisms linking the contact ordinate to the quadratic coefficient.

All angular quantities are pi-periodic; angles are reduced internally to
(-pi/2, pi/2].  Upper-wall frames are obtained from lower-wall frames by the
mirror map (h, theta) -> (-h, -theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad


class GapDomainError(ValueError):
    """Raised when a graph abscissa leaves the parametrization interval."""


class AdmissibilityError(ValueError):
    """Raised when a pose would overlap the channel walls."""


# Test hook: flip_kappa3() in gapflow.testing toggles this to exercise the
# negative controls of the verification suite.  Production value is +1.0.
_KAPPA3_SIGN = 1.0


def reduce_angle(theta: float) -> float:
    """Reduce theta to (-pi/2, pi/2] using the pi-periodicity of the body."""
    r = math.remainder(theta, math.pi)
    if r <= -math.pi / 2:
        r += math.pi
    return r


@dataclass(frozen=True)
class ChannelBody:
    """Dimensionless body/channel geometry.

    e: aspect ratio of the ellipse (vertical semi-axis; horizontal is 1).
    L: channel half-width.  L > 2 keeps the body away from both walls at once.
    lambda_star: half-length of the boundary graph used in gap integrals.
    """

    e: float
    L: float
    lambda_star: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not 0.0 < self.e < 1.0:
            raise ValueError(f"aspect ratio e must be in (0, 1), got {self.e}")
        if self.L <= 2.0:
            raise ValueError(f"channel half-width L must exceed 2, got {self.L}")
        if self.lambda_star is None:
            object.__setattr__(self, "lambda_star", self.e)
        if self.lambda_star > self.e:
            raise ValueError("lambda_star must not exceed e")

    @property
    def kappa2_min(self) -> float:
        return self.e / 2.0

    @property
    def kappa2_max(self) -> float:
        return 1.0 / (2.0 * self.e**2)


@dataclass(frozen=True)
class Pose:
    """Vertical displacement and rotation of the body."""

    h: float
    theta: float

    def clearance(self, body: ChannelBody) -> float:
        """L - |h| - |x2[theta]|; positive iff the pose is admissible."""
        return body.L - abs(self.h) + contact_point(self.theta, body)[1]

    def admissible(self, body: ChannelBody) -> bool:
        return self.clearance(body) > 0.0

    def require_admissible(self, body: ChannelBody) -> None:
        if not self.admissible(body):
            raise AdmissibilityError(
                f"pose (h={self.h}, theta={self.theta}) overlaps a wall"
            )


def _ellipse_quadratic(theta: float, e: float):
    """Coefficients (A, B, C) of the rotated-ellipse quadratic
    A x1^2 + B x1 x2 + C x2^2 = 1."""
    c, s = math.cos(theta), math.sin(theta)
    A = c * c + (s * s) / e**2
    B = math.sin(2 * theta) * (1.0 - 1.0 / e**2)
    C = s * s + (c * c) / e**2
    return A, B, C


def contact_point(theta: float, body: ChannelBody):
    """Point (x1, x2) of the rotated body boundary closest to the lower wall.

    Vertical tangency there: the quadratic in x2 has a double root, which
    pins x1 in terms of theta.  x2 < 0 always; x1 vanishes at theta in
    {0, pi/2}.
    """
    th = reduce_angle(theta)
    e = body.e
    c, s = math.cos(th), math.sin(th)
    root = math.sqrt(s * s + e * e * c * c)
    x2 = -root
    x1 = -(1.0 - e * e) * c * s / root
    return x1, x2


def graph_halfwidth(theta: float, body: ChannelBody) -> float:
    """Half-width of the x1-interval on which the lower boundary is a graph."""
    th = reduce_angle(theta)
    c, s = math.cos(th), math.sin(th)
    return math.sqrt(c * c + body.e**2 * s * s)


def _graph_pieces(theta: float, body: ChannelBody):
    th = reduce_angle(theta)
    _, B, C = _ellipse_quadratic(th, body.e)
    x1s, x2s = contact_point(th, body)
    lam = graph_halfwidth(th, body)
    return th, B, C, x1s, x2s, lam


def gap_profile(theta: float, tau, body: ChannelBody):
    """Height gamma[theta](tau) of the lower boundary at abscissa offset tau
    from the contact point.  gamma(0) = x2[theta] and gamma'(0) = 0.

    Raises GapDomainError outside the graph interval |x1s + tau| <= lam(theta).
    """
    th, B, C, x1s, x2s, lam = _graph_pieces(theta, body)
    tau = np.asarray(tau, dtype=float)
    x1 = x1s + tau
    disc = C - x1 * x1 / body.e**2
    if np.any(disc < -1e-14):
        raise GapDomainError(
            f"abscissa offset leaves the boundary graph (theta={theta})"
        )
    out = -B / (2.0 * C) * x1 - np.sqrt(np.maximum(disc, 0.0)) / C
    return out if out.ndim else float(out)


def gap_profile_derivatives(theta: float, tau, body: ChannelBody):
    """(gamma, gamma', gamma'', gamma''') at abscissa offset tau, closed form.

    With S = sqrt(C - x1^2/e^2):
        gamma'   = -B/(2C) + x1/(e^2 C S)  ... chain through x1 = x1s + tau
        gamma''  = 1/(e^2 S^3)
        gamma''' = 3 x1 / (e^4 S^5)
    """
    th, B, C, x1s, x2s, lam = _graph_pieces(theta, body)
    e2 = body.e**2
    tau = np.asarray(tau, dtype=float)
    x1 = x1s + tau
    disc = C - x1 * x1 / e2
    if np.any(disc < -1e-14):
        raise GapDomainError("abscissa offset leaves the boundary graph")
    S = np.sqrt(np.maximum(disc, 1e-300))
    g0 = -B / (2.0 * C) * x1 - S / C
    g1 = -B / (2.0 * C) + x1 / (e2 * C * S)
    g2 = 1.0 / (e2 * S**3)
    g3 = 3.0 * x1 / (e2 * e2 * S**5)
    return g0, g1, g2, g3


def gap_excess(theta: float, tau, body: ChannelBody):
    """gamma[theta](tau) - x2[theta], evaluated without cancellation.

    Subtracting the conic equation at the contact point from the one at
    abscissa offset tau kills the linear term (vertical tangency), leaving

        C G^2 + beta G + A tau^2 = 0,  beta = B (x1 + tau) + 2 C x2 < 0,

    whose small root is written in the rationalized form
    2 A tau^2 / (-beta + sqrt(beta^2 - 4 A C tau^2)).  The naive difference
    of two order-one numbers loses half the mantissa once the gap drops
    below ~1e-8 and makes 1/height^q integrands unusable.
    """
    th = reduce_angle(theta)
    A, B, C = _ellipse_quadratic(th, body.e)
    x1s, x2s = contact_point(th, body)
    lam = graph_halfwidth(th, body)
    tau = np.asarray(tau, dtype=float)
    if np.any(np.abs(x1s + tau) > lam * (1 + 1e-14)):
        raise GapDomainError("abscissa offset leaves the boundary graph")
    beta = B * (x1s + tau) + 2.0 * C * x2s
    disc = beta * beta - 4.0 * A * C * tau * tau
    out = 2.0 * A * tau * tau / (-beta + np.sqrt(np.maximum(disc, 0.0)))
    return out if out.ndim else float(out)


def gap_excess_derivatives(theta: float, tau, body: ChannelBody):
    """(G, G', G'') of the gap excess G = gamma - x2, all cancellation-free.

    G' comes from implicit differentiation of the quadratic above; G'' from
    the closed curvature form 1/(e^2 S^3) with S = sqrt(C - x1^2/e^2).
    """
    th = reduce_angle(theta)
    A, B, C = _ellipse_quadratic(th, body.e)
    x1s, x2s = contact_point(th, body)
    e2 = body.e**2
    tau = np.asarray(tau, dtype=float)
    G = gap_excess(th, tau, body)
    beta = B * (x1s + tau) + 2.0 * C * x2s
    G1 = -(2.0 * A * tau + B * G) / (beta + 2.0 * C * G)
    x1 = x1s + tau
    S = np.sqrt(np.maximum(C - x1 * x1 / e2, 1e-300))
    G2 = 1.0 / (e2 * S**3)
    return G, G1, G2


def dtheta_gap_profile(theta: float, tau, body: ChannelBody):
    """theta-derivative of gamma[theta](tau) at fixed tau.

    gamma depends on theta through the quadratic coefficients and through the
    contact abscissa x1s; both are differentiated in closed form.
    """
    th, B, C, x1s, x2s, lam = _graph_pieces(theta, body)
    e2 = body.e**2
    dB = 2.0 * math.cos(2 * th) * (1.0 - 1.0 / e2)
    dC = B  # d/dtheta (sin^2 + cos^2/e^2) = sin(2 theta)(1 - 1/e^2)
    dx1s, _ = dtheta_contact(th, body)
    tau = np.asarray(tau, dtype=float)
    x1 = x1s + tau
    disc = C - x1 * x1 / e2
    if np.any(disc < -1e-14):
        raise GapDomainError("abscissa offset leaves the boundary graph")
    S = np.sqrt(np.maximum(disc, 1e-300))
    # partial in theta at fixed x1, then transport of the contact abscissa
    d_at_fixed_x1 = (
        -(dB * C - B * dC) / (2.0 * C * C) * x1
        - (dC / (2.0 * S) * C - S * dC) / (C * C)
    )
    dgamma_dx1 = -B / (2.0 * C) + x1 / (e2 * C * S)
    out = d_at_fixed_x1 + dgamma_dx1 * dx1s
    return out if out.ndim else float(out)


def curvature_coeffs(theta: float, body: ChannelBody):
    """Quadratic and cubic Taylor coefficients (kappa2, kappa3) of the gap
    profile around the contact point.

    kappa2 = -(x2/2)(cos^2 + sin^2/e^2) in [e/2, 1/(2 e^2)], positive;
    kappa3 = -cos sin x2 kappa2 (1 - 1/e^2), odd in theta.
    """
    th = reduce_angle(theta)
    e2 = body.e**2
    _, x2 = contact_point(th, body)
    c, s = math.cos(th), math.sin(th)
    kappa2 = -(x2 / 2.0) * (c * c + s * s / e2)
    kappa3 = -c * s * x2 * kappa2 * (1.0 - 1.0 / e2)
    return kappa2, _KAPPA3_SIGN * kappa3


def dtheta_contact(theta: float, body: ChannelBody):
    """(d x1/d theta, d x2/d theta) from the 2x2 linear system obtained by
    differentiating the tangency conditions; d x2/d theta equals x1."""
    th = reduce_angle(theta)
    e2 = body.e**2
    A, B, C = _ellipse_quadratic(th, body.e)
    d = B / 2.0  # cos sin (1 - 1/e^2)
    dA = -B
    dC = B
    dd = math.cos(2 * th) * (1.0 - 1.0 / e2)
    x1, x2 = contact_point(th, body)
    mat = np.array([
        [x1 * A + x2 * d, x2 * C + x1 * d],
        [A, d],
    ])
    rhs = np.array([
        -(x1 * x1 * dA + x2 * x2 * dC + 2.0 * x1 * x2 * dd) / 2.0,
        -(x1 * dA + x2 * dd),
    ])
    dx1, dx2 = np.linalg.solve(mat, rhs)
    return float(dx1), float(dx2)


def dtheta_kappa2(theta: float, body: ChannelBody) -> float:
    """d kappa2/d theta, via kappa2 = -x2^3/(2 e^2) and d x2/d theta = x1."""
    x1, x2 = contact_point(theta, body)
    return -3.0 * x2 * x2 * x1 / (2.0 * body.e**2)


@dataclass(frozen=True)
class K2Maps:
    """Diffeomorphism pair between the contact ordinate and kappa2, plus the
    potential K3 whose theta-derivative along kappa2 reproduces kappa3."""

    body: ChannelBody

    def K2(self, x2: float) -> float:
        """kappa2 as a function of the contact ordinate, -x2^3/(2 e^2)."""
        if not -1.0 - 1e-12 <= x2 <= -self.body.e + 1e-12:
            raise ValueError(f"contact ordinate {x2} outside [-1, -e]")
        return -(x2**3) / (2.0 * self.body.e**2)

    def X2(self, kappa2: float) -> float:
        """Inverse of K2 on [kappa2_min, kappa2_max]."""
        self._check_range(kappa2)
        return -((2.0 * self.body.e**2 * kappa2) ** (1.0 / 3.0))

    def X2_prime(self, kappa2: float) -> float:
        self._check_range(kappa2)
        return self.X2(kappa2) / (3.0 * kappa2)

    def _check_range(self, kappa2: float) -> None:
        lo, hi = self.body.kappa2_min, self.body.kappa2_max
        if not lo - 1e-12 <= kappa2 <= hi + 1e-12:
            raise ValueError(f"kappa2={kappa2} outside [{lo}, {hi}]")

    def K3_integrand(self, xi: float) -> float:
        return xi - xi * xi * self.X2_prime(xi) / self.X2(xi)

    def K3(self, kappa2: float) -> float:
        """Antiderivative such that kappa3[theta] = d/dtheta K3(kappa2[theta]);
        evaluated by quadrature from kappa2 to kappa2_max."""
        self._check_range(kappa2)
        val, _ = quad(self.K3_integrand, kappa2, self.body.kappa2_max,
                      epsabs=1e-13, epsrel=1e-13)
        return val

    def K3_prime(self, kappa2: float) -> float:
        return -self.K3_integrand(kappa2)


def k2_maps(body: ChannelBody) -> K2Maps:
    return K2Maps(body)


LOWER, UPPER = "lower", "upper"


def distance(pose: Pose, body: ChannelBody):
    """Gap distance to the nearest wall and which wall achieves it.

    Lower gap: h + x2[theta] + L.  Upper gap by the mirror map; x2 is even in
    theta, so it reads L - h + x2[theta].  Ties resolve to the lower wall.
    """
    pose.require_admissible(body)
    _, x2 = contact_point(pose.theta, body)
    d_low = pose.h + x2 + body.L
    d_up = body.L - pose.h + x2
    if d_low <= d_up:
        return d_low, LOWER
    return d_up, UPPER


@dataclass(frozen=True)
class GapFrame:
    """Local description of the gap between the body and one wall.

    All geometric data (contact point, profile, Taylor coefficients) are held
    in canonical coordinates in which the active wall is the lower one; for
    wall == "upper" the canonical pose is the mirror image (-h, -theta) and
    physical points map through (x1, x2) -> (x1, -x2).
    """

    body: ChannelBody
    pose: Pose
    wall: str
    h: float            # canonical vertical displacement
    theta: float        # canonical angle, reduced
    x1: float
    x2: float
    kappa2: float
    kappa3: float
    dist: float
    tau_max: float      # half-length actually used for gap integrals
    dx1_dtheta: float
    dx2_dtheta: float
    dkappa2_dtheta: float

    # -- profile ------------------------------------------------------------
    def gamma(self, tau):
        return gap_profile(self.theta, tau, self.body)

    def gamma_derivatives(self, tau):
        return gap_profile_derivatives(self.theta, tau, self.body)

    def dtheta_gamma(self, tau):
        return dtheta_gap_profile(self.theta, tau, self.body)

    def excess(self, tau):
        """gamma(tau) - x2 >= 0, cancellation-free."""
        return gap_excess(self.theta, tau, self.body)

    def excess_derivatives(self, tau):
        return gap_excess_derivatives(self.theta, tau, self.body)

    def height(self, tau):
        """Vertical gap width dist + gamma(tau) - x2 (> 0)."""
        return self.dist + self.excess(tau)

    def surface_x2(self, tau):
        """Canonical ordinate of the body boundary over the gap, h + gamma."""
        return self.h + self.gamma(tau)

    # -- coordinate maps ----------------------------------------------------
    @property
    def mirrored(self) -> bool:
        return self.wall == UPPER

    def to_canonical(self, x1, x2):
        if self.mirrored:
            return np.asarray(x1, float), -np.asarray(x2, float)
        return np.asarray(x1, float), np.asarray(x2, float)

    def to_physical(self, x1, x2):
        return self.to_canonical(x1, x2)  # involution


def make_frame(pose: Pose, body: ChannelBody, wall: str | None = None,
               tau_margin: float = 0.45) -> GapFrame:
    """Build the gap frame for a pose, defaulting to the nearest wall.

    tau_max is clamped to a fraction of the remaining graph width so the
    blending zone |tau| <= 2 tau_max never leaves the parametrization
    interval (the graph is asymmetric around the contact point for oblique
    angles).
    """
    pose.require_admissible(body)
    if wall is None:
        _, wall = distance(pose, body)
    if wall == LOWER:
        h_c, th_c = pose.h, reduce_angle(pose.theta)
    elif wall == UPPER:
        h_c, th_c = -pose.h, reduce_angle(-pose.theta)
    else:
        raise ValueError(f"unknown wall {wall!r}")
    x1s, x2s = contact_point(th_c, body)
    k2, k3 = curvature_coeffs(th_c, body)
    lam = graph_halfwidth(th_c, body)
    dist = h_c + x2s + body.L
    tau_max = min(body.lambda_star, tau_margin * (lam - abs(x1s)))
    dx1, dx2 = dtheta_contact(th_c, body)
    return GapFrame(
        body=body, pose=pose, wall=wall, h=h_c, theta=th_c,
        x1=x1s, x2=x2s, kappa2=k2, kappa3=k3, dist=dist, tau_max=tau_max,
        dx1_dtheta=dx1, dx2_dtheta=dx2,
        dkappa2_dtheta=dtheta_kappa2(th_c, body),
    )


def taylor_coeffs_fd(theta: float, body: ChannelBody, step: float | None = None):
    """Finite-difference Taylor coefficients (kappa2, kappa3, kappa4) of the
    gap profile, Richardson-extrapolated central differences.

    Independent of the closed forms; used to cross-check them.  Step sizes
    grow with the derivative order to stay above the roundoff floor of the
    divided differences (eps / h^k).
    """
    if step is None:
        step = 1e-3 * body.lambda_star
    step3 = max(step, 0.03 * body.lambda_star)
    step4 = max(step, 0.05 * body.lambda_star)
    g = lambda t: gap_profile(theta, t, body)

    def d2(h):
        return (-g(2*h) + 16*g(h) - 30*g(0.0) + 16*g(-h) - g(-2*h)) / (12*h*h)

    def d3(h):
        return (g(2*h) - 2*g(h) + 2*g(-h) - g(-2*h)) / (2*h**3)

    def d4(h):
        return (g(2*h) - 4*g(h) + 6*g(0.0) - 4*g(-h) + g(-2*h)) / h**4

    def richardson(d, h, p):
        a, b = d(h), d(h / 2.0)
        return (2**p * b - a) / (2**p - 1)

    def richardson2(d, h):
        r1 = lambda hh: richardson(d, hh, 2)
        return richardson(r1, h, 4)

    k2 = richardson(d2, step, 4) / 2.0
    k3 = richardson2(d3, step3) / 6.0
    k4 = richardson(d4, step4, 2) / 24.0
    return k2, k3, k4


def pinch_constants(body: ChannelBody, n_theta: int = 91):
    """Two-sided quadratic bounds for the gap profile and its theta-derivative:

        c1 tau^2 <= gamma - x2        <= c2 tau^2
        |dtheta gamma - dtheta x2|    <= max(|c3|, |c4|) tau^2

    computed by sampling kappa2 +/- a cubic-remainder margin over a theta
    grid, as the Taylor-with-remainder argument prescribes.
    """
    lam = body.lambda_star
    c1, c2 = np.inf, -np.inf
    c3, c4 = np.inf, -np.inf
    for th in np.linspace(-math.pi / 2 + 1e-9, math.pi / 2, n_theta):
        frame_tau = min(lam, 0.45 * (graph_halfwidth(th, body)
                                     - abs(contact_point(th, body)[0])))
        ts = np.linspace(-frame_tau, frame_tau, 41)
        _, _, g2, g3 = gap_profile_derivatives(th, ts, body)
        margin = frame_tau / 6.0 * np.max(np.abs(g3))
        k2 = 0.5 * gap_profile_derivatives(th, 0.0, body)[2]
        c1 = min(c1, k2 - margin)
        c2 = max(c2, k2 + margin)
        # derivative bounds from FD in theta of the second derivative
        dth = 1e-5
        k2p = 0.5 * gap_profile_derivatives(th + dth, 0.0, body)[2]
        k2m = 0.5 * gap_profile_derivatives(th - dth, 0.0, body)[2]
        dk2 = (k2p - k2m) / (2 * dth)
        g3p = gap_profile_derivatives(th + dth, ts * (1 - 1e-6), body)[3]
        g3m = gap_profile_derivatives(th - dth, ts * (1 - 1e-6), body)[3]
        dmargin = frame_tau / 6.0 * np.max(np.abs(g3p - g3m)) / (2 * dth)
        c3 = min(c3, dk2 - dmargin)
        c4 = max(c4, dk2 + dmargin)
    return float(c1), float(c2), float(c3), float(c4)
