"""Variational test fields for the wall gap.

For each of the three rigid boundary motions (vertical translation, horizontal
translation, rotation about the contact point) the vertical-shear energy in
the gap is minimized explicitly by a stream function

    psi_opt = psi1(tau) P1(r) + psi2(tau) P2(r),   r = (x2 + L) / height(tau),

with cubic interpolation polynomials P1, P2 and a free constant c* fixed by a
mean-free condition on the third vertical derivative at the wall.  The gap
optimum is blended with a rigid-motion collar into a globally divergence-free
velocity field that carries exact boundary data on the body and vanishes on
the channel walls.

All internal evaluation happens in canonical coordinates (active wall at the
bottom); frames built against the upper wall mirror points through x2 -> -x2.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .cutoffs import Window, _smoothstep
from .geometry import ChannelBody, GapFrame, Pose, contact_point, make_frame
from .jets import Jet
from .quadrature import (adaptive_panel_quad, gap_breaks, panel_nodes,
                         panel_quad)


class BoundaryKind(enum.Enum):
    PERP = "perp"          # boundary velocity e2
    PARALLEL = "parallel"  # boundary velocity e1
    ROTATION = "rotation"  # boundary velocity (x - contact)^perp


ALL_KINDS = (BoundaryKind.PERP, BoundaryKind.PARALLEL, BoundaryKind.ROTATION)


# ---------------------------------------------------------------------------
# Gap interpolation polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GapPolys:
    """Cubic pair P1(s) = 3 s^2 - 2 s^3, P2(s) = s^2 (s - 1) and the pairing
    constants of their second derivatives over [0, 1]."""

    p1: np.polynomial.Polynomial
    p2: np.polynomial.Polynomial
    pair11: float   # int |P1''|^2
    pair12: float   # int P1'' P2''
    pair22: float   # int |P2''|^2

    def p1_derivs(self):
        return self.p1, self.p1.deriv(), self.p1.deriv(2)

    def p2_derivs(self):
        return self.p2, self.p2.deriv(), self.p2.deriv(2)


def hermite_gap_polys() -> GapPolys:
    """Build the gap polynomials and compute their second-derivative pairings
    by Gauss quadrature (exact at this degree)."""
    P = np.polynomial.Polynomial
    p1 = P([0.0, 0.0, 3.0, -2.0])
    p2 = P([0.0, 0.0, -1.0, 1.0])
    x, w = np.polynomial.legendre.leggauss(8)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    d1 = p1.deriv(2)(s)
    d2 = p2.deriv(2)(s)
    return GapPolys(
        p1=p1, p2=p2,
        pair11=float(np.dot(d1 * d1, ws)),
        pair12=float(np.dot(d1 * d2, ws)),
        pair22=float(np.dot(d2 * d2, ws)),
    )


_POLYS = hermite_gap_polys()


# ---------------------------------------------------------------------------
# Boundary data along the gap graph (canonical frame)
# ---------------------------------------------------------------------------

def boundary_stream(kind: BoundaryKind, frame: GapFrame, tau):
    """(psi*, d2 psi*) of the rigid stream on the body boundary at abscissa
    offset tau; psi* is normalized to vanish at the contact point."""
    tau = np.asarray(tau, dtype=float)
    gx = frame.excess(tau)
    if kind is BoundaryKind.PERP:
        return tau, np.zeros_like(tau)
    if kind is BoundaryKind.PARALLEL:
        return -gx, -np.ones_like(tau)
    if kind is BoundaryKind.ROTATION:
        return 0.5 * (tau * tau + gx * gx), gx
    raise ValueError(kind)


def gap_quad_1d(fn, frame: GapFrame, rel_tol: float = 1e-10, extra=(),
                abs_scale: float = 0.0):
    """Integrate a vectorized function of tau over [-tau_max, tau_max] with
    panels graded from the sqrt(dist) peak scale.

    The integral is folded onto [0, tau_max] as fn(t) + fn(-t), which cancels
    antisymmetric near-singular peaks pointwise instead of numerically (the
    interesting values here are often small odd remainders of huge even
    profiles, and vice versa).
    """
    breaks = gap_breaks(frame.dist, frame.tau_max,
                        extra=np.abs(np.asarray(extra)) if len(extra) else ())
    pos = breaks[breaks >= 0.0]
    return adaptive_panel_quad(lambda t: fn(t) + fn(-t), pos,
                               rel_tol=rel_tol, abs_scale=abs_scale)


def c_star_frame(kind: BoundaryKind, frame: GapFrame,
                 rel_tol: float = 1e-10) -> float:
    """Constant making the wall mean of the third vertical derivative of
    psi_opt vanish:

        c* = [ int psi*/H^3 - (1/2) int d2psi*/H^2 ] / int 1/H^3,

    with H(tau) the vertical gap width."""
    den = gap_quad_1d(lambda t: frame.height(t) ** -3.0, frame, rel_tol)

    def num(t):
        p, dp = boundary_stream(kind, frame, t)
        h = frame.height(t)
        return p / h**3 - 0.5 * dp / h**2

    return gap_quad_1d(num, frame, rel_tol) / den


def c_star(kind: BoundaryKind, pose: Pose, body: ChannelBody,
           rel_tol: float = 1e-10) -> float:
    return c_star_frame(kind, make_frame(pose, body), rel_tol)


def optimality_residual(kind: BoundaryKind, pose: Pose, body: ChannelBody,
                        c: float | None = None,
                        frame: GapFrame | None = None) -> float:
    """Wall mean of d222 psi_opt normalized by the mean of its absolute value;
    vanishes at the optimal c* up to quadrature error."""
    if frame is None:
        frame = make_frame(pose, body)
    if c is None:
        c = c_star_frame(kind, frame)

    def d222(t):
        p, dp = boundary_stream(kind, frame, t)
        h = frame.height(t)
        return (-12.0 * (p - c) + 6.0 * dp * h) / h**3

    # the normalizer has a kink at the sign change; a fixed rule suffices
    scale = panel_quad(lambda t: np.abs(d222(t)),
                       gap_breaks(frame.dist, frame.tau_max), n=32)
    raw = gap_quad_1d(d222, frame, abs_scale=scale)
    return abs(raw) / scale


def frame_at(body: ChannelBody, theta: float, dist: float,
             wall: str = "lower") -> GapFrame:
    """Frame with a prescribed gap distance at a given angle (sweep helper)."""
    _, x2 = contact_point(theta if wall == "lower" else -theta, body)
    if wall == "lower":
        pose = Pose(h=dist - body.L - x2, theta=theta)
    else:
        pose = Pose(h=body.L + x2 - dist, theta=theta)
    return make_frame(pose, body, wall=wall)


def gap_dissipation(pose: Pose, body: ChannelBody,
                    frame: GapFrame | None = None,
                    c: float | None = None) -> float:
    """Reduced one-dimensional form of the vertical-shear energy of the
    optimal perpendicular stream: 12 int (tau - c*)^2 / H^3."""
    if frame is None:
        frame = make_frame(pose, body)
    if c is None:
        c = c_star_frame(BoundaryKind.PERP, frame)
    return 12.0 * gap_quad_1d(
        lambda t: (t - c) ** 2 / frame.height(t) ** 3, frame)


def gap_pairing_d22(kind_a: BoundaryKind, kind_b: BoundaryKind,
                    frame: GapFrame, c_a: float, c_b: float,
                    rel_tol: float = 1e-10) -> float:
    """int_gap d22 psi_opt^a d22 psi_opt^b via the exact change of variables
    to (tau, r); the r-integral contributes the polynomial pairing constants."""
    P = _POLYS

    def fn(t):
        pa, da = boundary_stream(kind_a, frame, t)
        pb, db = boundary_stream(kind_b, frame, t)
        h = frame.height(t)
        p1a, p2a = pa - c_a, da * h
        p1b, p2b = pb - c_b, db * h
        return (P.pair11 * p1a * p1b + P.pair12 * (p1a * p2b + p2a * p1b)
                + P.pair22 * p2a * p2b) / h**3

    return gap_quad_1d(fn, frame, rel_tol)


# ---------------------------------------------------------------------------
# Blended test fields
# ---------------------------------------------------------------------------

_BLEND = Window(-2.0, -1.0, 1.0, 2.0)   # gap blend, argument tau/tau_max


def _smoothstep_jet(t: Jet) -> Jet:
    return t.compose(lambda u: _smoothstep(u, 0),
                     lambda u: _smoothstep(u, 1),
                     lambda u: _smoothstep(u, 2))


def _window_jet(t: Jet, win: Window) -> Jet:
    return t.compose(lambda u: win(u, 0), lambda u: win(u, 1),
                     lambda u: win(u, 2))


def _take(jet: Jet, mask) -> Jet:
    return Jet(*[getattr(jet, sl)[mask] for sl in Jet.__slots__])


def _scatter(dst: Jet, src: Jet, mask) -> None:
    for sl in Jet.__slots__:
        getattr(dst, sl)[mask] = getattr(src, sl)


def boundary_samples(frame: GapFrame, n: int):
    """n points of the body boundary in canonical coordinates."""
    phi = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    e = frame.body.e
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    bx = c * np.cos(phi) - s * e * np.sin(phi)
    by = s * np.cos(phi) + c * e * np.sin(phi) + frame.h
    return bx, by


@dataclass(frozen=True)
class QuadConfig:
    """Quadrature resolution and blending geometry for field pairings."""

    rel_tol: float = 1e-10
    n_r: int = 12
    n_tau: int = 18
    blend_radius: float = 1.2       # lateral taper length of the outer field
    wall_fraction: float = 0.5      # wall-layer thickness / corridor height
    n_col: int = 6                  # Gauss order per outer column panel
    n_seg: int = 10                 # Gauss order per vertical segment
    col_width: float = 0.3          # maximal outer column panel width


class TestField:
    """One blended velocity field, evaluable anywhere in the channel.

    In the corridor below the body the stream is the gap optimum psi_opt,
    blended over |tau| in [tau_max, 2 tau_max] into the outer ansatz

        (psi* - c*) eta(x1) V_lo(x) V_up(x),

    where eta tapers laterally beyond the body over `blend_radius` and the
    V factors send the stream C^1 to zero at each wall across a layer graded
    with the local corridor height (so the construction stays usable at all
    gap sizes).  The cutoffs plateau at 1 on the whole body boundary, making
    the rigid data exact there.
    """

    def __init__(self, kind: BoundaryKind, frame: GapFrame,
                 cfg: QuadConfig = QuadConfig(), c: float | None = None):
        self.kind = kind
        self.frame = frame
        self.cfg = cfg
        self.c_star = c_star_frame(kind, frame, cfg.rel_tol) if c is None else c
        body = frame.body
        th = frame.theta
        self.lam = graph_halfwidth(th, body)
        self.ell = cfg.blend_radius
        margin = 0.02
        self.eta = Window(-(self.lam + margin + self.ell),
                          -(self.lam + margin),
                          self.lam + margin, self.lam + margin + self.ell)
        self.dist_up = 2.0 * body.L - frame.dist + 2.0 * frame.x2
        bx, by = boundary_samples(frame, 181)
        corr_lo = frame.dist + frame.kappa2 * (bx - frame.x1) ** 2
        corr_up = self.dist_up + frame.kappa2 * (bx + frame.x1) ** 2
        self.f_lo = min(cfg.wall_fraction,
                        0.85 * float(np.min((by + body.L) / corr_lo)))
        self.f_up = min(cfg.wall_fraction,
                        0.85 * float(np.min((body.L - by) / corr_up)))

    # -- stream pieces -------------------------------------------------------
    def _rigid_jet(self, x1, x2) -> Jet:
        """psi* - c* as a jet (polynomial in x)."""
        frame = self.frame
        X = Jet.variable_x(x1, x2)
        Y = Jet.variable_y(x1, x2)
        if self.kind is BoundaryKind.PERP:
            return X - (frame.x1 + self.c_star)
        if self.kind is BoundaryKind.PARALLEL:
            return (frame.x2 + frame.h - self.c_star) - Y
        dx = X - frame.x1
        dy = Y - (frame.x2 + frame.h)
        return 0.5 * (dx * dx + dy * dy) - self.c_star

    def _psi_opt_jet(self, x1, x2) -> Jet:
        """Gap-optimal stream jet, valid within the graphed corridor."""
        frame = self.frame
        x1 = np.asarray(x1, float)
        tau = x1 - frame.x1
        g0, g1, g2 = frame.excess_derivatives(tau)
        zero = np.zeros_like(g0)
        gx = Jet(g0, g1, zero, g2, zero, zero)    # gamma - x2 as a field jet
        X = Jet.variable_x(x1, x2)
        Y = Jet.variable_y(x1, x2)
        H = gx + frame.dist                       # vertical gap width
        R = (Y + frame.body.L) / H
        if self.kind is BoundaryKind.PERP:
            psi1 = X - (frame.x1 + self.c_star)
            psi2 = None
        elif self.kind is BoundaryKind.PARALLEL:
            psi1 = -gx - self.c_star
            psi2 = -1.0 * H
        else:
            T = X - frame.x1
            psi1 = 0.5 * (T * T + gx * gx) - self.c_star
            psi2 = gx * H
        c1, c1d, c1dd = _POLYS.p1_derivs()
        out = psi1 * R.compose(c1, c1d, c1dd)
        if psi2 is not None:
            c2, c2d, c2dd = _POLYS.p2_derivs()
            out = out + psi2 * R.compose(c2, c2d, c2dd)
        return out

    def _outer_jet(self, x1, x2) -> Jet:
        """Channel-spanning ansatz (psi* - c*) eta V_lo V_up."""
        frame = self.frame
        L = frame.body.L
        X = Jet.variable_x(x1, x2)
        Y = Jet.variable_y(x1, x2)
        eta = _window_jet(X, self.eta)
        T = X - frame.x1
        w_lo = (frame.kappa2 * (T * T) + frame.dist) * self.f_lo
        V_lo = _smoothstep_jet((Y + L) / w_lo)
        Tu = X + frame.x1
        w_up = (frame.kappa2 * (Tu * Tu) + self.dist_up) * self.f_up
        V_up = _smoothstep_jet((L - Y) / w_up)
        return self._rigid_jet(x1, x2) * eta * V_lo * V_up

    def psi_jet(self, x1, x2) -> Jet:
        """Full blended stream jet at canonical points (vectorized)."""
        frame = self.frame
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        tau = x1 - frame.x1
        e = frame.body.e
        th = frame.theta
        c, s = math.cos(th), math.sin(th)
        bx = c * x1 + s * (x2 - frame.h)
        by = -s * x1 + c * (x2 - frame.h)
        inside = bx * bx + (by / e) ** 2 <= 1.0 + 1e-13
        tau_c = np.clip(tau, -2.0 * frame.tau_max, 2.0 * frame.tau_max)
        strip = (np.abs(tau) < 2.0 * frame.tau_max) & ~inside \
            & (x2 <= frame.h + frame.gamma(tau_c) + 1e-13)

        out = self._outer_jet(x1, x2)
        if np.any(strip):
            xs, ys = x1[strip], x2[strip]
            opt = self._psi_opt_jet(xs, ys)
            tj = (Jet.variable_x(xs, ys) - frame.x1) * (1.0 / frame.tau_max)
            zb = _window_jet(tj, _BLEND)
            mixed = zb * opt + (1.0 - zb) * _take(out, strip)
            _scatter(out, mixed, strip)
        if np.any(inside):
            _scatter(out, self._rigid_jet(x1[inside], x2[inside]), inside)
        return out

    def velocity(self, x1, x2):
        """Physical velocity, shape (N, 2).

        For upper-wall frames the canonical field is pushed through the
        mirror map; the sign is kind-dependent because reflection preserves
        horizontal boundary data but flips vertical and angular data.
        """
        frame = self.frame
        x1 = np.atleast_1d(np.asarray(x1, dtype=float))
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        cx, cy = frame.to_canonical(x1, x2)
        psi = self.psi_jet(cx, cy)
        if frame.mirrored:
            sign = -1.0 if self.kind is BoundaryKind.PARALLEL else 1.0
            return sign * np.stack([psi.fy, psi.fx], axis=-1)
        return np.stack([-psi.fy, psi.fx], axis=-1)


def field_eval(tf: TestField, points):
    """Velocity of a blended field at physical points, shape (N, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return tf.velocity(pts[:, 0], pts[:, 1])


# ---------------------------------------------------------------------------
# Pairing quadrature over the field support
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairNodes:
    x1: np.ndarray
    x2: np.ndarray
    w: np.ndarray


def _upper_graph(frame: GapFrame, x1):
    """Canonical ordinate of the upper body boundary (central symmetry of
    the lower graph)."""
    tau_m = -np.asarray(x1, float) - frame.x1
    return frame.h - frame.gamma(tau_m)


def pair_nodes(frame: GapFrame, field: TestField,
               cfg: QuadConfig) -> PairNodes:
    """Quadrature nodes covering the support of the blended fields.

    Region one is the corridor strip below the body (graded tau panels,
    Gauss in the height fraction).  Region two covers the rest of the
    lateral support column by column: above the body inside the corridor,
    both sides of the body outside it, and full channel columns beyond the
    body, with panel boundaries on every cutoff junction and wall layer.
    """
    body = frame.body
    L = body.L
    lam = field.lam
    # --- strip ---------------------------------------------------------------
    breaks = gap_breaks(frame.dist, 2.0 * frame.tau_max,
                        extra=[frame.tau_max])
    tq, tw = panel_nodes(breaks, cfg.n_tau)
    rq, rw = panel_nodes([0.0, 0.5, 1.0], cfg.n_r)
    H = frame.height(tq)
    X1s = np.repeat(tq + frame.x1, rq.size)
    X2s = (-L + np.outer(H, rq)).ravel()
    Ws = (np.outer(tw * H, rw)).ravel()
    # --- columns ---------------------------------------------------------------
    margin = 0.02
    lo_strip = frame.x1 - 2.0 * frame.tau_max
    hi_strip = frame.x1 + 2.0 * frame.tau_max
    xb = sorted({-(lam + margin + field.ell), -(lam + margin), -lam,
                 lo_strip, hi_strip, lam, lam + margin,
                 lam + margin + field.ell})
    xb = np.asarray(xb)
    refined = [xb[0]]
    for a, b in zip(xb[:-1], xb[1:]):
        nsub = max(1, int(math.ceil((b - a) / cfg.col_width)))
        refined.extend(np.linspace(a, b, nsub + 1)[1:])
    xq, xw = panel_nodes(np.asarray(refined), cfg.n_col)

    xs_out, ys_out, ws_out = [], [], []

    def add_segment(x, wx, y0, y1, layer_lo=None, layer_hi=None):
        if y1 - y0 <= 1e-13:
            return
        seg = {y0, y1}
        if layer_lo is not None and y0 + layer_lo < y1:
            seg.add(y0 + min(layer_lo, 0.5 * (y1 - y0)))
        if layer_hi is not None and y1 - layer_hi > y0:
            seg.add(y1 - min(layer_hi, 0.5 * (y1 - y0)))
        yq, yw = panel_nodes(np.asarray(sorted(seg)), cfg.n_seg)
        xs_out.append(np.full(yq.size, x))
        ys_out.append(yq)
        ws_out.append(yw * wx)

    for x, wx in zip(xq, xw):
        w_lo = field.f_lo * (frame.dist + frame.kappa2 * (x - frame.x1) ** 2)
        w_up = field.f_up * (field.dist_up
                             + frame.kappa2 * (x + frame.x1) ** 2)
        if abs(x) < lam:
            tau = x - frame.x1
            y_lo = frame.h + frame.gamma(tau)
            y_hi = _upper_graph(frame, x)
            if lo_strip < x < hi_strip:
                add_segment(x, wx, y_hi, L, layer_hi=w_up)  # strip has below
            else:
                add_segment(x, wx, -L, y_lo, layer_lo=w_lo)
                add_segment(x, wx, y_hi, L, layer_hi=w_up)
        else:
            add_segment(x, wx, -L, L, layer_lo=w_lo, layer_hi=w_up)
    return PairNodes(
        x1=np.concatenate([X1s] + xs_out),
        x2=np.concatenate([X2s] + ys_out),
        w=np.concatenate([Ws] + ws_out),
    )


def h1_pairings(jets, weights):
    """Gram matrices of the stream jets under the velocity-gradient and
    velocity L2 inner products."""
    n = len(jets)
    R = np.zeros((n, n))
    L2 = np.zeros((n, n))
    for i in range(n):
        for j in range(i, n):
            a, b = jets[i], jets[j]
            R[i, j] = R[j, i] = float(np.dot(
                weights,
                a.fxx * b.fxx + 2.0 * a.fxy * b.fxy + a.fyy * b.fyy))
            L2[i, j] = L2[j, i] = float(np.dot(
                weights, a.fx * b.fx + a.fy * b.fy))
    return R, L2


@dataclass(frozen=True)
class ResistanceModel:
    """Quasi-static drag closure in the generalized coordinates q = (h, theta).

    R maps generalized velocities to viscous generalized forces; F_pois is
    the flow-induced forcing, calibrated to vanish at the centered pose.
    L2 is the fluid-domain velocity Gram matrix of the basis fields (used by
    the contact potential's momentum pairing)."""

    R: np.ndarray
    F_pois: np.ndarray
    L2: np.ndarray
    frame: GapFrame
    d_far: float

    def drag(self, qdot: np.ndarray) -> np.ndarray:
        return -self.R @ qdot


class NonSPDResistanceError(RuntimeError):
    """Assembled resistance matrix is not positive definite (quadrature
    under-resolution)."""


def basis_fields(frame: GapFrame, cfg: QuadConfig = QuadConfig()):
    """Unit-velocity basis: b_h (vertical translation) and b_theta (rotation
    about the body center), the latter composed from the three gap fields
    as x1s * perp - x2s * parallel + rotation-about-contact."""
    perp = TestField(BoundaryKind.PERP, frame, cfg)
    para = TestField(BoundaryKind.PARALLEL, frame, cfg)
    rot = TestField(BoundaryKind.ROTATION, frame, cfg)
    return perp, para, rot


def _basis_jets(perp, para, rot, x1, x2):
    jp = perp.psi_jet(x1, x2)
    jl = para.psi_jet(x1, x2)
    jr = rot.psi_jet(x1, x2)
    frame = perp.frame
    jtheta = frame.x1 * jp + (-frame.x2) * jl + jr
    return jp, jtheta


def assemble_resistance(frame: GapFrame, cfg: QuadConfig = QuadConfig()):
    """Gradient and velocity Gram matrices of the (b_h, b_theta) basis over
    the fluid domain.

    The body interior adds 2 |B| to the rotation-rotation gradient entry:
    the fields are rigid there, so their symmetric gradients vanish while
    their full gradients do not, and the Korn identity runs over the whole
    channel.  The velocity Gram stays fluid-domain only.
    """
    perp, para, rot = basis_fields(frame, cfg)
    nodes = pair_nodes(frame, perp, cfg)
    jp, jt = _basis_jets(perp, para, rot, nodes.x1, nodes.x2)
    R, L2 = h1_pairings([jp, jt], nodes.w)
    R[1, 1] += 2.0 * math.pi * frame.body.e
    R = 0.5 * (R + R.T)
    if np.linalg.eigvalsh(R).min() <= 0.0:
        raise NonSPDResistanceError("resistance matrix not SPD")
    return R, L2, nodes, (jp, jt), perp.ell


def resistance_and_forcing(pose: Pose, body: ChannelBody, params,
                           cfg: QuadConfig = QuadConfig(),
                           extension=None,
                           calibration: np.ndarray | None = None
                           ) -> ResistanceModel:
    """Assemble the drag matrix and Poiseuille forcing at a pose.

    The forcing is the source-term pairing int ghat . b_i over the field
    support, minus its value at the centered pose (passed as `calibration`
    or recomputed), so the centered pose is an exact equilibrium of the
    reduced model.
    """
    from .flowfield import ExtensionField  # local import: no cycle at load

    frame = make_frame(pose, body)
    R, L2, nodes, jets, d_far = assemble_resistance(frame, cfg)
    if params is None or getattr(params, "lambda0", 0.0) == 0.0:
        F = np.zeros(2)
    else:
        ext = extension if extension is not None else \
            ExtensionField(params, h=pose.h)
        F = _forcing_raw(frame, ext, nodes, jets)
        if calibration is None:
            calibration = forcing_calibration(body, params, cfg)
        F = F - calibration
    return ResistanceModel(R=R, F_pois=F, L2=L2, frame=frame, d_far=d_far)


def _forcing_raw(frame: GapFrame, ext, nodes: PairNodes, basis_jets):
    """int ghat . b_i over the node set, handled in canonical coordinates.

    For mirrored frames the physical basis fields are the reflections of the
    canonical ones; changing variables in the physical pairing integral
    yields the canonical pairing against the reflected source."""
    if frame.mirrored:
        gx, gy = ext.ghat(nodes.x1, -nodes.x2)
        gx = -gx
    else:
        gx, gy = ext.ghat(nodes.x1, nodes.x2)
    out = np.empty(2)
    for i, jet in enumerate(basis_jets):
        out[i] = float(np.dot(nodes.w, gx * (-jet.fy) + gy * jet.fx))
    return out


def forcing_calibration(body: ChannelBody, params,
                        cfg: QuadConfig = QuadConfig()) -> np.ndarray:
    """Raw forcing at the centered pose (subtracted so that the centered pose
    is an equilibrium of the reduced model)."""
    from .flowfield import ExtensionField

    frame0 = make_frame(Pose(0.0, 0.0), body)
    _, _, nodes, jets, _ = assemble_resistance(frame0, cfg)
    ext0 = ExtensionField(params, h=0.0)
    return _forcing_raw(frame0, ext0, nodes, jets)


# ---------------------------------------------------------------------------
# Norm sweeps
# ---------------------------------------------------------------------------

def field_h1_l2(tf: TestField, cfg: QuadConfig | None = None):
    """(|grad v|_{L2(Omega)}^2, |v|_{L2(Omega)}^2) of one blended field."""
    cfg = cfg or tf.cfg
    nodes = pair_nodes(tf.frame, tf, cfg)
    jet = tf.psi_jet(nodes.x1, nodes.x2)
    R, L2 = h1_pairings([jet], nodes.w)
    return float(R[0, 0]), float(L2[0, 0])


def rotation_about_contact_h1(frame: GapFrame,
                              cfg: QuadConfig = QuadConfig()) -> float:
    """|grad v|_{L2}^2 of the composed field carrying the rigid decomposition
    about the contact point: -x2 parallel + rotation."""
    perp, para, rot = basis_fields(frame, cfg)
    nodes = pair_nodes(frame, perp, cfg)
    jl = para.psi_jet(nodes.x1, nodes.x2)
    jr = rot.psi_jet(nodes.x1, nodes.x2)
    comp = (-frame.x2) * jl + jr
    R, _ = h1_pairings([comp], nodes.w)
    return float(R[0, 0])


def trace_sharpness(body: ChannelBody, theta: float,
                    dists=(1e-5, 1e-4, 1e-3, 1e-2),
                    cfg: QuadConfig = QuadConfig()):
    """Scaling report for the trace inequalities: fitted decay exponents of
    |grad v|_{L2} for the perpendicular field (expected -3/4) and for the
    parallel, rotation and rotation-about-contact fields (expected to stay
    above -0.3, matching the quarter-power trace bounds)."""
    from .quadrature import fit_exponent

    rows = {k: [] for k in ("perp", "parallel", "rotation", "about_contact")}
    ds = sorted(dists)
    for d in ds:
        frame = frame_at(body, theta, d)
        for kind, key in ((BoundaryKind.PERP, "perp"),
                          (BoundaryKind.PARALLEL, "parallel"),
                          (BoundaryKind.ROTATION, "rotation")):
            tf = TestField(kind, frame, cfg)
            h1, _ = field_h1_l2(tf, cfg)
            rows[key].append(math.sqrt(h1))
        rows["about_contact"].append(
            math.sqrt(rotation_about_contact_h1(frame, cfg)))
    report = {}
    for key, vals in rows.items():
        fit = fit_exponent(ds, vals, drop_largest_decade=True)
        expo = 0.75 if key == "perp" else 0.25
        scaled = np.asarray(vals) * np.asarray(ds) ** expo
        report[key] = {
            "slope": fit.slope,
            "window_ratio": float(scaled.max() / scaled.min()),
            "norms": vals,
        }
    return report
