"""Reduced-order dynamics of the spring-mounted body, with the contact
potential, its modulation amplitude, and energy/distance monitors.

The generalized coordinates are q = (h, theta).  The closure replaces the
fluid by the quasi-static drag -R(q) q' and the flow forcing F(q) assembled
from the blended test fields, so the equations of motion are

    m h''     + dH/dh     = [-R q' + F]_h
    J theta'' + dH/dtheta = [-R q' + F]_theta.

Contact is dynamically repulsive (R_hh grows like dist^{-3/2}); the
integrator additionally rejects any step that would cross dist = 0 or change
dist by more than ten percent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import CubicSpline

from .cutoffs import Window
from .flowfield import DimlessParams, ExtensionField
from .geometry import (AdmissibilityError, ChannelBody, Pose, distance,
                       dtheta_kappa2, k2_maps, make_frame)
from .jets import Jet
from .lubrication import (BoundaryKind, QuadConfig, ResistanceModel,
                          c_star_frame, gap_quad_1d)
from .quadrature import panel_nodes


# ---------------------------------------------------------------------------
# Restoring potential
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PotentialSpec:
    """Restoring potential H(h, theta).

    The default is the quadratic law (r_h h^2 + r_theta theta^2)/2, which
    satisfies h dH/dh + theta dH/dtheta = 2 H exactly and is coercive with
    modulus min(r_h, r_theta).  Custom potentials supply value and gradient
    callables and can be checked numerically with `verify_structure`.
    """

    r_h: float = 1.0
    r_theta: float = 1.0
    value_fn: object = None
    grad_fn: object = None

    def __post_init__(self):
        if self.value_fn is None and (self.r_h <= 0 or self.r_theta <= 0):
            raise ValueError("stiffnesses must be positive")

    @property
    def is_hooke(self) -> bool:
        return self.value_fn is None

    def value(self, h: float, theta: float) -> float:
        if self.is_hooke:
            return 0.5 * (self.r_h * h * h + self.r_theta * theta * theta)
        return float(self.value_fn(h, theta))

    def grad(self, h: float, theta: float):
        if self.is_hooke:
            return self.r_h * h, self.r_theta * theta
        return tuple(map(float, self.grad_fn(h, theta)))

    def structure_constants(self):
        """(varpi, varrho) with h H_h + theta H_t >= varpi H and
        H >= varrho/2 (h^2 + theta^2); exact for the quadratic law."""
        if self.is_hooke:
            return 2.0, min(self.r_h, self.r_theta)
        raise ValueError("no closed-form constants for a custom potential")

    def verify_structure(self, body: ChannelBody, theta_max: float = math.pi,
                         n: int = 25):
        """Numerically estimate (varpi, varrho) on the admissible band."""
        hs = np.linspace(-(body.L - 1) * 0.95, (body.L - 1) * 0.95, n)
        ts = np.linspace(-theta_max, theta_max, n)
        varpi, varrho = np.inf, np.inf
        for h in hs:
            for t in ts:
                H = self.value(h, t)
                gh, gt = self.grad(h, t)
                r2 = h * h + t * t
                if H > 1e-14:
                    varpi = min(varpi, (h * gh + t * gt) / H)
                if r2 > 1e-14:
                    varrho = min(varrho, 2.0 * H / r2)
        return float(varpi), float(varrho)


@dataclass(frozen=True)
class State:
    t: float
    h: float
    theta: float
    hdot: float
    thetadot: float

    def pose(self) -> Pose:
        return Pose(self.h, self.theta)


# ---------------------------------------------------------------------------
# Modulation amplitude
# ---------------------------------------------------------------------------

class AmplitudeLaw:
    """Positive amplitude a(t) cancelling the singular part of the contact
    potential's derivative.

    a solves a'/a = -theta' dk2 w(kappa2) with
    w = (K3'(k2) M(k2) - 12 I43(k2)) / (6 I22(k2)), which integrates in
    closed form to a = exp(G(kappa2[theta]) - G(kappa2[theta_ref])); G is
    tabulated once per body on a dense spline."""

    def __init__(self, body: ChannelBody, n_grid: int = 800):
        from .asymptotics import kappa_profile, kernel_integral

        self.body = body
        maps = k2_maps(body)
        lo, hi = body.kappa2_min, body.kappa2_max
        grid = np.linspace(lo, hi, n_grid)
        wvals = np.empty_like(grid)
        for i, k2 in enumerate(grid):
            prof = kappa_profile(k2, body)
            I22 = kernel_integral(2, 2, k2)
            I43 = kernel_integral(4, 3, k2)
            wvals[i] = (maps.K3_prime(k2) * prof.mixed_profile
                        - 12.0 * I43) / (6.0 * I22)
        self._w = CubicSpline(grid, wvals)
        self._G = CubicSpline(grid, -wvals).antiderivative()

    def w(self, kappa2: float) -> float:
        return float(self._w(np.clip(kappa2, self.body.kappa2_min,
                                     self.body.kappa2_max)))

    def log_amplitude(self, theta, theta_ref: float) -> np.ndarray:
        from .geometry import curvature_coeffs
        k2 = np.array([curvature_coeffs(t, self.body)[0]
                       for t in np.atleast_1d(theta)])
        k2r = curvature_coeffs(theta_ref, self.body)[0]
        return self._G(k2) - self._G(k2r)

    def amplitude(self, theta, theta_ref: float) -> np.ndarray:
        return np.exp(self.log_amplitude(theta, theta_ref))

    def aprime_over_a(self, theta: float, thetadot: float) -> float:
        from .geometry import curvature_coeffs
        k2 = curvature_coeffs(theta, self.body)[0]
        return -thetadot * dtheta_kappa2(theta, self.body) * self.w(k2)


def amplitude(theta_fn, dtheta_fn, t_grid, body: ChannelBody,
              rtol: float = 1e-10, atol: float = 1e-12):
    """Amplitude along a rotation history by the closed form and by direct
    integration of the defining ODE; both start from 1 at t_grid[0]."""
    from scipy.integrate import solve_ivp

    law = AmplitudeLaw(body)
    t_grid = np.asarray(t_grid, dtype=float)
    closed = law.amplitude(theta_fn(t_grid), float(theta_fn(t_grid[0])))

    def rhs(t, y):
        return [law.aprime_over_a(float(theta_fn(t)), float(dtheta_fn(t))) * y[0]]

    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), [1.0], t_eval=t_grid,
                    rtol=rtol, atol=atol, method="RK45")
    return closed, sol.y[0]


def mod_vanishing(frame, thetadot: float, body: ChannelBody,
                  law: AmplitudeLaw | None = None, a: float = 1.0,
                  force_aprime_zero: bool = False):
    """Residual of the 1/sqrt(dist) coefficient of the modulated derivative:

        6 a' I22(k2) + a theta' (k3 M(k2) - 12 dk2 I43(k2)),

    normalized by the magnitude of its two constituents.  With a' from the
    amplitude law the cancellation is algebraic; forcing a' = 0 exposes the
    divergence (negative control)."""
    from .asymptotics import kappa_profile, kernel_integral

    law = law or AmplitudeLaw(body)
    k2, k3 = frame.kappa2, frame.kappa3
    I22 = kernel_integral(2, 2, k2)
    I43 = kernel_integral(4, 3, k2)
    prof = kappa_profile(k2, body)
    dk2 = frame.dkappa2_dtheta
    term_a = a * thetadot * (k3 * prof.mixed_profile - 12.0 * dk2 * I43)
    aprime = 0.0 if force_aprime_zero else a * law.aprime_over_a(
        frame.theta, thetadot)
    coeff = 6.0 * aprime * I22 + term_a
    scale = abs(6.0 * aprime * I22) + abs(term_a)
    return coeff, (abs(coeff) / scale if scale > 0 else 0.0)


def mod_quadrature(frame, thetadot: float, body: ChannelBody,
                   law: AmplitudeLaw | None = None, a: float = 1.0,
                   force_aprime_zero: bool = False,
                   cfg: QuadConfig = QuadConfig()) -> float:
    """The modulated derivative term itself, by quadrature: 6 a' P0'
    plus a theta' (mixed d22 pairing - 12 theta-derivative integral)."""
    law = law or AmplitudeLaw(body)
    aprime = 0.0 if force_aprime_zero else a * law.aprime_over_a(
        frame.theta, thetadot)
    cp = c_star_frame(BoundaryKind.PERP, frame)
    p0 = gap_quad_1d(lambda t: (t - cp) ** 2 / frame.height(t) ** 2, frame)
    from .asymptotics import m_opt_decomposition
    mixed = m_opt_decomposition(frame, c_perp=cp).M_direct
    dth = _dtheta_excess(frame)
    qtheta = gap_quad_1d(
        lambda t: dth(t) * (t - cp) ** 2 / frame.height(t) ** 3, frame)
    return 6.0 * aprime * p0 + a * thetadot * (mixed - 12.0 * qtheta)


def _dtheta_excess(frame):
    """theta-derivative of the gap excess at fixed tau."""
    def fn(t):
        return frame.dtheta_gamma(t) - frame.dx2_dtheta
    return fn


# ---------------------------------------------------------------------------
# Contact potential
# ---------------------------------------------------------------------------

def contact_potential(state: State, body: ChannelBody,
                      model: ResistanceModel, m: float,
                      law: AmplitudeLaw | None = None,
                      a: float | None = None):
    """(P_c0, P_c) at a state.

    P_c0 = 6 int (tau - c*)^2 / H^2; the full potential subtracts the
    momentum pairing of the closure velocity against the unit vertical basis
    field, P_c = a (P_c0 - <v, b_h> - m h'), evaluated in canonical (active
    wall below) variables."""
    frame = model.frame
    if a is None:
        law = law or AmplitudeLaw(body)
        a = float(law.amplitude(frame.theta, 0.0))
    cp = c_star_frame(BoundaryKind.PERP, frame)
    pc0 = 6.0 * gap_quad_1d(
        lambda t: (t - cp) ** 2 / frame.height(t) ** 2, frame)
    sgn = -1.0 if frame.mirrored else 1.0
    hd, td = sgn * state.hdot, sgn * state.thetadot
    momentum = hd * model.L2[0, 0] + td * model.L2[0, 1] + m * hd
    return pc0, a * (pc0 - momentum)


# ---------------------------------------------------------------------------
# Perturbation multiplier field
# ---------------------------------------------------------------------------

class MultiplierField:
    """Solenoidal field equal to h e2 + theta (x - h e2)^perp on the body and
    zero on the channel walls, used by the perturbed-energy construction.

    Stream: zeta(x) b(x) with b = h x1 + theta x1^2/2 + (theta/2)(h - x2)^2
    and a plateau cutoff zeta that is 1 on [-2, 2] x [-L + dmin, L - dmin].
    """

    def __init__(self, pose: Pose, body: ChannelBody, dist_min: float):
        d, _ = distance(pose, body)
        if d < dist_min:
            raise AdmissibilityError(
                "pose too close to a wall for the multiplier cutoff")
        if abs(pose.h) + 1.0 > body.L - dist_min:
            raise AdmissibilityError(
                "multiplier cutoff cannot reach around the body")
        self.pose, self.body, self.dist_min = pose, body, dist_min
        L = body.L
        self.wx = Window(-3.0, -2.0, 2.0, 3.0)
        self.wy = Window(-L + dist_min / 2.0, -L + dist_min,
                         L - dist_min, L - dist_min / 2.0)

    def _b_jet(self, x1, x2) -> Jet:
        h, th = self.pose.h, self.pose.theta
        X = Jet.variable_x(x1, x2)
        Y = Jet.variable_y(x1, x2)
        return h * X + 0.5 * th * (X * X) + 0.5 * th * (h - Y) * (h - Y)

    def _zeta_jet(self, x1, x2) -> Jet:
        jx = Jet.variable_x(x1, x2).compose(
            lambda u: self.wx(u, 0), lambda u: self.wx(u, 1),
            lambda u: self.wx(u, 2))
        jy = Jet.variable_y(x1, x2).compose(
            lambda u: self.wy(u, 0), lambda u: self.wy(u, 1),
            lambda u: self.wy(u, 2))
        return jx * jy

    def velocity(self, x1, x2):
        x1 = np.atleast_1d(np.asarray(x1, float))
        x2 = np.atleast_1d(np.asarray(x2, float))
        psi = self._zeta_jet(x1, x2) * self._b_jet(x1, x2)
        return np.stack([-psi.fy, psi.fx], axis=-1)

    def div_residual(self, x1, x2, step: float = 1e-5):
        v = self.velocity
        d1 = v(np.asarray(x1) + step, x2)[:, 0] - v(np.asarray(x1) - step, x2)[:, 0]
        d2 = v(x1, np.asarray(x2) + step)[:, 1] - v(x1, np.asarray(x2) - step)[:, 1]
        return (d1 + d2) / (2.0 * step)

    def norms(self, n: int = 10):
        """(L2 norm of w, L2 norm of grad w) over the support."""
        L = self.body.L
        xb = np.array([-3.0, -2.0, 0.0, 2.0, 3.0])
        yb = np.array(sorted({-L, -L + self.dist_min / 2.0, -L + self.dist_min,
                              0.0, L - self.dist_min, L - self.dist_min / 2.0,
                              L}))
        xq, xw = panel_nodes(xb, n)
        yq, yw = panel_nodes(yb, n)
        X = np.repeat(xq, yq.size)
        Y = np.tile(yq, xq.size)
        W = np.outer(xw, yw).ravel()
        psi = self._zeta_jet(X, Y) * self._b_jet(X, Y)
        l2 = math.sqrt(float(np.dot(W, psi.fx**2 + psi.fy**2)))
        h1 = math.sqrt(float(np.dot(
            W, psi.fxx**2 + 2.0 * psi.fxy**2 + psi.fyy**2)))
        return l2, h1


def multiplier_field(pose: Pose, body: ChannelBody,
                     dist_min: float) -> MultiplierField:
    return MultiplierField(pose, body, dist_min)


# ---------------------------------------------------------------------------
# Simulation
# ---------------------------------------------------------------------------

@dataclass
class SimConfig:
    params: DimlessParams
    potential: PotentialSpec
    initial: State
    t_end: float
    rtol: float = 1e-8
    atol: float = 1e-10
    omega: float | None = None          # None: calibrate afterwards
    output_stride: int = 1
    theta_max: float = math.pi
    refresh_increment: float = 1e-3
    exact_forces: bool = False
    record_contact: bool = True
    max_step: float = 0.5
    min_step: float = 1e-12
    quad: QuadConfig = field(default_factory=QuadConfig)
    wall_blend: float = 0.05            # |h| band where both wall frames mix
    use_fluid_l2_energy: bool = False


class SimulationAborted(RuntimeError):
    def __init__(self, message: str, record=None):
        super().__init__(message)
        self.record = record


@dataclass
class TrajectoryRecord:
    config: SimConfig
    t: np.ndarray
    h: np.ndarray
    theta: np.ndarray
    hdot: np.ndarray
    thetadot: np.ndarray
    dist: np.ndarray
    E_tot: np.ndarray
    E_kin: np.ndarray
    a: np.ndarray
    P_c0: np.ndarray
    P_c: np.ndarray
    balance_residual: float             # max |dE + dW| over accepted steps
    balance_scale: float                # tolerance scale used for residuals
    n_steps: int
    n_rejected: int
    n_implicit: int
    underflow: bool = False
    omega0: float | None = None

    def E_omega(self, omega: float) -> np.ndarray:
        m, J = self.config.params.m, self.config.params.J
        return self.E_tot + omega * (m * self.h * self.hdot
                                     + J * self.theta * self.thetadot)

    def sandwich_ok(self, omega: float) -> bool:
        Ew = self.E_omega(omega)
        lo = 0.5 * self.E_tot - 1e-13 * (1.0 + self.E_tot)
        hi = 1.5 * self.E_tot + 1e-13 * (1.0 + self.E_tot)
        return bool(np.all((Ew >= lo) & (Ew <= hi)))


class _ForceProvider:
    """Drag/forcing evaluation with pose-increment refresh and linear
    history extrapolation between refreshes; blends the two wall frames on a
    band around the centerline so the closure is continuous in h."""

    def __init__(self, cfg: SimConfig, body: ChannelBody):
        self.cfg = cfg
        self.body = body
        self.params = cfg.params
        self._cal = {}
        self._hist: list[tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = []
        self.n_refresh = 0

    def _calibration(self, wall: str) -> np.ndarray:
        if self.params.lambda0 == 0.0:
            return np.zeros(2)
        if wall not in self._cal:
            from .lubrication import (assemble_resistance, _forcing_raw,
                                      _basis_jets)
            frame0 = make_frame(Pose(0.0, 0.0), self.body, wall=wall)
            _, _, nodes, jets, _ = assemble_resistance(frame0, self.cfg.quad)
            ext0 = ExtensionField(self.params, h=0.0)
            self._cal[wall] = _forcing_raw(frame0, ext0, nodes, jets)
        return self._cal[wall]

    def _assemble(self, q: np.ndarray):
        from .cutoffs import _smoothstep
        from .lubrication import assemble_resistance, _forcing_raw
        pose = Pose(q[0], q[1])
        delta = self.cfg.wall_blend
        if q[0] <= -delta:
            walls = [("lower", 1.0)]
        elif q[0] >= delta:
            walls = [("upper", 1.0)]
        else:
            s = float(_smoothstep((q[0] + delta) / (2.0 * delta), 0))
            walls = [("lower", 1.0 - s), ("upper", s)]
        R = np.zeros((2, 2))
        F = np.zeros(2)
        L2 = np.zeros((2, 2))
        ext = (ExtensionField(self.params, h=pose.h)
               if self.params.lambda0 != 0.0 else None)
        for wall, wgt in walls:
            if wgt == 0.0:
                continue
            frame = make_frame(pose, self.body, wall=wall)
            Rw, L2w, nodes, jets, _ = assemble_resistance(frame, self.cfg.quad)
            if ext is not None:
                Fw = _forcing_raw(frame, ext, nodes, jets) \
                    - self._calibration(wall)
            else:
                Fw = np.zeros(2)
            R += wgt * Rw
            F += wgt * Fw
            L2 += wgt * L2w
        self.n_refresh += 1
        return R, F, L2

    def model_at(self, q: np.ndarray):
        R, F, L2 = self._assemble(q)
        frame = make_frame(Pose(q[0], q[1]), self.body)
        return ResistanceModel(R=R, F_pois=F, L2=L2, frame=frame, d_far=0.0)

    def forces(self, q: np.ndarray):
        if self.cfg.exact_forces:
            R, F, L2 = self._assemble(q)
            return R, F, L2
        if not self._hist:
            self._hist.append((q.copy(), *self._assemble(q)))
        q1, R1, F1, L21 = self._hist[-1]
        if np.linalg.norm(q - q1) > self.cfg.refresh_increment:
            self._hist.append((q.copy(), *self._assemble(q)))
            if len(self._hist) > 2:
                self._hist.pop(0)
            q1, R1, F1, L21 = self._hist[-1]
        if len(self._hist) == 2:
            q0, R0, F0, L20 = self._hist[0]
            dq = q1 - q0
            denom = float(dq @ dq)
            if denom > 0.0:
                s = float((q - q1) @ dq) / denom
                s = min(max(s, -1.0), 1.0)
                R = R1 + s * (R1 - R0)
                if np.linalg.eigvalsh(0.5 * (R + R.T)).min() > 0.0:
                    return (0.5 * (R + R.T), F1 + s * (F1 - F0),
                            L21 + s * (L21 - L20))
        return R1, F1, L21


def _rk45_step(f, t, y, dt):
    """One Dormand-Prince 5(4) step; returns (y5, err_vector)."""
    c = _DP_C
    a = _DP_A
    k = np.empty((7, y.size))
    k[0] = f(t, y)
    for i in range(1, 7):
        k[i] = f(t + c[i] * dt, y + dt * (a[i][: i] @ k[: i]))
    y5 = y + dt * (_DP_B5 @ k)
    err = dt * (_DP_BERR @ k)
    return y5, err


_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_A = [np.array(row) for row in _DP_A]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784,
                   11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640,
                   -92097 / 339200, 187 / 2100, 1 / 40])
_DP_BERR = _DP_B5 - _DP_B4


def _trapezoidal_step(f, t, y, dt, newton_tol=1e-11, iters=12):
    """A-stable trapezoidal step with finite-difference Newton; used when the
    explicit pair thrashes against the near-contact stiffness."""
    f0 = f(t, y)
    z = y + dt * f0                      # explicit Euler predictor
    for _ in range(iters):
        g = z - y - 0.5 * dt * (f0 + f(t + dt, z))
        if np.max(np.abs(g)) < newton_tol * (1.0 + np.max(np.abs(z))):
            break
        Jg = np.eye(y.size)
        eps = 1e-7
        for j in range(y.size):
            zp = z.copy()
            zp[j] += eps * (1.0 + abs(z[j]))
            gp = zp - y - 0.5 * dt * (f0 + f(t + dt, zp))
            Jg[:, j] = (gp - g) / (eps * (1.0 + abs(z[j])))
        z = z - np.linalg.solve(Jg, g)
    return z


def simulate(config: SimConfig) -> TrajectoryRecord:
    """Integrate the reduced model and record the monitored quantities."""
    params = config.params
    body = params.body()
    pot = config.potential
    m, J = params.m, params.J
    provider = _ForceProvider(config, body)
    law = AmplitudeLaw(body)

    def rhs(t, y):
        q = y[:2]
        qd = y[2:4]
        R, F, _ = provider.forces(q)
        gh, gt = pot.grad(q[0], q[1])
        gen = -R @ qd + F - np.array([gh, gt])
        acc = gen / np.array([m, J])
        wdot = qd @ R @ qd - F @ qd
        return np.array([qd[0], qd[1], acc[0], acc[1], wdot])

    s0 = config.initial
    Pose(s0.h, s0.theta).require_admissible(body)
    y = np.array([s0.h, s0.theta, s0.hdot, s0.thetadot, 0.0])
    t = 0.0
    dt = min(config.max_step, 1e-2)

    def energy(yv):
        return (0.5 * (m * yv[2] ** 2 + J * yv[3] ** 2)
                + pot.value(yv[0], yv[1]))

    def gap(yv):
        try:
            return distance(Pose(yv[0], yv[1]), body)[0]
        except AdmissibilityError:
            return -1.0

    rows = []
    models = []
    n_steps = n_rej = n_imp = 0
    implicit_left = 0
    recent = []
    balance = 0.0
    underflow = False
    E_prev = energy(y)
    W_prev = 0.0
    d_prev = gap(y)

    def record(tv, yv):
        d = gap(yv)
        E = energy(yv)
        Ek = 0.5 * (m * yv[2] ** 2 + J * yv[3] ** 2)
        if config.use_fluid_l2_energy:
            _, _, L2 = provider.forces(yv[:2])
            Ek += 0.5 * float(yv[2:4] @ L2 @ yv[2:4])
            E = Ek + pot.value(yv[0], yv[1])
        a = float(law.amplitude(yv[1], 0.0))
        if config.record_contact:
            model = provider.model_at(yv[:2])
            st = State(tv, *yv[:4])
            pc0, pc = contact_potential(st, body, model, m, law=law, a=a)
        else:
            pc0 = pc = float("nan")
        rows.append((tv, yv[0], yv[1], yv[2], yv[3], d, E, Ek, a, pc0, pc))

    record(t, y)
    stride_count = 0
    while t < config.t_end and not underflow:
        dt = min(dt, config.t_end - t)
        use_implicit = implicit_left > 0
        if use_implicit:
            ynew = _trapezoidal_step(rhs, t, y, dt)
            err_ratio = 0.5
            implicit_left -= 1
            n_imp += 1
        else:
            ynew, err = _rk45_step(rhs, t, y, dt)
            scale = config.atol + config.rtol * np.maximum(np.abs(y[:4]),
                                                           np.abs(ynew[:4]))
            err_ratio = float(np.sqrt(np.mean((err[:4] / scale) ** 2)))
        d_new = gap(ynew)
        geom_ok = d_new > 0.0 and (
            d_prev <= 0.0 or abs(d_new - d_prev) <= 0.10 * d_prev)
        accept = err_ratio <= 1.0 and geom_ok
        recent.append(accept)
        if len(recent) > 20:
            recent.pop(0)
        if accept:
            t += dt
            y = ynew
            d_prev = d_new
            n_steps += 1
            E_new = energy(y)
            resid = abs((E_new - E_prev) + (y[4] - W_prev))
            balance = max(balance, resid)
            E_prev, W_prev = E_new, y[4]
            if abs(y[1]) > config.theta_max:
                rec = _finalize(config, rows, balance, n_steps, n_rej, n_imp,
                                underflow)
                raise SimulationAborted(
                    f"|theta| exceeded the guard {config.theta_max}", rec)
            stride_count += 1
            if stride_count >= config.output_stride:
                record(t, y)
                stride_count = 0
            if not use_implicit:
                dt = dt * min(5.0, max(0.2, 0.9 * err_ratio ** -0.2
                                       if err_ratio > 0 else 5.0))
            else:
                dt = min(dt * 1.3, config.max_step)
            dt = min(dt, config.max_step)
        else:
            n_rej += 1
            if not geom_ok:
                dt *= 0.5
            else:
                dt *= min(0.7, max(0.1, 0.9 * err_ratio ** -0.2))
            if dt < config.min_step:
                underflow = True
                break
            if (len(recent) == 20 and sum(recent) < 10
                    and implicit_left == 0):
                implicit_left = 50
                recent.clear()
    if rows[-1][0] < t:
        record(t, y)
    return _finalize(config, rows, balance, n_steps, n_rej, n_imp, underflow)


def _finalize(config, rows, balance, n_steps, n_rej, n_imp, underflow):
    arr = np.array(rows, dtype=float)
    rec = TrajectoryRecord(
        config=config, t=arr[:, 0], h=arr[:, 1], theta=arr[:, 2],
        hdot=arr[:, 3], thetadot=arr[:, 4], dist=arr[:, 5],
        E_tot=arr[:, 6], E_kin=arr[:, 7], a=arr[:, 8],
        P_c0=arr[:, 9], P_c=arr[:, 10],
        balance_residual=balance,
        balance_scale=config.atol + config.rtol * float(np.max(arr[:, 6])),
        n_steps=n_steps, n_rejected=n_rej, n_implicit=n_imp,
        underflow=underflow,
    )
    if config.omega is None:
        rec.omega0 = compute_omega0(rec, config.params.m, config.params.J)
    else:
        rec.omega0 = config.omega
    return rec


def compute_omega0(rec: TrajectoryRecord, m: float, J: float,
                   cap: float = 0.5, tol: float = 1e-6) -> float:
    """Largest omega <= cap keeping E_tot/2 <= E_omega <= 3 E_tot/2 at every
    recorded sample, found by bisection."""
    def ok(om):
        return rec.sandwich_ok(om)

    if ok(cap):
        return cap
    lo, hi = 0.0, cap
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass(frozen=True)
class DecayReport:
    beta_fit: float
    E_floor: float
    dist_min: float
    omega_used: float
    sandwich_ok: bool
    n_samples: int


def decay_diagnostics(rec: TrajectoryRecord,
                      omega: float | None = None) -> DecayReport:
    """Decay-rate fit of the total energy above its floor, the minimal wall
    distance, and the perturbed-energy sandwich check."""
    E = rec.E_tot
    t = rec.t
    tail = max(len(E) // 10, 1)
    floor = float(np.median(E[-tail:]))
    mask = E > max(10.0 * floor, 1e-300)
    if mask.sum() >= 5:
        idx = np.where(~mask)[0]
        stop = idx[0] if idx.size else len(E)
        seg = slice(0, max(stop, 5))
        coef = np.polyfit(t[seg], np.log(np.maximum(E[seg], 1e-300)), 1)
        beta = -float(coef[0])
    else:
        beta = float("nan")
    om = omega if omega is not None else (rec.omega0 or 0.0)
    return DecayReport(
        beta_fit=beta, E_floor=floor, dist_min=float(np.min(rec.dist)),
        omega_used=om, sandwich_ok=rec.sandwich_ok(om),
        n_samples=len(E),
    )


def random_admissible_states(body: ChannelBody, rng: np.random.Generator,
                             n: int, energy: float = 1.0,
                             theta_band: float = 1.0):
    """Admissible initial states with velocities aimed to exercise the wall
    approach; kinetic energy is scaled to `energy` with m = J = 1 weights."""
    out = []
    while len(out) < n:
        h = rng.uniform(-(body.L - body.e - 0.05), body.L - body.e - 0.05)
        th = rng.uniform(-theta_band, theta_band)
        pose = Pose(h, th)
        if not pose.admissible(body):
            continue
        vh = rng.normal()
        vt = rng.normal()
        nrm = math.hypot(vh, vt)
        scale = math.sqrt(2.0 * energy) / nrm if nrm > 0 else 0.0
        out.append(State(0.0, h, th, vh * scale, vt * scale))
    return out
