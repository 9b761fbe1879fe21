"""Quadrature and fitting helpers for near-singular gap integrals.

Gap integrands peak on a width-sqrt(dist) neighbourhood of the contact point,
so panels are graded geometrically from that scale outwards.  Composite
Gauss-Legendre on such panels converges spectrally per panel; a single
refinement pass certifies the requested relative tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class QuadratureError(RuntimeError):
    """Requested tolerance could not be certified by refinement."""


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _gauss(n: int):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


def panel_nodes(breaks, n: int):
    """Nodes and weights of composite n-point Gauss-Legendre over the panels
    defined by the sorted breakpoints."""
    breaks = np.asarray(breaks, dtype=float)
    x, w = _gauss(n)
    a, b = breaks[:-1], breaks[1:]
    half = 0.5 * (b - a)
    mid = 0.5 * (a + b)
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def geometric_breaks(inner: float, outer: float, ratio: float = 2.0):
    """Symmetric breakpoints 0, +/-inner, +/-ratio*inner, ... up to +/-outer."""
    if inner >= outer:
        return np.array([-outer, 0.0, outer])
    pts = [inner]
    while pts[-1] * ratio < outer:
        pts.append(pts[-1] * ratio)
    pts.append(outer)
    pos = np.asarray(pts)
    return np.concatenate([-pos[::-1], [0.0], pos])


def gap_breaks(dist: float, tau_max: float, extra=()):
    """Breakpoints for gap integrals: geometric from sqrt(dist), plus any
    requested junction abscissae (cutoff switch points and the like)."""
    inner = min(np.sqrt(max(dist, 1e-300)), tau_max / 4.0)
    base = geometric_breaks(inner, tau_max)
    if extra:
        extra = [e for e in np.atleast_1d(extra) if -tau_max < e < tau_max]
        base = np.unique(np.concatenate([base, extra]))
    return base


def adaptive_panel_quad(fn, breaks, rel_tol: float = 1e-10, n0: int = 16,
                        max_refine: int = 4, abs_scale: float = 0.0):
    """Integrate a vectorized integrand over fixed panels, refining the
    per-panel Gauss order (and splitting panels) until two successive levels
    agree to rel_tol.

    abs_scale sets the magnitude against which near-total cancellation is
    judged (integrals whose true value is zero never converge relatively).
    """
    breaks = np.asarray(breaks, dtype=float)
    prev = None
    n = n0
    for level in range(max_refine + 1):
        nodes, weights = panel_nodes(breaks, n)
        fv = fn(nodes)
        val = float(np.dot(fv, weights))
        if abs_scale == 0.0:
            abs_scale_eff = float(np.dot(np.abs(fv), np.abs(weights))) * 5e-14
        else:
            abs_scale_eff = abs_scale * rel_tol
        if prev is not None:
            scale = max(abs(val), abs(prev), 1e-300)
            if abs(val - prev) <= max(rel_tol * scale, abs_scale_eff):
                return val
        prev = val
        n += 12
        if level == 1:
            breaks = np.unique(np.concatenate([breaks,
                                               0.5 * (breaks[:-1] + breaks[1:])]))
    raise QuadratureError(
        f"panel quadrature stalled at rel err ~ "
        f"{abs(val - prev) / max(abs(val), 1e-300):.2e}"
    )


def panel_quad(fn, breaks, n: int = 32) -> float:
    """Fixed-rule composite Gauss quadrature (no certification); for
    normalizers and kinked integrands where spectral refinement stalls."""
    nodes, weights = panel_nodes(np.asarray(breaks, dtype=float), n)
    return float(np.dot(fn(nodes), weights))


@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    n_used: int
    residual: float


def fit_exponent(dists, values, drop_largest_decade: bool = True) -> ExponentFit:
    """Log-log least-squares slope of |values| against dists.

    The largest decade of the sweep is excluded when enough points remain:
    order-one corrections pollute the slope there while the small-dist end is
    clean.
    """
    d = np.asarray(dists, dtype=float)
    v = np.abs(np.asarray(values, dtype=float))
    mask = v > 0
    d, v = d[mask], v[mask]
    if d.size < 3:
        raise ValueError("need at least three nonzero samples to fit a slope")
    if drop_largest_decade:
        keep = d <= d.max() / 10.0
        if keep.sum() >= 3:
            d, v = d[keep], v[keep]
    ld, lv = np.log(d), np.log(v)
    A = np.vstack([ld, np.ones_like(ld)]).T
    coef, res, *_ = np.linalg.lstsq(A, lv, rcond=None)
    resid = float(np.sqrt(res[0] / ld.size)) if res.size else 0.0
    return ExponentFit(slope=float(coef[0]), intercept=float(coef[1]),
                       n_used=int(ld.size), residual=resid)


def sqrt_limit(dists, values, n_points: int = 3) -> float:
    """Extrapolated limit of values(d) as d -> 0 assuming an O(sqrt(d))
    correction; least squares in sqrt(d) on the smallest samples."""
    d = np.asarray(dists, dtype=float)
    v = np.asarray(values, dtype=float)
    order = np.argsort(d)
    d, v = d[order][:n_points], v[order][:n_points]
    A = np.vstack([np.ones_like(d), np.sqrt(d)]).T
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(coef[0])
