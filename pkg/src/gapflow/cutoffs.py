"""Piecewise-quintic C^2 cutoff profiles.

All cutoffs in the package are built from the quintic smoothstep
6 t^5 - 15 t^4 + 10 t^3, which interpolates 0 -> 1 on [0, 1] with vanishing
first and second derivatives at both ends.  Derivatives up to third order are
exposed (the third is discontinuous at the junctions, which only matters for
almost-everywhere evaluations under integrals).
"""

from __future__ import annotations

import numpy as np

_C = (0.0, 0.0, 0.0, 10.0, -15.0, 6.0)


def _smoothstep(t, order: int):
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    if order == 0:
        return ((6.0 * t - 15.0) * t + 10.0) * t**3
    if order == 1:
        return ((30.0 * t - 60.0) * t + 30.0) * t**2
    if order == 2:
        return ((120.0 * t - 180.0) * t + 60.0) * t
    if order == 3:
        inside = (t > 0.0) & (t < 1.0)
        return np.where(inside, (360.0 * t - 360.0) * t + 60.0, 0.0)
    raise ValueError(f"order {order} not available")


class Step:
    """Monotone ramp: 0 for x <= lo, 1 for x >= hi (rising=True), or the
    mirror image (rising=False)."""

    def __init__(self, lo: float, hi: float, rising: bool = True):
        if not hi > lo:
            raise ValueError("need hi > lo")
        self.lo, self.hi, self.rising = lo, hi, rising
        self._w = hi - lo

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        if self.rising:
            t = (x - self.lo) / self._w
            return _smoothstep(t, order) / self._w**order
        t = (self.hi - x) / self._w
        return _smoothstep(t, order) * (-1.0 / self._w) ** order


class Window:
    """Plateau bump: 0 outside [a0, b0], 1 on [a1, b1], quintic ramps between."""

    def __init__(self, a0: float, a1: float, b1: float, b0: float):
        if not a0 < a1 <= b1 < b0:
            raise ValueError("need a0 < a1 <= b1 < b0")
        self.a0, self.a1, self.b1, self.b0 = a0, a1, b1, b0

    def __call__(self, x, order: int = 0):
        x = np.asarray(x, dtype=float)
        up = _smoothstep((x - self.a0) / (self.a1 - self.a0), order)
        up = up / (self.a1 - self.a0) ** order
        dn = _smoothstep((self.b0 - x) / (self.b0 - self.b1), order)
        dn = dn * (-1.0) ** order / (self.b0 - self.b1) ** order
        mid_plateau = 1.0 if order == 0 else 0.0
        out = np.where(x < self.a1, up, np.where(x <= self.b1, mid_plateau, dn))
        return out

    def junctions(self):
        return (self.a0, self.a1, self.b1, self.b0)
