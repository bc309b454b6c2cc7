"""Ring cutoffs and smooth blends shared across modules.

chi0: 1 on [0, 13/14] and [14/13, inf), 0 on [15/16, 16/15]   (tight external)
chi1: 1 on [0, 1/4]  and [4, inf),     0 on [1/2, 2]          (wide external)
psi : 0 on [0, 1/4]  and [3, inf),     r on [1/2, 2]          (internal)
phi3: 1 on [0, 1], 0 on [2, inf)                               (radiative window)
phi4: 0 on [0, 1/2], 1 on [3, inf), increasing                 (far-field window)

The bands left open are filled with the quintic smoothstep, which keeps two
continuous derivatives (needed wherever Laplacians of the cutoffs appear).
"""

from __future__ import annotations

import numpy as np


def smoothstep(x):
    """Quintic smoothstep: 0 for x<=0, 1 for x>=1, C^2 across the ends."""
    x = np.clip(x, 0.0, 1.0)
    return x * x * x * (10.0 + x * (-15.0 + 6.0 * x))


def smoothstep_d1(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 30.0 * x ** 2 * (1.0 - x) ** 2, 0.0)


def smoothstep_d2(x):
    x = np.asarray(x, dtype=float)
    inside = (x > 0.0) & (x < 1.0)
    return np.where(inside, 60.0 * x * (1.0 - 3.0 * x + 2.0 * x ** 2), 0.0)


def _plateau(r, lo0, lo1, hi0, hi1):
    """1 on [lo1, hi0], 0 outside [lo0, hi1], smoothstep blends between."""
    r = np.asarray(r, dtype=float)
    up = smoothstep((r - lo0) / (lo1 - lo0))
    down = smoothstep((hi1 - r) / (hi1 - hi0))
    return up * down


def chi0(r):
    """Tight external cutoff around the ring (complement of a thin annulus)."""
    return 1.0 - _plateau(r, 13.0 / 14.0, 15.0 / 16.0, 16.0 / 15.0, 14.0 / 13.0)


def chi1(r):
    """Wide external cutoff: kills the annulus [1/2, 2]."""
    return 1.0 - _plateau(r, 0.25, 0.5, 2.0, 4.0)


def psi(r):
    """Internal cutoff: equals r on [1/2, 2], vanishes near axis and far out."""
    return np.asarray(r, dtype=float) * _plateau(r, 0.25, 0.5, 2.0, 3.0)


def psi_d1(r):
    r = np.asarray(r, dtype=float)
    p = _plateau(r, 0.25, 0.5, 2.0, 3.0)
    dp = (smoothstep_d1((r - 0.25) / 0.25) / 0.25 * smoothstep((3.0 - r) / 1.0)
          - smoothstep((r - 0.25) / 0.25) * smoothstep_d1((3.0 - r) / 1.0) / 1.0)
    return p + r * dp


def phi3(x):
    """Radial window: 1 for x <= 1, 0 for x >= 2."""
    return smoothstep(2.0 - np.asarray(x, dtype=float))


def _quintic_hermite(t, y0, d0, y1, d1):
    """C^2 quintic on t in [0,1] with zero end curvature."""
    t = np.clip(t, 0.0, 1.0)
    h00 = 1 - 10 * t**3 + 15 * t**4 - 6 * t**5
    h10 = t - 6 * t**3 + 8 * t**4 - 3 * t**5
    h01 = 10 * t**3 - 15 * t**4 + 6 * t**5
    h11 = -4 * t**3 + 7 * t**4 - 3 * t**5
    return y0 * h00 + d0 * h10 + y1 * h01 + d1 * h11


def phi4(x):
    """Increasing far-field window: 0 for x <= 1/2, 1 for x >= 3.

    Constant slope 3/8 on [1, 2] keeps the derivative inside [1/4, 1/2] there;
    quintic Hermite blends on [1/2, 1] and [2, 3].
    """
    x = np.asarray(x, dtype=float)
    lo = _quintic_hermite((x - 0.5) / 0.5, 0.0, 0.0, 0.3125, 0.375 * 0.5)
    mid = 0.3125 + 0.375 * (x - 1.0)
    hi = _quintic_hermite(x - 2.0, 0.6875, 0.375, 1.0, 0.0)
    out = np.where(x <= 1.0, lo, np.where(x <= 2.0, mid, hi))
    return np.where(x <= 0.5, 0.0, np.where(x >= 3.0, 1.0, out))
