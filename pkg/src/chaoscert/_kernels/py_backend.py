"""Pure-Python implementations of the hot kernels.

The compiled backend (:mod:`chaoscert._kernels._fast`) mirrors these
functions operation for operation, so both produce bitwise-identical
binary64 results; the validated radius bookkeeping lives above the
kernel either way.
"""

from __future__ import annotations

import numpy as np


def rk4_orbit(x0: np.ndarray, h: float, k: int,
              s: float, R: float, q: float) -> np.ndarray:
    """k classical RK4 steps of the Lorenz field from x0.

    Returns a (k+1, 3) float64 array whose first row is x0.  Plain
    round-to-nearest binary64; the caller accounts for rounding in the
    validated radius.
    """
    out = np.empty((k + 1, 3), dtype=np.float64)
    x, y, z = float(x0[0]), float(x0[1]), float(x0[2])
    out[0] = (x, y, z)
    h2 = 0.5 * h
    h6 = h / 6.0
    for i in range(k):
        k1x = s * (y - x)
        k1y = R * x - y - x * z
        k1z = x * y - q * z
        ax = x + h2 * k1x
        ay = y + h2 * k1y
        az = z + h2 * k1z
        k2x = s * (ay - ax)
        k2y = R * ax - ay - ax * az
        k2z = ax * ay - q * az
        bx = x + h2 * k2x
        by = y + h2 * k2y
        bz = z + h2 * k2z
        k3x = s * (by - bx)
        k3y = R * bx - by - bx * bz
        k3z = bx * by - q * bz
        cx = x + h * k3x
        cy = y + h * k3y
        cz = z + h * k3z
        k4x = s * (cy - cx)
        k4y = R * cx - cy - cx * cz
        k4z = cx * cy - q * cz
        x = x + h6 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
        y = y + h6 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        z = z + h6 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        out[i + 1] = (x, y, z)
    return out
