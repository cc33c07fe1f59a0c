# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled mirror of :mod:`chaoscert._kernels.py_backend`.

Every arithmetic operation appears in the same order and association as
in the pure-Python version, and the extension is built with floating
point contraction disabled, so both backends produce bitwise-identical
binary64 orbits.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def rk4_orbit(x0, double h, int k, double s, double R, double q):
    """k classical RK4 steps of the Lorenz field from x0.

    Returns a (k+1, 3) float64 array whose first row is x0.  Plain
    round-to-nearest binary64; the caller accounts for rounding in the
    validated radius.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((k + 1, 3),
                                                           dtype=np.float64)
    cdef double x = float(x0[0])
    cdef double y = float(x0[1])
    cdef double z = float(x0[2])
    cdef double h2 = 0.5 * h
    cdef double h6 = h / 6.0
    cdef double k1x, k1y, k1z, k2x, k2y, k2z, k3x, k3y, k3z, k4x, k4y, k4z
    cdef double ax, ay, az, bx, by, bz, cx, cy, cz
    cdef int i
    out[0, 0] = x
    out[0, 1] = y
    out[0, 2] = z
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
        out[i + 1, 0] = x
        out[i + 1, 1] = y
        out[i + 1, 2] = z
    return out
