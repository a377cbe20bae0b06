"""Hot pointwise/per-mode kernels, numba-jitted when available.

The pure-numpy implementations are always importable; the jitted variants are
selected at import time unless the environment variable ``QINS_NUMBA`` is set
to ``0`` (or numba is missing).  ``benchmarks/bench_kernels.py`` compares the
two paths.
"""

import os

import numpy as np

__all__ = [
    "NUMBA_ENABLED",
    "smooth_clamp",
    "smooth_clamp_deriv",
    "block2_solve",
    "smooth_clamp_numpy",
    "smooth_clamp_deriv_numpy",
    "block2_solve_numpy",
]


def _numba_requested() -> bool:
    flag = os.environ.get("QINS_NUMBA", "1").strip().lower()
    return flag not in ("0", "false", "off", "no")


# Saturation ramp: P(t) = t - 2.5 t^4 + 3 t^5 - t^6 on [0, 1].
# P(0)=0, P'(0)=1, P''(0)=P'''(0)=0 and P'(1)=P''(1)=P'''(1)=0, P(1)=1/2,
# i.e. the antiderivative of 1 - smoothstep5, so the clamp below is C^3.


def smooth_clamp_numpy(x, hi, band):
    """Odd C^3 saturation: identity on [-hi, hi], constant beyond hi + band.

    Saturating value is hi + band/2.  `band` must be positive.
    """
    x = np.asarray(x, dtype=np.float64)
    out = x.copy()
    ax = np.abs(x)
    ramp = ax > hi
    t = np.minimum((ax[ramp] - hi) / band, 1.0)
    p = t * (1.0 + t**3 * (-2.5 + t * (3.0 - t)))
    out[ramp] = np.sign(x[ramp]) * (hi + band * p)
    return out


def smooth_clamp_deriv_numpy(x, hi, band):
    """Derivative of :func:`smooth_clamp_numpy` (1 inside, 0 past the ramp)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.ones_like(x)
    ax = np.abs(x)
    ramp = ax > hi
    t = np.minimum((ax[ramp] - hi) / band, 1.0)
    out[ramp] = 1.0 + t**3 * (-10.0 + t * (15.0 - 6.0 * t))
    return out


def block2_solve_numpy(a11, a12, a21, a22, b1, b2):
    """Solve per-entry 2x2 systems [[a11,a12],[a21,a22]] x = (b1,b2).

    All arguments are same-shape arrays (real or complex); singular entries
    are the caller's responsibility.  Returns (x1, x2).
    """
    det = a11 * a22 - a12 * a21
    x1 = (b1 * a22 - b2 * a12) / det
    x2 = (b2 * a11 - b1 * a21) / det
    return x1, x2


NUMBA_ENABLED = False

if _numba_requested():
    try:
        from numba import njit

        @njit(cache=True)
        def _smooth_clamp_nb(x, hi, band):
            out = np.empty_like(x)
            for i in range(x.size):
                v = x.flat[i]
                a = abs(v)
                if a <= hi:
                    out.flat[i] = v
                else:
                    t = (a - hi) / band
                    if t > 1.0:
                        t = 1.0
                    p = t * (1.0 + t**3 * (-2.5 + t * (3.0 - t)))
                    s = 1.0 if v > 0.0 else -1.0
                    out.flat[i] = s * (hi + band * p)
            return out

        @njit(cache=True)
        def _smooth_clamp_deriv_nb(x, hi, band):
            out = np.empty_like(x)
            for i in range(x.size):
                a = abs(x.flat[i])
                if a <= hi:
                    out.flat[i] = 1.0
                else:
                    t = (a - hi) / band
                    if t > 1.0:
                        t = 1.0
                    out.flat[i] = 1.0 + t**3 * (-10.0 + t * (15.0 - 6.0 * t))
            return out

        @njit(cache=True)
        def _block2_solve_nb(a11, a12, a21, a22, b1, b2):
            x1 = np.empty_like(b1)
            x2 = np.empty_like(b2)
            for i in range(b1.size):
                det = a11.flat[i] * a22.flat[i] - a12.flat[i] * a21.flat[i]
                x1.flat[i] = (b1.flat[i] * a22.flat[i] - b2.flat[i] * a12.flat[i]) / det
                x2.flat[i] = (b2.flat[i] * a11.flat[i] - b1.flat[i] * a21.flat[i]) / det
            return x1, x2

        def smooth_clamp(x, hi, band):
            return _smooth_clamp_nb(np.ascontiguousarray(x, dtype=np.float64), hi, band)

        def smooth_clamp_deriv(x, hi, band):
            return _smooth_clamp_deriv_nb(
                np.ascontiguousarray(x, dtype=np.float64), hi, band
            )

        def block2_solve(a11, a12, a21, a22, b1, b2):
            args = np.broadcast_arrays(a11, a12, a21, a22, b1, b2)
            args = [np.ascontiguousarray(a) for a in args]
            return _block2_solve_nb(*args)

        NUMBA_ENABLED = True
    except ImportError:
        pass

if not NUMBA_ENABLED:
    smooth_clamp = smooth_clamp_numpy
    smooth_clamp_deriv = smooth_clamp_deriv_numpy
    block2_solve = block2_solve_numpy
