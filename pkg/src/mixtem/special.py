"""Sine integral Si(x) = int_0^x sin(u)/u du, vectorised over numpy arrays.

Small arguments use the Maclaurin series (Horner form in x**2). Larger
arguments go through the auxiliary functions f, g with
``Si(x) = pi/2 - f(x) cos(x) - g(x) sin(x)``. The reference for f and g
is the continued fraction of ``E1(ix) = (g - i f) exp(-ix)``, evaluated by
the modified Lentz method. Since that loop is slow in numpy, at import the
scaled functions ``x f(x)`` and ``x**2 g(x)`` are sampled from it at
Chebyshev nodes in ``s = 4/x`` and evaluation uses the resulting
piecewise Chebyshev series.
"""

import numpy as np
from numpy.polynomial import chebyshev as cheb

__all__ = ["sine_integral", "aux_fg", "SERIES_CUTOFF"]

SERIES_CUTOFF = 4.0

_EPS = np.finfo(float).eps
_TINY = 1e-300
_MAX_CF_TERMS = 500

# pieces in s = SERIES_CUTOFF / x, finer near s = 1 where f, g bend most
_S_BREAKS = (0.0, 0.0625, 0.125, 0.25, 0.375, 0.5, 0.625, 0.75, 0.875, 1.0)
_CHEB_DEGREE = 18


def _series_coefficients(n_terms):
    # term n: (-1)^n / ((2n+1) (2n+1)!)
    coeffs = []
    fact = 1.0
    for n in range(n_terms):
        m = 2 * n + 1
        if n > 0:
            fact *= (m - 1) * m
        coeffs.append((-1) ** n / (m * fact))
    return np.array(coeffs[::-1])


# 4**(2n+1) / ((2n+1)(2n+1)!) drops below 1e-18 well before n = 20
_SERIES = _series_coefficients(20)


def _si_series(x):
    return x * np.polyval(_SERIES, x * x)


def aux_fg(x):
    """Auxiliary functions f(x), g(x) for x > 0 by continued fraction.

    Slow reference path; `sine_integral` uses fitted tables instead.
    """
    x = np.asarray(x, dtype=float)
    b = 1.0 + 1j * x
    c = np.full(x.shape, 1.0 / _TINY, dtype=complex)
    d = 1.0 / b
    h = d.copy()
    active = np.ones(x.shape, dtype=bool)
    for i in range(2, _MAX_CF_TERMS):
        a = -float((i - 1) ** 2)
        b = b + 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h = np.where(active, h * delta, h)
        active &= np.abs(delta - 1.0) >= _EPS
        if not active.any():
            break
    else:
        raise ArithmeticError("sine integral continued fraction did not converge")
    # Lentz gives exp(ix) E1(ix) = g - i f
    return -h.imag, h.real


def _fit_tables():
    breaks = np.array(_S_BREAKS)
    nodes = np.cos(np.pi * (np.arange(_CHEB_DEGREE + 1) + 0.5) / (_CHEB_DEGREE + 1))
    coeffs = np.empty((len(breaks) - 1, _CHEB_DEGREE + 1, 2))
    for j, (lo, hi) in enumerate(zip(breaks[:-1], breaks[1:])):
        # s = 0 is x = inf, never sampled: Chebyshev nodes are interior
        s = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes
        x = SERIES_CUTOFF / s
        f, g = aux_fg(x)
        coeffs[j, :, 0] = cheb.chebfit(nodes, x * f, _CHEB_DEGREE)
        coeffs[j, :, 1] = cheb.chebfit(nodes, x * x * g, _CHEB_DEGREE)
    return breaks, coeffs


_BREAKS, _COEFFS = _fit_tables()


def _aux_fg_fast(x):
    s = SERIES_CUTOFF / x
    piece = np.clip(np.searchsorted(_BREAKS, s, side="right") - 1, 0, len(_BREAKS) - 2)
    lo, hi = _BREAKS[piece], _BREAKS[piece + 1]
    u = ((2.0 * s - (lo + hi)) / (hi - lo))[:, None]
    c = _COEFFS[piece]
    # Clenshaw recurrence for x f and x^2 g together
    b1 = np.zeros((x.size, 2))
    b2 = np.zeros((x.size, 2))
    for k in range(_CHEB_DEGREE, 0, -1):
        b1, b2 = 2.0 * u * b1 - b2 + c[:, k], b1
    scaled = u * b1 - b2 + c[:, 0]
    return scaled[:, 0] / x, scaled[:, 1] / (x * x)


def _si_large(x):
    f, g = _aux_fg_fast(x)
    return 0.5 * np.pi - f * np.cos(x) - g * np.sin(x)


def sine_integral(x):
    """Sine integral Si(x).

    Parameters
    ----------
    x : float or array_like
        Real argument(s).

    Returns
    -------
    float or numpy.ndarray
        Si(x), same shape as `x`. Odd symmetry is exact: the value is
        computed on ``|x|`` and the sign reapplied.
    """
    arr = np.asarray(x, dtype=float)
    ax = np.abs(arr)
    out = np.empty_like(ax)
    small = ax <= SERIES_CUTOFF
    if small.any():
        out[small] = _si_series(ax[small])
    large = ~small
    if large.any():
        out[large] = _si_large(ax[large])
    out = np.copysign(out, arr)
    if out.ndim == 0:
        return float(out)
    return out
