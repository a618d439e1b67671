"""Independent reference computations for the test-suite.

Nothing here calls into the package under test: integrals are done by
quadrature on plain numpy/scipy expressions.
"""

import math
import warnings

import numpy as np
from scipy import integrate as sp_integrate
from scipy.optimize import minimize_scalar

warnings.filterwarnings("ignore", category=sp_integrate.IntegrationWarning)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(30)


def sinc_kernel(omega, t):
    t = np.asarray(t, dtype=float)
    return (omega / np.pi) * np.sinc(omega * t / np.pi)


def si_quadrature(x):
    """Si(x) by composite 30-point Gauss-Legendre over pieces of length <= pi.

    Each piece holds at most half an oscillation of sin(u)/u, where the
    rule is exact to rounding; pieces are summed with math.fsum.
    """
    x = float(x)
    if x == 0.0:
        return 0.0
    sign = 1.0 if x > 0 else -1.0
    ax = abs(x)
    n = max(1, math.ceil(ax / math.pi))
    edges = np.linspace(0.0, ax, n + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    u = 0.5 * (lo + hi) + 0.5 * (hi - lo) * _GL_NODES
    vals = np.sinc(u / np.pi) * (0.5 * (hi - lo)) * _GL_WEIGHTS
    return sign * math.fsum(vals.ravel())


def si_adaptive(x):
    """Si(x) by scipy's adaptive quadrature (moderate |x| only)."""
    val, _ = sp_integrate.quad(lambda u: np.sinc(u / np.pi), 0.0, x, epsabs=1e-13, epsrel=1e-13, limit=500)
    return val


def signal_values(omega, t0, coeffs, t):
    coeffs = np.asarray(coeffs, dtype=float)
    tk = t0 + np.arange(1, coeffs.size + 1) * np.pi / omega
    t = np.asarray(t, dtype=float)
    return sinc_kernel(omega, t[..., None] - tk) @ coeffs


def integral_quadrature(omega, t0, coeffs, a, b):
    """int_a^b of a sinc sum, split at every grid spacing for quad."""
    if b <= a:
        return 0.0
    spacing = np.pi / omega
    n = max(1, math.ceil((b - a) / spacing))
    edges = np.linspace(a, b, n + 1)
    parts = [
        sp_integrate.quad(lambda u: float(signal_values(omega, t0, coeffs, u)), lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
        for lo, hi in zip(edges[:-1], edges[1:])
    ]
    return math.fsum(parts)


def rect_lowpass_numeric(omega, start, end, height, t):
    """(height * 1_[start,end)) convolved with sinc_omega, evaluated at t."""
    val, _ = sp_integrate.quad(lambda u: sinc_kernel(omega, t - u), start, end, epsabs=1e-13, epsrel=1e-13, limit=200)
    return height * val


def max_abs_dense(omega, t0, coeffs, lo, hi, n=20001):
    """max |x(t)| on [lo, hi]: dense grid, then golden-section refinement."""
    ts = np.linspace(lo, hi, n)
    vals = np.abs(signal_values(omega, t0, coeffs, ts))
    i = int(np.argmax(vals))
    a, b = ts[max(i - 1, 0)], ts[min(i + 1, n - 1)]
    opt = minimize_scalar(
        lambda t: -abs(float(signal_values(omega, t0, coeffs, t))), bounds=(a, b), method="bounded",
        options={"xatol": 1e-12},
    )
    return max(vals[i], -opt.fun)
