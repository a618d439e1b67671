"""Finite sinc sums on a uniform grid, plus rectangle-corrected variants.

A signal here is ``x(t) = sum_k c_k sinc_W(t - t_k)`` with
``sinc_W(t) = sin(W t) / (pi t)`` and grid points ``t_k = t0 + k pi / W``
for ``k = 1..K``. Everything (point values, integrals over intervals and the
low-pass projection of rectangle pulses) has a closed form in terms of the
sine integral, so nothing in this module uses quadrature.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .special import sine_integral

__all__ = [
    "SincGrid",
    "SincSignal",
    "VectorSignal",
    "Rectangle",
    "HybridSignal",
    "sinc_eval",
    "sine_integral",
    "evaluate",
    "integrate",
    "atom_integrals",
    "bandlimit_sample",
]


def _frozen_array(values, ndim=1):
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class SincGrid:
    """Uniform grid of sinc atoms.

    Attributes
    ----------
    omega : float
        Bandwidth parameter in rad/s; atoms are ``sinc_omega``.
    t0 : float
        Grid origin. The first atom sits at ``t0 + pi/omega``.
    count : int
        Number of atoms K.
    """

    omega: float
    t0: float
    count: int

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"count must be a positive integer, got {self.count}")
        object.__setattr__(self, "omega", float(self.omega))
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "count", int(self.count))

    @property
    def spacing(self):
        return np.pi / self.omega

    @property
    def points(self):
        return self.t0 + np.arange(1, self.count + 1) * self.spacing

    @property
    def atom_energy(self):
        # <sinc_W(. - t_k), sinc_W(. - t_m)> = sinc_W(t_k - t_m) = (W/pi) delta_km
        return self.omega / np.pi

    @property
    def window(self):
        """Interval ``[t0, t0 + (K+1) pi/omega]`` spanned by the atoms."""
        return self.t0, self.t0 + (self.count + 1) * self.spacing


@dataclass(frozen=True, eq=False)
class SincSignal:
    grid: SincGrid
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = _frozen_array(self.coeffs)
        if coeffs.shape[0] != self.grid.count:
            raise ValueError(
                f"expected {self.grid.count} coefficients, got {coeffs.shape[0]}"
            )
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.count))

    def __call__(self, t):
        return evaluate(self, t)

    def to_dict(self):
        return {
            "omega": self.grid.omega,
            "t0": self.grid.t0,
            "coeffs": [float(c) for c in self.coeffs],
        }

    @classmethod
    def from_dict(cls, data):
        coeffs = list(data["coeffs"])
        return cls(SincGrid(data["omega"], data["t0"], len(coeffs)), coeffs)


@dataclass(frozen=True, eq=False)
class VectorSignal:
    """A stack of sinc signals on one shared grid.

    Used both for the sources ``x(t)`` (J rows) and for the machine
    inputs ``y(t)`` (I rows).
    """

    grid: SincGrid
    rows: tuple

    def __post_init__(self):
        rows = tuple(self.rows)
        for row in rows:
            if row.grid != self.grid:
                raise ValueError("all rows of a VectorSignal must share its grid")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def from_matrix(cls, grid, coeffs):
        coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
        return cls(grid, tuple(SincSignal(grid, row) for row in coeffs))

    @property
    def matrix(self):
        """Coefficient matrix of shape (rows, K)."""
        if not self.rows:
            return np.zeros((0, self.grid.count))
        return np.stack([row.coeffs for row in self.rows])

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i):
        return self.rows[i]

    def __iter__(self):
        return iter(self.rows)

    def to_dict(self):
        return {
            "omega": self.grid.omega,
            "t0": self.grid.t0,
            "signals": [[float(c) for c in row.coeffs] for row in self.rows],
        }

    @classmethod
    def from_dict(cls, data):
        signals = data["signals"]
        if not signals:
            raise ValueError("VectorSignal needs at least one signal")
        grid = SincGrid(data["omega"], data["t0"], len(signals[0]))
        return cls.from_matrix(grid, signals)

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class Rectangle:
    """Pulse of total area `weight` supported on ``[start, end)``."""

    start: float
    end: float
    weight: float

    def __post_init__(self):
        if not self.end > self.start:
            raise ValueError(f"empty rectangle [{self.start}, {self.end})")

    @property
    def height(self):
        return self.weight / (self.end - self.start)


@dataclass(frozen=True, eq=False)
class HybridSignal:
    base: SincSignal
    rects: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "rects", tuple(self.rects))

    @property
    def grid(self):
        return self.base.grid

    def __call__(self, t):
        return evaluate(self, t)


def sinc_eval(omega, t):
    """``sin(omega t) / (pi t)`` with the limit ``omega/pi`` at ``t = 0``."""
    t = np.asarray(t, dtype=float)
    # np.sinc(x) = sin(pi x)/(pi x)
    out = (omega / np.pi) * np.sinc(omega * t / np.pi)
    return float(out) if out.ndim == 0 else out


def _as_parts(sig):
    if isinstance(sig, HybridSignal):
        return sig.base, sig.rects
    return sig, ()


def evaluate(sig, t):
    """Point value(s) of a `SincSignal` or `HybridSignal` at `t`."""
    base, rects = _as_parts(sig)
    t = np.asarray(t, dtype=float)
    grid = base.grid
    atoms = sinc_eval(grid.omega, t[..., None] - grid.points)
    out = np.asarray(atoms @ base.coeffs, dtype=float)
    for r in rects:
        out = out + np.where((t >= r.start) & (t < r.end), r.height, 0.0)
    return float(out) if out.ndim == 0 else out


def atom_integrals(grid, a, b):
    """Integrals of every atom over intervals.

    Returns an array of shape ``(len(a), K)`` whose entry ``[l, k]`` is
    ``int_{a_l}^{b_l} sinc_W(u - t_k) du
    = (Si(W (b_l - t_k)) - Si(W (a_l - t_k))) / pi``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))[:, None]
    b = np.atleast_1d(np.asarray(b, dtype=float))[:, None]
    tk = grid.points[None, :]
    w = grid.omega
    return (sine_integral(w * (b - tk)) - sine_integral(w * (a - tk))) / np.pi


def _overlap(a, b, start, end):
    return np.clip(np.minimum(b, end) - np.maximum(a, start), 0.0, None)


def integrate(sig, a, b):
    """Exact integral of `sig` over ``[a, b]``.

    `a` and `b` may be arrays of equal shape, giving one integral per pair.
    """
    base, rects = _as_parts(sig)
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if np.any(b_arr < a_arr):
        raise ValueError("integrate requires b >= a")
    shape = np.broadcast(a_arr, b_arr).shape
    a_flat = np.broadcast_to(a_arr, shape).ravel()
    b_flat = np.broadcast_to(b_arr, shape).ravel()
    out = atom_integrals(base.grid, a_flat, b_flat) @ base.coeffs
    for r in rects:
        out = out + r.height * _overlap(a_flat, b_flat, r.start, r.end)
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def rect_lowpass_samples(grid, start, end):
    """Samples at the grid points of ``1_[start, end) * sinc_W``.

    Returns shape ``(len(start), K)``; entry ``[l, k]`` is
    ``int_{start_l}^{end_l} sinc_W(t_k - u) du``, i.e. the unit-height pulse
    passed through the ideal low-pass filter and read at ``t_k``.
    """
    # sinc is even, so this is the same closed form as the atom integral
    return atom_integrals(grid, start, end)


def bandlimit_sample(sig):
    """Orthogonal projection of `sig` onto the span of the grid's sinc atoms.

    The input is low-pass filtered with ``sinc_W`` and read at the grid
    points; the returned coefficients are those samples scaled by
    ``pi/W`` so that the map is idempotent (a sinc sum on the grid is
    returned unchanged). With ``W = pi`` the scale is one and the new
    coefficient is exactly the filtered sample.

    Parameters
    ----------
    sig : SincSignal or HybridSignal

    Returns
    -------
    SincSignal
    """
    base, rects = _as_parts(sig)
    grid = base.grid
    # sinc_W * sinc_W = sinc_W: the sinc part is a fixed point
    coeffs = base.coeffs
    if rects:
        starts = np.array([r.start for r in rects])
        ends = np.array([r.end for r in rects])
        heights = np.array([r.height for r in rects])
        samples = heights @ rect_lowpass_samples(grid, starts, ends)
        coeffs = coeffs + samples / grid.atom_energy
    return SincSignal(grid, coeffs)
