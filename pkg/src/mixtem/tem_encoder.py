"""Integrate-and-fire time encoding of closed-form sinc signals.

The machine adds its bias to the input, integrates the sum scaled by
``1/kappa`` and fires when the integrator climbs from ``-delta`` to
``+delta``, then resets to ``-delta``. Equivalently every inter-spike
interval carries ``int (y + b) du = 2 kappa delta``, and the n-th spike is
the first time the running integral from ``t_start`` reaches
``n * 2 kappa delta``. The running integral is evaluated exactly through the
sine integral, so spike times are limited only by the bisection tolerance.
"""

import csv
import io
import json
from dataclasses import asdict, dataclass

import numpy as np

from .signal_model import atom_integrals, evaluate, integrate, sine_integral

__all__ = [
    "TemParams",
    "SpikeTrain",
    "encode",
    "spike_residuals",
    "constraint_intervals",
    "write_spikes_csv",
    "read_spikes_csv",
    "params_to_json",
    "params_from_json",
]

TIME_TOL = 1e-12


@dataclass(frozen=True)
class TemParams:
    """Parameters of one integrate-and-fire machine.

    Attributes
    ----------
    kappa : float
        Integrator constant, > 0.
    delta : float
        Threshold, > 0. The integrator starts at ``-delta`` at `t_start`.
    bias : float
        Bias added to the input; any sign.
    t_start : float
        Time the machine starts integrating.
    """

    kappa: float = 1.0
    delta: float = 0.5
    bias: float = 1.0
    t_start: float = 0.0

    def __post_init__(self):
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if not self.delta > 0:
            raise ValueError(f"delta must be positive, got {self.delta}")

    @property
    def charge(self):
        """Integral of ``y + b`` over every inter-spike interval."""
        return 2.0 * self.kappa * self.delta

    def with_bias(self, bias):
        return TemParams(self.kappa, self.delta, float(bias), self.t_start)


@dataclass(frozen=True, eq=False)
class SpikeTrain:
    params: TemParams
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.array(self.times, dtype=float).reshape(-1)
        if np.any(np.diff(times) <= 0):
            raise ValueError("spike times must be strictly increasing")
        if times.size and (times[0] <= self.params.t_start or times[-1] > self.horizon):
            raise ValueError("spike times must lie in (t_start, horizon]")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", float(self.horizon))

    def __len__(self):
        return self.times.size

    @property
    def n_spikes(self):
        return self.times.size


def constraint_intervals(train):
    """Interval endpoints ``(a, b)`` carrying one spike constraint each.

    The first interval runs from ``t_start`` to the first spike; the
    known initial integrator state makes it as informative as the others.
    """
    edges = np.concatenate(([train.params.t_start], train.times))
    return edges[:-1], edges[1:]


def _step_size(signal, params):
    grid = signal.grid
    amp_bound = np.abs(signal.coeffs).sum() * grid.atom_energy + abs(params.bias)
    step = grid.spacing / 8.0
    if amp_bound > 0:
        step = min(step, params.charge / (8.0 * amp_bound))
    return step


class _Integrator:
    """Running integral ``F(t) = int_{t_start}^t (y + b) du`` and its slope."""

    def __init__(self, signal, params):
        self.signal = signal
        self.params = params
        grid = signal.grid
        self._offset = atom_integrals(grid, [params.t_start], [0.0])[0] @ signal.coeffs

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        grid = self.signal.grid
        # int_{t_start}^t = int_0^t - int_0^{t_start}; each is sum_k c_k Si(.)/pi
        tail = sine_integral(grid.omega * (t[..., None] - grid.points))
        tail0 = sine_integral(-grid.omega * grid.points)
        signal_part = ((tail - tail0) / np.pi) @ self.signal.coeffs + self._offset
        return signal_part + self.params.bias * (t - self.params.t_start)

    def slope(self, t):
        return evaluate(self.signal, t) + self.params.bias


def _refine_peaks(integrator, ts, values):
    """Insert the exact local maxima of F lying between grid samples.

    A level touched only between two samples would otherwise be missed.
    The slope changes sign from + to - around each discrete peak, and
    bisection on the slope locates the turning point.
    """
    inner = np.flatnonzero((values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:])) + 1
    if inner.size == 0:
        return ts, values
    lo, hi = ts[inner - 1], ts[inner + 1]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        rising = integrator.slope(mid) > 0
        lo = np.where(rising, mid, lo)
        hi = np.where(rising, hi, mid)
    peaks = 0.5 * (lo + hi)
    ts = np.concatenate((ts, peaks))
    values = np.concatenate((values, integrator(peaks)))
    order = np.argsort(ts, kind="stable")
    return ts[order], values[order]


def encode(signal, params, horizon):
    """Spike times of one machine driven by `signal` on ``(t_start, horizon]``.

    Parameters
    ----------
    signal : SincSignal
        Machine input.
    params : TemParams
    horizon : float
        End of the encoding window; must exceed ``params.t_start``.

    Returns
    -------
    SpikeTrain
        Possibly empty: with no assumption on the bias the integrator may
        never reach threshold.

    Notes
    -----
    The running integral is tabulated on a grid finer than both the
    signal's fastest oscillation and an eighth of the nominal spike
    interval, with local maxima refined in between. Each threshold level is
    bracketed at its first crossing and all brackets are bisected together
    down to ``TIME_TOL``.
    """
    horizon = float(horizon)
    if not horizon > params.t_start:
        raise ValueError("horizon must exceed t_start")
    integrator = _Integrator(signal, params)
    step = _step_size(signal, params)
    n_steps = int(np.ceil((horizon - params.t_start) / step))
    ts = params.t_start + step * np.arange(n_steps + 1)
    ts = np.append(ts[ts < horizon], horizon)
    running = integrator(ts)
    running[0] = 0.0
    ts, running = _refine_peaks(integrator, ts, running)

    peak = np.maximum.accumulate(running)
    n_levels = int(np.floor(peak[-1] / params.charge))
    if n_levels <= 0:
        return SpikeTrain(params, np.empty(0), horizon)
    levels = params.charge * np.arange(1, n_levels + 1)
    # first sample where the running maximum reaches each level
    hi_idx = np.searchsorted(peak, levels, side="left")
    lo = ts[hi_idx - 1]
    hi = ts[hi_idx]

    while True:
        width = hi - lo
        mid = lo + 0.5 * width
        # stop at the tolerance or once midpoints stall at ulp scale
        open_ = (width > TIME_TOL) & (mid > lo) & (mid < hi)
        if not open_.any():
            break
        above = integrator(mid) >= levels
        hi = np.where(open_ & above, mid, hi)
        lo = np.where(open_ & ~above, mid, lo)
    times = hi
    # ulp-level ties between levels would break strict ordering
    keep = np.concatenate(([True], np.diff(times) > 0))
    return SpikeTrain(params, times[keep], horizon)


def spike_residuals(signal, train):
    """Per-interval defect ``int (y + b) du - 2 kappa delta``.

    One entry per constraint interval, starting with ``(t_start, t_1]``.
    Each integral is evaluated directly over its own interval.
    """
    if train.n_spikes == 0:
        raise ValueError("spike train is empty")
    a, b = constraint_intervals(train)
    p = train.params
    return integrate(signal, a, b) + p.bias * (b - a) - p.charge


def write_spikes_csv(trains, path_or_file):
    """Write spike trains as ``channel,spike_time`` rows (0-based channel)."""
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["channel", "spike_time"])
        for channel, train in enumerate(trains):
            for t in train.times:
                writer.writerow([channel, repr(float(t))])
    finally:
        if own:
            fh.close()


def read_spikes_csv(path_or_file, n_channels=None):
    """Read ``channel,spike_time`` rows into a list of sorted time arrays."""
    if isinstance(path_or_file, str) or hasattr(path_or_file, "__fspath__"):
        with open(path_or_file, newline="") as fh:
            text = fh.read()
    else:
        text = path_or_file.read()
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["channel", "spike_time"]:
        raise ValueError(f"unexpected spikes CSV header: {reader.fieldnames}")
    by_channel = {}
    for row in reader:
        by_channel.setdefault(int(row["channel"]), []).append(float(row["spike_time"]))
    if n_channels is None:
        n_channels = max(by_channel, default=-1) + 1
    return [np.sort(np.array(by_channel.get(i, []), dtype=float)) for i in range(n_channels)]


def params_to_json(params_list, horizon=None):
    data = {"machines": [asdict(p) for p in params_list]}
    if horizon is not None:
        data["horizon"] = float(horizon)
    return json.dumps(data, indent=2)


def params_from_json(text):
    data = json.loads(text)
    params = [TemParams(**m) for m in data["machines"]]
    return params, data.get("horizon")
