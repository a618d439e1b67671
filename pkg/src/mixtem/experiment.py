"""Random-signal experiments: encode -> decode round trips and the bias sweep.

The sweep follows the spike-rate experiment for two sources seen through
three machines: two machines are held at fixed spike counts (their bias is
calibrated per trial) while the bias of the third is swept, and the
reconstruction error is recorded against the spike counts.
"""

import csv
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from xml.sax.saxutils import escape

import numpy as np

from .mixing import mix, validate
from .pocs_decoder import DecoderInput, StopRule, decode, reconstructible
from .signal_model import SincGrid, VectorSignal
from .tem_encoder import TemParams, _Integrator, encode

__all__ = [
    "ConfigError",
    "ZeroSignal",
    "MachineSpec",
    "ExperimentConfig",
    "TrialRecord",
    "SweepRow",
    "SweepResult",
    "default_config",
    "load_config",
    "generate_signals",
    "calibrate_bias",
    "relative_mse",
    "run_trial",
    "run_sweep",
    "aggregate",
    "csv_header",
    "emit_csv",
    "emit_trials_csv",
    "emit_svg",
]


class ConfigError(ValueError):
    pass


class ZeroSignal(ValueError):
    pass


def _reject_unknown(data, allowed, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected an object, got {type(data).__name__}")
    unknown = sorted(set(data) - set(allowed))
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


@dataclass(frozen=True)
class MachineSpec:
    """One machine in a config.

    Exactly one of `bias`, `target_spikes` or `bias_sweep` is set. A
    `bias_sweep` is ``(start, stop, step)`` with `stop` included.
    """

    kappa: float = 1.0
    delta: float = 0.5
    t_start: float = 0.0
    bias: float = None
    target_spikes: int = None
    bias_sweep: tuple = None

    def __post_init__(self):
        modes = [self.bias is not None, self.target_spikes is not None, self.bias_sweep is not None]
        if sum(modes) != 1:
            raise ConfigError("a machine needs exactly one of bias, target_spikes, bias_sweep")
        if not (self.kappa > 0 and self.delta > 0):
            raise ConfigError("kappa and delta must be positive")
        if self.target_spikes is not None and self.target_spikes < 0:
            raise ConfigError("target_spikes must be non-negative")
        if self.bias_sweep is not None:
            start, stop, step = self.bias_sweep
            if not step > 0 or stop < start:
                raise ConfigError(f"empty bias sweep {self.bias_sweep}")

    @property
    def sweep_values(self):
        start, stop, step = self.bias_sweep
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]

    def params(self, bias):
        return TemParams(self.kappa, self.delta, float(bias), self.t_start)

    @classmethod
    def from_dict(cls, data):
        _reject_unknown(data, ("kappa", "delta", "t_start", "bias", "target_spikes", "bias_sweep"), "machine")
        data = dict(data)
        if "bias_sweep" in data:
            sweep = data["bias_sweep"]
            _reject_unknown(sweep, ("start", "stop", "step"), "bias_sweep")
            try:
                data["bias_sweep"] = (float(sweep["start"]), float(sweep["stop"]), float(sweep["step"]))
            except KeyError as exc:
                raise ConfigError(f"bias_sweep is missing {exc}") from None
        return cls(**data)

    def to_dict(self):
        out = {"kappa": self.kappa, "delta": self.delta, "t_start": self.t_start}
        if self.bias is not None:
            out["bias"] = self.bias
        if self.target_spikes is not None:
            out["target_spikes"] = self.target_spikes
        if self.bias_sweep is not None:
            out["bias_sweep"] = dict(zip(("start", "stop", "step"), self.bias_sweep))
        return out


_CONFIG_KEYS = (
    "omega", "t0", "K", "J", "I", "mixing_matrix", "machines", "trials",
    "coeff_distribution", "seed", "horizon", "stop", "outputs",
)
_STOP_KEYS = ("max_iterations", "rel_change_tol", "residual_tol", "schedule")
_OUTPUT_KEYS = ("csv", "svg", "trials_csv")


@dataclass(frozen=True)
class ExperimentConfig:
    omega: float
    t0: float
    K: int
    J: int
    I: int
    mixing_matrix: tuple
    machines: tuple
    trials: int = 100
    coeff_distribution: dict = field(default_factory=lambda: {"kind": "uniform", "low": -1.0, "high": 1.0})
    seed: int = 0
    horizon: float = None
    stop: StopRule = field(default_factory=StopRule)
    schedule: str = "cycle"
    outputs: dict = field(default_factory=lambda: {"csv": "sweep.csv", "svg": "sweep.svg"})

    def __post_init__(self):
        if not self.omega > 0:
            raise ConfigError("omega must be positive")
        if self.K < 1 or self.J < 1 or self.I < self.J:
            raise ConfigError(f"need K >= 1 and I >= J >= 1, got K={self.K}, J={self.J}, I={self.I}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        a = np.asarray(self.mixing_matrix, dtype=float)
        if a.shape != (self.I, self.J):
            raise ConfigError(f"mixing_matrix has shape {a.shape}, expected ({self.I}, {self.J})")
        if len(self.machines) != self.I:
            raise ConfigError(f"{len(self.machines)} machines for I={self.I}")
        if sum(m.bias_sweep is not None for m in self.machines) > 1:
            raise ConfigError("at most one machine may sweep its bias")
        if self.schedule not in ("cycle", "doubling"):
            raise ConfigError(f"unknown decoder schedule {self.schedule!r}")
        if self.horizon is not None and not self.horizon > max(m.t_start for m in self.machines):
            raise ConfigError("horizon must exceed every machine's t_start")
        dist = self.coeff_distribution
        kind = dist.get("kind")
        if kind == "uniform":
            _reject_unknown(dist, ("kind", "low", "high"), "coeff_distribution")
            if not dist.get("high", 1.0) > dist.get("low", -1.0):
                raise ConfigError("uniform distribution needs high > low")
        elif kind == "gaussian":
            _reject_unknown(dist, ("kind", "mean", "sd"), "coeff_distribution")
            if not dist.get("sd", 1.0) > 0:
                raise ConfigError("gaussian distribution needs sd > 0")
        else:
            raise ConfigError(f"unknown coefficient distribution {kind!r}")

    @property
    def grid(self):
        return SincGrid(self.omega, self.t0, self.K)

    @property
    def window_end(self):
        if self.horizon is not None:
            return float(self.horizon)
        return self.grid.window[1]

    @property
    def critical_count(self):
        return self.J * self.K

    @property
    def swept_index(self):
        for i, m in enumerate(self.machines):
            if m.bias_sweep is not None:
                return i
        return None

    def mixing(self):
        return validate(self.mixing_matrix)

    @classmethod
    def from_dict(cls, data):
        _reject_unknown(data, _CONFIG_KEYS, "config")
        data = dict(data)
        try:
            machines = tuple(MachineSpec.from_dict(m) for m in data.pop("machines"))
            kwargs = {
                "omega": float(data.pop("omega")),
                "t0": float(data.pop("t0")),
                "K": int(data.pop("K")),
                "J": int(data.pop("J")),
                "I": int(data.pop("I")),
                "mixing_matrix": tuple(tuple(float(v) for v in row) for row in data.pop("mixing_matrix")),
                "machines": machines,
            }
        except KeyError as exc:
            raise ConfigError(f"config is missing {exc}") from None
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        if "stop" in data:
            stop = dict(data.pop("stop"))
            _reject_unknown(stop, _STOP_KEYS, "stop")
            kwargs["schedule"] = stop.pop("schedule", "cycle")
            try:
                kwargs["stop"] = StopRule(**stop)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        if "outputs" in data:
            _reject_unknown(data["outputs"], _OUTPUT_KEYS, "outputs")
        if "seed" in data:
            data["seed"] = int(data["seed"])
        if "trials" in data:
            data["trials"] = int(data["trials"])
        kwargs.update(data)
        return cls(**kwargs)

    def to_dict(self):
        return {
            "omega": self.omega,
            "t0": self.t0,
            "K": self.K,
            "J": self.J,
            "I": self.I,
            "mixing_matrix": [list(r) for r in self.mixing_matrix],
            "machines": [m.to_dict() for m in self.machines],
            "trials": self.trials,
            "coeff_distribution": dict(self.coeff_distribution),
            "seed": self.seed,
            "horizon": self.horizon,
            "stop": {
                "max_iterations": self.stop.max_iterations,
                "rel_change_tol": self.stop.rel_change_tol,
                "residual_tol": self.stop.residual_tol,
                "schedule": self.schedule,
            },
            "outputs": dict(self.outputs),
        }

    def replace(self, **changes):
        values = {f.name: getattr(self, f.name) for f in fields(self)}
        values.update(changes)
        return ExperimentConfig(**values)


def default_config():
    """Two sources, three machines, K = 16 atoms at omega = pi.

    Machines 0 and 1 are calibrated to 12 and 8 spikes; machine 2 sweeps
    its bias from 0 to 1.5, which moves its count from about 0 to about 25
    over the window ``[0, 17]``. The third row of the mixing matrix is
    normalised.
    """
    r = 1.0 / math.sqrt(2.0)
    return ExperimentConfig(
        omega=math.pi,
        t0=0.0,
        K=16,
        J=2,
        I=3,
        mixing_matrix=((1.0, 0.0), (0.0, 1.0), (r, r)),
        machines=(
            MachineSpec(target_spikes=12),
            MachineSpec(target_spikes=8),
            MachineSpec(bias_sweep=(0.0, 1.5, 0.05)),
        ),
        trials=100,
        seed=20200504,
        stop=StopRule(max_iterations=2**50, rel_change_tol=1e-12, residual_tol=1e-10),
        schedule="doubling",
    )


def load_config(path):
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return ExperimentConfig.from_dict(data)


def generate_signals(config, trial_index):
    """Source signals for one trial; depends only on (seed, trial_index)."""
    rng = np.random.default_rng([int(config.seed), int(trial_index)])
    dist = config.coeff_distribution
    shape = (config.J, config.K)
    if dist["kind"] == "uniform":
        coeffs = rng.uniform(dist.get("low", -1.0), dist.get("high", 1.0), shape)
    else:
        coeffs = rng.normal(dist.get("mean", 0.0), dist.get("sd", 1.0), shape)
    return VectorSignal.from_matrix(config.grid, coeffs)


def _bias_thresholds(signal, params, horizon, counts, resolution=64):
    """Smallest bias giving at least ``n`` spikes, for each n in `counts`.

    With ``F0`` the running integral of the input alone, ``n`` spikes need
    ``max_t F0(t) + b (t - t_start) >= n 2 kappa delta``, i.e.
    ``b >= min_t (n 2 kappa delta - F0(t)) / (t - t_start)``; the minimum is
    taken on a grid `resolution` times finer than the atom spacing.
    """
    zero_bias = params.with_bias(0.0)
    span = horizon - params.t_start
    n_pts = int(math.ceil(span / (signal.grid.spacing / resolution)))
    ts = params.t_start + span * np.arange(1, n_pts + 1) / n_pts
    f0 = _Integrator(signal, zero_bias)(ts)
    elapsed = ts - params.t_start
    return [float(np.min((n * params.charge - f0) / elapsed)) for n in counts]


def calibrate_bias(signal, params, horizon, target):
    """Bias at which the machine emits exactly `target` spikes by `horizon`.

    Spike count is non-decreasing in the bias. The bias window giving
    `target` spikes is located in closed form on a fine grid and its
    midpoint is confirmed with `encode`; if that fails the window is
    bisected with `encode` itself.
    """
    if target == 0:
        low, high = -np.inf, _bias_thresholds(signal, params, horizon, [1])[0]
        amp = np.abs(signal.coeffs).sum() * signal.grid.atom_energy
        bias = min(high - 1.0, -amp)
    else:
        low, high = _bias_thresholds(signal, params, horizon, [target, target + 1])
        bias = 0.5 * (low + high)
    train = encode(signal, params.with_bias(bias), horizon)
    if train.n_spikes == target:
        return bias, train
    lo, hi = low - 1.0, high + 1.0
    for _ in range(200):
        bias = 0.5 * (lo + hi)
        train = encode(signal, params.with_bias(bias), horizon)
        if train.n_spikes == target:
            return bias, train
        if train.n_spikes < target:
            lo = bias
        else:
            hi = bias
    raise ArithmeticError(f"could not calibrate a bias for {target} spikes")


def relative_mse(x_hat, x_true):
    """``||C_hat - C||_F^2 / ||C||_F^2`` on coefficient matrices."""
    est = x_hat.matrix if isinstance(x_hat, VectorSignal) else np.asarray(x_hat, dtype=float)
    ref = x_true.matrix if isinstance(x_true, VectorSignal) else np.asarray(x_true, dtype=float)
    if est.shape != ref.shape:
        raise ValueError(f"shape mismatch {est.shape} vs {ref.shape}")
    denom = float(np.sum(ref**2))
    if denom == 0:
        raise ZeroSignal("reference signal is identically zero")
    return float(np.sum((est - ref) ** 2)) / denom


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    bias: float
    spike_counts: tuple
    capped_total: int
    reconstructible: bool
    mse: float
    converged: bool
    iterations: int


def _fixed_trains(config, y, horizon):
    """Spike trains of the machines that do not sweep, keyed by index."""
    trains = {}
    for i, spec in enumerate(config.machines):
        if spec.bias is not None:
            trains[i] = encode(y[i], spec.params(spec.bias), horizon)
        elif spec.target_spikes is not None:
            _, trains[i] = calibrate_bias(y[i], spec.params(0.0), horizon, spec.target_spikes)
    return trains


def run_trial(config, trial_index):
    """All sweep points for one random draw of the sources."""
    A = config.mixing()
    x = generate_signals(config, trial_index)
    y = mix(A, x)
    horizon = config.window_end
    fixed = _fixed_trains(config, y, horizon)
    swept = config.swept_index
    biases = [None] if swept is None else config.machines[swept].sweep_values
    records = []
    for bias in biases:
        trains = dict(fixed)
        if swept is not None:
            trains[swept] = encode(y[swept], config.machines[swept].params(bias), horizon)
        ordered = [trains[i] for i in range(config.I)]
        counts = tuple(t.n_spikes for t in ordered)
        x_hat, state = decode(
            DecoderInput(ordered, A, config.grid), config.stop, schedule=config.schedule
        )
        records.append(
            TrialRecord(
                trial=trial_index,
                bias=float("nan") if bias is None else float(bias),
                spike_counts=counts,
                capped_total=sum(min(c, config.K) for c in counts),
                reconstructible=reconstructible(counts, config.K, config.J),
                mse=relative_mse(x_hat, x),
                converged=state.converged,
                iterations=state.iteration,
            )
        )
    return records


@dataclass(frozen=True)
class SweepRow:
    bias: float
    mean_spikes: tuple
    capped_total: float
    reconstructible_frac: float
    mse_mean: float
    mse_median: float
    mse_max: float


@dataclass
class SweepResult:
    rows: list
    records: list
    n_machines: int
    K: int
    critical_count: int

    def records_by_capped_total(self):
        bins = {}
        for r in self.records:
            bins.setdefault(r.capped_total, []).append(r.mse)
        return dict(sorted(bins.items()))


def aggregate(records, n_machines):
    """One `SweepRow` per bias value, in sweep order."""
    by_bias = {}
    for r in records:
        by_bias.setdefault(r.bias, []).append(r)
    rows = []
    for bias, group in by_bias.items():
        mses = [r.mse for r in group]
        counts = np.array([r.spike_counts for r in group], dtype=float)
        rows.append(
            SweepRow(
                bias=bias,
                mean_spikes=tuple(float(v) for v in counts.mean(axis=0)),
                capped_total=float(np.mean([r.capped_total for r in group])),
                reconstructible_frac=float(np.mean([r.reconstructible for r in group])),
                mse_mean=float(np.mean(mses)),
                mse_median=float(statistics.median(mses)),
                mse_max=float(max(mses)),
            )
        )
    return rows


def _run_trial_args(args):
    return run_trial(*args)


def run_sweep(config, jobs=1, progress=None):
    """Run every trial of `config` and aggregate per bias value.

    Trials are independent and seeded by index, so ``jobs > 1`` (process
    pool) gives the same result as a serial run.
    """
    indices = range(config.trials)
    records = []
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for trial_records in pool.map(_run_trial_args, [(config, i) for i in indices]):
                records.extend(trial_records)
                if progress is not None:
                    progress(trial_records)
    else:
        for i in indices:
            trial_records = run_trial(config, i)
            records.extend(trial_records)
            if progress is not None:
                progress(trial_records)
    return SweepResult(
        rows=aggregate(records, config.I),
        records=records,
        n_machines=config.I,
        K=config.K,
        critical_count=config.critical_count,
    )


def _fmt(v):
    return repr(float(v))


def csv_header(n_machines):
    return (
        ["bias"]
        + [f"mean_spikes_{i}" for i in range(n_machines)]
        + ["capped_total", "reconstructible_frac", "mse_mean", "mse_median", "mse_max"]
    )


def _open_for_write(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def emit_csv(result, path):
    """Per-bias summary, one row per sweep point."""
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(result.n_machines))
        for row in result.rows:
            writer.writerow(
                [_fmt(row.bias)]
                + [_fmt(v) for v in row.mean_spikes]
                + [
                    _fmt(row.capped_total),
                    _fmt(row.reconstructible_frac),
                    _fmt(row.mse_mean),
                    _fmt(row.mse_median),
                    _fmt(row.mse_max),
                ]
            )


def emit_trials_csv(result, path):
    with _open_for_write(path) as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["trial", "bias"]
            + [f"spikes_{i}" for i in range(result.n_machines)]
            + ["capped_total", "reconstructible", "mse", "converged", "iterations"]
        )
        for r in result.records:
            writer.writerow(
                [r.trial, _fmt(r.bias)]
                + list(r.spike_counts)
                + [r.capped_total, int(r.reconstructible), _fmt(r.mse), int(r.converged), r.iterations]
            )


def emit_svg(result, path, width=640, height=420):
    """Log-scale mean MSE against capped total spike count.

    One dashed vertical line marks the critical count ``J K``.
    """
    if not result.rows:
        raise ValueError("cannot plot an empty sweep")
    margin_l, margin_r, margin_t, margin_b = 70, 20, 20, 50
    pw, ph = width - margin_l - margin_r, height - margin_t - margin_b
    xs = [row.capped_total for row in result.rows]
    floor = 1e-30
    ys = [math.log10(max(row.mse_mean, floor)) for row in result.rows]
    x_lo = min(min(xs), result.critical_count) - 1
    x_hi = max(max(xs), result.critical_count) + 1
    y_lo, y_hi = math.floor(min(ys)), math.ceil(max(ys))
    if y_hi == y_lo:
        y_hi = y_lo + 1

    def px(v):
        return margin_l + (v - x_lo) / (x_hi - x_lo) * pw

    def py(v):
        return margin_t + (y_hi - v) / (y_hi - y_lo) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{margin_l}" y="{margin_t}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    step = max(1, (y_hi - y_lo) // 8)
    for e in range(y_lo, y_hi + 1, step):
        parts.append(
            f'<text x="{margin_l - 6}" y="{py(e) + 4:.2f}" text-anchor="end">1e{e}</text>'
        )
    for t in range(int(math.ceil(x_lo)), int(math.floor(x_hi)) + 1, 2):
        parts.append(f'<text x="{px(t):.2f}" y="{height - margin_b + 16}" text-anchor="middle">{t}</text>')
    parts.append(
        f'<text x="{margin_l + pw / 2}" y="{height - 10}" text-anchor="middle">'
        f"{escape('capped total spikes, sum min(n_i, K)')}</text>"
    )
    parts.append(
        f'<text x="16" y="{margin_t + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {margin_t + ph / 2})">mean relative MSE</text>'
    )
    cx = px(result.critical_count)
    parts.append(
        f'<line id="critical" x1="{cx:.2f}" y1="{margin_t}" x2="{cx:.2f}" y2="{margin_t + ph}" '
        f'stroke="green" stroke-dasharray="6,4" data-count="{result.critical_count}"/>'
    )
    pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
    parts.append(f'<polyline points="{pts}" fill="none" stroke="steelblue"/>')
    for x, y in zip(xs, ys):
        parts.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="3" fill="steelblue"/>')
    parts.append("</svg>")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
