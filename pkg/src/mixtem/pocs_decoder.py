"""Reconstruction from spike times by alternating projections.

Three convex sets hold every admissible machine-input stack ``y``:

* sinc sums on the known grid (projector: ideal low-pass + grid sampling),
* stacks meeting every spike-interval integral (projector: subtract a
  rectangle per interval carrying that interval's defect),
* stacks of the form ``A x`` (projector: ``A (A^T A)^{-1} A^T`` pointwise).

Starting from ``y_0 = 0`` the decoder cycles spike -> range -> low-pass and
finally unmixes the limit. `step` runs one cycle on explicit
`HybridSignal` objects; `decode` runs the same cycle as a precompiled
affine map on the I x K coefficient matrix, which is exact because the
range projector and the low-pass projector commute.
"""

from dataclasses import dataclass, field

import numpy as np

from .mixing import project_colspace, unmix
from .signal_model import (
    HybridSignal,
    Rectangle,
    SincSignal,
    VectorSignal,
    atom_integrals,
    bandlimit_sample,
    integrate,
)
from .tem_encoder import SpikeTrain, constraint_intervals

__all__ = [
    "DecoderInput",
    "DecoderState",
    "StopRule",
    "NotConverged",
    "DIAGNOSTIC_COLUMNS",
    "project_spikes",
    "initial_state",
    "step",
    "decode",
    "reconstructible",
]

DIAGNOSTIC_COLUMNS = ("iter", "spike_residual", "range_residual", "step_norm", "truth_distance")


@dataclass(frozen=True)
class StopRule:
    max_iterations: int = 20000
    rel_change_tol: float = 1e-12
    residual_tol: float = 1e-10

    def __post_init__(self):
        if not (self.max_iterations >= 1 and self.rel_change_tol > 0 and self.residual_tol > 0):
            raise ValueError("stop rule fields must all be positive")


@dataclass(frozen=True, eq=False)
class DecoderInput:
    trains: tuple
    A: object
    grid: object

    def __post_init__(self):
        trains = tuple(self.trains)
        if len(trains) != self.A.rows:
            raise ValueError(
                f"{len(trains)} spike trains for a mixing matrix with {self.A.rows} rows"
            )
        object.__setattr__(self, "trains", trains)

    @property
    def spike_counts(self):
        return [t.n_spikes for t in self.trains]


@dataclass
class DecoderState:
    """Current iterate ``y_m`` plus per-iteration diagnostics.

    `history` holds one dict per completed cycle, keyed by
    `DIAGNOSTIC_COLUMNS`; ``truth_distance`` is NaN unless ground truth was
    supplied.
    """

    iterate: VectorSignal
    iteration: int = 0
    history: list = field(default_factory=list)
    converged: bool = False
    reason: str = ""

    def history_array(self):
        return np.array([[h[c] for c in DIAGNOSTIC_COLUMNS] for h in self.history]).reshape(
            -1, len(DIAGNOSTIC_COLUMNS)
        )


class NotConverged(RuntimeError):
    def __init__(self, state, x_hat):
        self.state = state
        self.x_hat = x_hat
        super().__init__(f"decoder stopped after {state.iteration} iterations ({state.reason})")


def _interval_targets(train):
    """Constraint intervals of a train and the integral of ``y`` over each."""
    a, b = constraint_intervals(train)
    p = train.params
    return a, b, p.charge - p.bias * (b - a)


def _merge_rects(rects):
    merged = {}
    for r in rects:
        key = (r.start, r.end)
        merged[key] = merged.get(key, 0.0) + r.weight
    return [Rectangle(s, e, w) for (s, e), w in merged.items()]


def project_spikes(y_hat, trains):
    """Project each channel onto its spike-interval constraints.

    For every interval ``[t_l, t_{l+1})`` the defect
    ``q_l = int y_hat - (2 kappa delta - b (t_{l+1} - t_l))`` is removed by
    subtracting a rectangle of area ``q_l`` on that interval. Intervals are
    disjoint within a channel, so this is the orthogonal projection onto the
    affine constraint set. Channels without spikes pass through unchanged.

    Returns
    -------
    tuple of HybridSignal
    """
    rows = tuple(y_hat)
    if len(rows) != len(trains):
        raise ValueError(f"{len(rows)} signals for {len(trains)} spike trains")
    out = []
    for row, train in zip(rows, trains):
        base, rects = (row.base, list(row.rects)) if isinstance(row, HybridSignal) else (row, [])
        if train.n_spikes == 0:
            out.append(HybridSignal(base, rects))
            continue
        a, b, target = _interval_targets(train)
        q = integrate(row, a, b) - target
        corrections = [Rectangle(s, e, -w) for s, e, w in zip(a, b, q)]
        out.append(HybridSignal(base, _merge_rects(rects + corrections)))
    return tuple(out)


class _CompiledCycle:
    """One full projection cycle as ``c -> T c + d`` on stacked coefficients.

    Per channel, with ``G[l, k] = int_l sinc_W(u - t_k) du`` and interval
    lengths ``len_l``, low-pass after spike projection maps coefficients
    ``c -> c - (pi/W) G^T diag(1/len) (G c - mu)``. The range projector then
    mixes channels with ``Q Q^T``.
    """

    def __init__(self, inp):
        grid, K = inp.grid, inp.grid.count
        n = len(inp.trains)
        blocks = np.zeros((n * K, n * K))
        offset = np.zeros(n * K)
        gmats, targets = [], []
        for i, train in enumerate(inp.trains):
            sl = slice(i * K, (i + 1) * K)
            if train.n_spikes == 0:
                blocks[sl, sl] = np.eye(K)
                gmats.append(np.zeros((0, K)))
                targets.append(np.zeros(0))
                continue
            a, b, mu = _interval_targets(train)
            g = atom_integrals(grid, a, b)
            h = g.T / (b - a) / grid.atom_energy
            blocks[sl, sl] = np.eye(K) - h @ g
            offset[sl] = h @ mu
            gmats.append(g)
            targets.append(mu)
        mixer = np.kron(inp.A.projector, np.eye(K))
        self.pre = blocks
        self.pre_offset = offset
        self.mixer = mixer
        self.linear = mixer @ blocks
        self.offset = mixer @ offset
        self.gmats = gmats
        self.targets = targets
        self.shape = (n, K)

    def spike_residual(self, vec):
        K = self.shape[1]
        parts = [
            g @ vec[i * K : (i + 1) * K] - mu
            for i, (g, mu) in enumerate(zip(self.gmats, self.targets))
        ]
        return float(np.linalg.norm(np.concatenate(parts))) if parts else 0.0

    def __call__(self, vec):
        pre = self.pre @ vec + self.pre_offset
        new = self.mixer @ pre
        return new, float(np.linalg.norm(pre - new))


def initial_state(inp):
    """``y_0 = 0``."""
    zero = VectorSignal.from_matrix(inp.grid, np.zeros((len(inp.trains), inp.grid.count)))
    return DecoderState(zero)


def _spike_residual_norm(rows, trains):
    parts = []
    for row, train in zip(rows, trains):
        if train.n_spikes:
            a, b, target = _interval_targets(train)
            parts.append(np.atleast_1d(integrate(row, a, b) - target))
    return float(np.linalg.norm(np.concatenate(parts))) if parts else 0.0


def _record(state, new_matrix, spike_res, range_res, truth):
    old = state.iterate.matrix
    denom = np.linalg.norm(new_matrix)
    change = np.linalg.norm(new_matrix - old)
    step_norm = change / denom if denom > 0 else (0.0 if change == 0 else np.inf)
    dist = np.nan if truth is None else float(np.linalg.norm(new_matrix - truth))
    return {
        "iter": state.iteration + 1,
        "spike_residual": spike_res,
        "range_residual": range_res,
        "step_norm": float(step_norm),
        "truth_distance": dist,
    }


def _truth_matrix(truth):
    if truth is None:
        return None
    return truth.matrix if isinstance(truth, VectorSignal) else np.asarray(truth, dtype=float)


def step(state, inp, truth=None):
    """One cycle ``y <- P_lowpass(P_range(P_spikes(y)))`` on explicit signals.

    `truth`, when given (a `VectorSignal` of the true ``y``), only feeds
    the ``truth_distance`` diagnostic.
    """
    hybrid = project_spikes(state.iterate, inp.trains)
    ranged = project_colspace(inp.A, hybrid)
    new = VectorSignal(inp.grid, tuple(bandlimit_sample(r) for r in ranged))
    new_matrix = new.matrix
    # distance of the low-passed spike projection from range(A)
    lowpassed = np.stack([bandlimit_sample(h).coeffs for h in hybrid])
    range_res = float(np.linalg.norm(lowpassed - new_matrix))
    spike_res = _spike_residual_norm(new.rows, inp.trains)
    diag = _record(state, new_matrix, spike_res, range_res, _truth_matrix(truth))
    return DecoderState(new, state.iteration + 1, state.history + [diag])


def _diagnostics(cycle, m, vec, new, range_res, truth_m):
    new_norm = np.linalg.norm(new)
    change = np.linalg.norm(new - vec)
    if new_norm > 0:
        step_norm = float(change / new_norm)
    else:
        step_norm = 0.0 if change == 0 else float("inf")
    return {
        "iter": m,
        "spike_residual": cycle.spike_residual(new),
        "range_residual": range_res,
        "step_norm": step_norm,
        "truth_distance": (
            np.nan if truth_m is None else float(np.linalg.norm(new - truth_m.ravel()))
        ),
    }


def _iterates_cycle(cycle, stop):
    vec = np.zeros(cycle.linear.shape[0])
    for m in range(1, stop.max_iterations + 1):
        new, range_res = cycle(vec)
        yield m, vec, new, range_res
        vec = new


def _iterates_doubling(cycle, stop):
    # augmented affine map [[T, d], [0, 1]]; its 2^k-th power applied to
    # (y_0, 1) = (0, 1) is y_{2^k}
    n = cycle.linear.shape[0]
    power = np.zeros((n + 1, n + 1))
    power[:n, :n] = cycle.linear
    power[:n, n] = cycle.offset
    power[n, n] = 1.0
    vec = np.zeros(n)
    m = 1
    while m <= stop.max_iterations:
        new = power[:n, n].copy()
        _, range_res = cycle(new)
        yield m, vec, new, range_res
        vec = new
        power = power @ power
        m *= 2


def decode(inp, stop=None, truth=None, callback=None, strict=False, schedule="cycle"):
    """Recover the sources from spike times.

    Runs the projection cycle from ``y_0 = 0`` until `stop.max_iterations`,
    until the relative iterate change falls below `stop.rel_change_tol`, or
    until the spike-constraint residual of the iterate falls below
    `stop.residual_tol` (the iterate always lies in the other two sets).

    Parameters
    ----------
    inp : DecoderInput
    stop : StopRule, optional
    truth : VectorSignal, optional
        True machine inputs ``y``; enables the distance-to-truth diagnostic.
    callback : callable, optional
        Called as ``callback(m, diagnostics)`` after every recorded iterate.
    strict : bool
        Raise `NotConverged` when the iteration budget runs out instead of
        returning the last iterate.
    schedule : {"cycle", "doubling"}
        ``"cycle"`` records every iterate ``y_1, y_2, ...``. ``"doubling"``
        records only ``y_1, y_2, y_4, ...``, each obtained exactly by
        squaring the affine cycle map, so very slowly converging (badly
        conditioned) problems reach ``y_m`` for huge ``m`` in a few dozen
        matrix products. Both schedules produce the same sequence; the
        relative-change test then compares ``y_{2m}`` with ``y_m``.

    Returns
    -------
    x_hat : VectorSignal
        Least-squares unmixing of the final iterate.
    state : DecoderState
    """
    stop = stop or StopRule()
    if schedule == "cycle":
        iterates = _iterates_cycle
    elif schedule == "doubling":
        iterates = _iterates_doubling
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    cycle = _CompiledCycle(inp)
    truth_m = _truth_matrix(truth)
    n, K = cycle.shape
    vec = np.zeros(n * K)
    history = []
    converged, reason = False, "max_iterations"
    m = 0
    if all(t.n_spikes == 0 for t in inp.trains):
        reason = "no spikes"
    else:
        for m, prev, new, range_res in iterates(cycle, stop):
            diag = _diagnostics(cycle, m, prev, new, range_res, truth_m)
            history.append(diag)
            if callback is not None:
                callback(m, diag)
            vec = new
            if diag["spike_residual"] < stop.residual_tol:
                converged, reason = True, "residual"
                break
            if np.any(new) and diag["step_norm"] < stop.rel_change_tol:
                converged, reason = True, "rel_change"
                break
            if not np.any(new) and not np.any(prev):
                reason = "stalled at zero"
                break
    y_final = VectorSignal.from_matrix(inp.grid, vec.reshape(n, K))
    state = DecoderState(y_final, m, history, converged, reason)
    x_hat = unmix(inp.A, y_final)
    if strict and not converged:
        raise NotConverged(state, x_hat)
    return x_hat, state


def reconstructible(spike_counts, K, J):
    """Whether ``sum_i min(n_i, K) > J K``.

    Spikes beyond K on one machine add nothing, so a machine can make up for
    sparse neighbours only up to K of its own spikes.
    """
    counts = [int(c) for c in spike_counts]
    if any(c < 0 for c in counts):
        raise ValueError("spike counts must be non-negative")
    return sum(min(c, K) for c in counts) > J * K
