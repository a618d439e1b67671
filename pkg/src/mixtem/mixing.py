"""Known mixing matrix: structural checks, column-space projector, unmixing."""

import itertools
import math
import warnings

import numpy as np
from scipy.linalg import solve_triangular

from .signal_model import HybridSignal, Rectangle, SincSignal, VectorSignal

__all__ = [
    "MixingError",
    "RankDeficient",
    "SubsetDegenerate",
    "MixingMatrix",
    "validate",
    "mix",
    "project_colspace",
    "unmix",
]

RANK_RTOL = 1e-10
MAX_SUBSETS = 10000


class MixingError(ValueError):
    pass


class RankDeficient(MixingError):
    pass


class SubsetDegenerate(MixingError):
    def __init__(self, subset):
        self.subset = tuple(subset)
        super().__init__(f"rows {self.subset} of the mixing matrix are linearly dependent")


def _numerical_rank(m, scale):
    s = np.linalg.svd(m, compute_uv=False)
    return int(np.sum(s > RANK_RTOL * scale))


class MixingMatrix:
    """Mixing matrix ``A`` (I x J, I >= J) with its QR factorisation.

    Build instances through `validate`. The column-space projector is
    ``Q Q^T`` and the least-squares left inverse is ``R^{-1} Q^T``; the
    normal-equations matrix ``A^T A`` is never formed.
    """

    def __init__(self, entries):
        a = np.atleast_2d(np.array(entries, dtype=float))
        a.setflags(write=False)
        self.entries = a
        q, r = np.linalg.qr(a, mode="reduced")
        self._q = q
        self._r = r
        proj = q @ q.T
        proj.setflags(write=False)
        self.projector = proj

    @property
    def shape(self):
        return self.entries.shape

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def columns(self):
        return self.entries.shape[1]

    def pinv_apply(self, y):
        """Least-squares solution ``(A^T A)^{-1} A^T y`` for a stack `y` (I x ...)."""
        y = np.asarray(y, dtype=float)
        return solve_triangular(self._r, self._q.T @ y)

    def __repr__(self):
        return f"MixingMatrix({self.entries.tolist()!r})"


def validate(entries, check_all_subsets=None):
    """Check a mixing matrix and wrap it.

    Parameters
    ----------
    entries : array_like, shape (I, J)
    check_all_subsets : bool, optional
        Verify that every J-row submatrix is nonsingular. Defaults to on
        when there are at most 10000 subsets, off (with a warning) otherwise.

    Raises
    ------
    RankDeficient
        If ``A`` does not have numerical rank J.
    SubsetDegenerate
        If a J-row subset is singular and the subset check is on.
    """
    a = np.atleast_2d(np.array(entries, dtype=float))
    if a.ndim != 2:
        raise MixingError(f"mixing matrix must be 2-d, got shape {a.shape}")
    n_rows, n_cols = a.shape
    if not n_rows >= n_cols >= 1:
        raise MixingError(f"need I >= J >= 1, got I={n_rows}, J={n_cols}")
    if not np.all(np.isfinite(a)):
        raise MixingError("mixing matrix has non-finite entries")
    scale = np.linalg.norm(a, 2)
    if scale == 0 or _numerical_rank(a, scale) < n_cols:
        raise RankDeficient(f"mixing matrix does not have rank {n_cols}")
    n_subsets = math.comb(n_rows, n_cols)
    if check_all_subsets is None:
        check_all_subsets = n_subsets <= MAX_SUBSETS
        if not check_all_subsets:
            warnings.warn(
                f"skipping the {n_subsets} row-subset checks of the mixing matrix",
                stacklevel=2,
            )
    if check_all_subsets:
        for subset in itertools.combinations(range(n_rows), n_cols):
            sub = a[list(subset)]
            if _numerical_rank(sub, scale) < n_cols:
                raise SubsetDegenerate(subset)
    return MixingMatrix(a)


def _check_rows(count, expected, what):
    if count != expected:
        raise MixingError(f"{what}: expected {expected} rows, got {count}")


def mix(A, x):
    """``y = A x``, computed on the J x K coefficient matrix."""
    _check_rows(len(x), A.columns, "mix")
    return VectorSignal.from_matrix(x.grid, A.entries @ x.matrix)


def unmix(A, y):
    """Least-squares unmixing ``x = (A^T A)^{-1} A^T y`` on coefficients."""
    _check_rows(len(y), A.rows, "unmix")
    return VectorSignal.from_matrix(y.grid, A.pinv_apply(y.matrix))


def project_colspace(A, y):
    """Pointwise projection of the row stack `y` onto the range of ``A``.

    `y` is either a `VectorSignal` or a sequence of `SincSignal` /
    `HybridSignal` rows. Sinc coefficients are projected as an I x K
    matrix. Rectangles are projected as functions: every distinct interval
    found in any channel becomes a column of an I x R weight matrix (zero
    in channels that lack it), so each output row carries rescaled copies
    of all channels' rectangles. Like intervals merge by exact endpoints.
    """
    rows = tuple(y)
    _check_rows(len(rows), A.rows, "project_colspace")
    grid = rows[0].grid
    bases = [r.base if isinstance(r, HybridSignal) else r for r in rows]
    coeffs = A.projector @ np.stack([b.coeffs for b in bases])
    if not any(isinstance(r, HybridSignal) and r.rects for r in rows):
        projected = VectorSignal.from_matrix(grid, coeffs)
        if isinstance(y, VectorSignal):
            return projected
        return tuple(
            HybridSignal(row) if isinstance(src, HybridSignal) else row
            for row, src in zip(projected.rows, rows)
        )

    columns = {}
    for r in rows:
        if isinstance(r, HybridSignal):
            for rect in r.rects:
                columns.setdefault((rect.start, rect.end), len(columns))
    weights = np.zeros((len(rows), len(columns)))
    for i, r in enumerate(rows):
        if isinstance(r, HybridSignal):
            for rect in r.rects:
                weights[i, columns[(rect.start, rect.end)]] += rect.weight
    weights = A.projector @ weights
    intervals = list(columns)
    out = []
    for i in range(len(rows)):
        rects = [
            Rectangle(s, e, w) for (s, e), w in zip(intervals, weights[i]) if w != 0.0
        ]
        out.append(HybridSignal(SincSignal(grid, coeffs[i]), rects))
    return tuple(out)
