import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mixtem.mixing import (
    MixingError,
    RankDeficient,
    SubsetDegenerate,
    mix,
    project_colspace,
    unmix,
    validate,
)
from mixtem.signal_model import HybridSignal, Rectangle, SincGrid, SincSignal, VectorSignal

from conftest import random_vector


def test_identity_is_valid():
    A = validate(np.eye(3))
    np.testing.assert_allclose(A.projector, np.eye(3), atol=1e-15)


def test_tall_generic_is_valid():
    A = validate([[1, 0], [0, 1], [1, 1]])
    assert A.shape == (3, 2)
    # projector of a 2-dim subspace of R^3 has trace 2
    assert np.trace(A.projector) == pytest.approx(2.0)


def test_repeated_row_is_subset_degenerate():
    with pytest.raises(SubsetDegenerate) as err:
        validate([[1, 0], [0, 1], [1, 0]])
    assert err.value.subset == (0, 2)


def test_subset_check_can_be_skipped():
    A = validate([[1, 0], [0, 1], [1, 0]], check_all_subsets=False)
    assert A.rows == 3


def test_rank_deficient():
    with pytest.raises(RankDeficient):
        validate([[1, 2], [2, 4], [3, 6]])
    with pytest.raises(RankDeficient):
        validate(np.zeros((2, 2)))


def test_shape_errors():
    with pytest.raises(MixingError):
        validate(np.ones((2, 3)))
    with pytest.raises(MixingError):
        validate([[1.0, np.nan], [0.0, 1.0]])


def test_many_subsets_warns():
    rng = np.random.default_rng(0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        validate(rng.normal(size=(30, 5)))
    assert any("subset" in str(w.message) for w in caught)


def test_mix_unmix_round_trip(rng, grid16):
    A = validate([[1, 0], [0, 1], [0.5, 0.5]])
    x = random_vector(rng, grid16, 2)
    y = mix(A, x)
    np.testing.assert_allclose(y.matrix[2], 0.5 * (x.matrix[0] + x.matrix[1]))
    np.testing.assert_allclose(unmix(A, y).matrix, x.matrix, atol=1e-13)


def test_unmix_matches_normal_equations():
    rng = np.random.default_rng(8)
    grid = SincGrid(np.pi, 0.0, 10)
    for _ in range(20):
        entries = rng.normal(size=(4, 2))
        A = validate(entries)
        y = random_vector(rng, grid, 4)
        ref = np.linalg.solve(entries.T @ entries, entries.T @ y.matrix)
        np.testing.assert_allclose(unmix(A, y).matrix, ref, atol=1e-9)


def test_dimension_mismatch(rng, grid16):
    A = validate([[1, 0], [0, 1], [1, 1]])
    with pytest.raises(MixingError):
        mix(A, random_vector(rng, grid16, 3))
    with pytest.raises(MixingError):
        unmix(A, random_vector(rng, grid16, 2))
    with pytest.raises(MixingError):
        project_colspace(A, random_vector(rng, grid16, 2))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_projector_properties(seed):
    rng = np.random.default_rng(seed)
    n_rows = int(rng.integers(2, 6))
    n_cols = int(rng.integers(1, n_rows + 1))
    A = validate(rng.normal(size=(n_rows, n_cols)), check_all_subsets=False)
    P = A.projector
    np.testing.assert_allclose(P @ P, P, atol=1e-12)
    np.testing.assert_allclose(P, P.T, atol=1e-14)
    np.testing.assert_allclose(P @ A.entries, A.entries, atol=1e-12)


def test_project_colspace_vector(rng, grid16):
    A = validate([[1, 0], [0, 1], [1, 1]])
    y = random_vector(rng, grid16, 3)
    once = project_colspace(A, y)
    assert isinstance(once, VectorSignal)
    twice = project_colspace(A, once)
    np.testing.assert_allclose(twice.matrix, once.matrix, atol=1e-13)
    # residual orthogonal to the range
    np.testing.assert_allclose(A.entries.T @ (y.matrix - once.matrix), 0, atol=1e-13)


def test_project_colspace_in_range_is_fixed(rng, grid16):
    A = validate([[2, 1], [0, 1], [1, -1]])
    y = mix(A, random_vector(rng, grid16, 2))
    np.testing.assert_allclose(project_colspace(A, y).matrix, y.matrix, atol=1e-13)


def test_project_colspace_hybrid(rng, grid16):
    A = validate([[1, 0], [0, 1], [1, 1]])
    base = random_vector(rng, grid16, 3)
    rows = [
        HybridSignal(base[0], [Rectangle(0.0, 1.0, 0.3)]),
        HybridSignal(base[1], [Rectangle(1.0, 2.5, -0.2), Rectangle(0.0, 1.0, 0.1)]),
        base[2],
    ]
    once = project_colspace(A, rows)
    twice = project_colspace(A, once)
    t = np.linspace(-1, 18, 777)
    for a, b in zip(once, twice):
        np.testing.assert_allclose(a(t), b(t), atol=1e-13)
    # pointwise the stack lies in range(A): third = first + second
    vals = np.stack([r(t) for r in once])
    np.testing.assert_allclose(vals[2], vals[0] + vals[1], atol=1e-13)
    # and pointwise it is P applied to the input values
    raw = np.stack([r(t) for r in rows])
    np.testing.assert_allclose(vals, A.projector @ raw, atol=1e-13)


def test_project_colspace_plain_sinc_rows(rng, grid16):
    A = validate(np.eye(2))
    rows = (SincSignal(grid16, rng.normal(size=16)), SincSignal(grid16, rng.normal(size=16)))
    out = project_colspace(A, rows)
    for a, b in zip(out, rows):
        np.testing.assert_allclose(a.coeffs, b.coeffs, atol=1e-15)
