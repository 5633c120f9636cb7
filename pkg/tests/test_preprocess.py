import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from turbtensor.preprocess import (
    BinEdges,
    Discretizer,
    TargetTransform,
    discretize_value,
    fit_quantile_edges,
    fit_standardizer,
    fit_target_transform,
    inverse_target,
    load_preprocessing,
    save_preprocessing,
    signed_log,
    standardize,
    transform_target,
)


def test_standardizer_constant():
    s = fit_standardizer([5, 5, 5])
    assert (s.mu, s.sigma) == (5.0, 0.0)


def test_standardizer_population_std():
    s = fit_standardizer([1, 2, 3])
    assert s.mu == 2.0
    assert s.sigma == pytest.approx(math.sqrt(2 / 3), abs=1e-12)
    assert s.sigma == pytest.approx(0.816497, abs=1e-6)


def test_standardizer_single_sample():
    s = fit_standardizer([0])
    assert (s.mu, s.sigma) == (0.0, 0.0)


@pytest.mark.parametrize("bad", [[], [1.0, float("nan")], [float("inf")]])
def test_standardizer_rejects(bad):
    with pytest.raises(ValueError):
        fit_standardizer(bad)


def test_standardize_values():
    s = fit_standardizer([1, 2, 3])
    assert standardize(s, 3) == pytest.approx(1 / math.sqrt(2 / 3), abs=1e-12)
    assert standardize(s, 3) == pytest.approx(1.224745, abs=1e-6)
    assert standardize(s, 2) == 0.0
    assert standardize(fit_standardizer([4, 4]), 123.0) == 0.0


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30).filter(lambda v: np.std(v) > 1e-3),
       st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_standardize_is_affine(values, a, b):
    s = fit_standardizer(values)
    lhs = standardize(s, a) - standardize(s, b)
    assert lhs == pytest.approx((a - b) / s.sigma, rel=1e-9, abs=1e-9)


def _linear_quantile(sorted_vals, p):
    """Independent oracle: linear interpolation between order statistics."""
    pos = (len(sorted_vals) - 1) * p
    lo = int(math.floor(pos))
    hi = min(lo + 1, len(sorted_vals) - 1)
    return sorted_vals[lo] + (sorted_vals[hi] - sorted_vals[lo]) * (pos - lo)


def test_quantile_edges_six_values():
    b = fit_quantile_edges([1, 2, 3, 4, 5, 6], 3)
    vals = [1, 2, 3, 4, 5, 6]
    expected = [_linear_quantile(vals, 1 / 3), _linear_quantile(vals, 2 / 3)]
    assert b.edges == pytest.approx(expected, abs=1e-12)
    assert b.edges == pytest.approx([8 / 3, 13 / 3], abs=1e-12)


def test_quantile_edges_all_ties_collapse():
    with pytest.warns(UserWarning, match="1 effective bins of 2"):
        b = fit_quantile_edges([1, 1, 1, 1], 2)
    assert b.n_bins == 1
    assert b.requested == 2
    assert discretize_value(b, 1.0) == 0


def test_quantile_edges_hundred_values_ten_bins():
    b = fit_quantile_edges(np.arange(100), 10)
    assert len(b.edges) == 9
    labels = [discretize_value(b, x) for x in range(100)]
    assert np.bincount(labels).tolist() == [10] * 10


def test_quantile_edges_errors():
    with pytest.raises(ValueError):
        fit_quantile_edges([1, 2, 3], 1)
    with pytest.raises(ValueError):
        fit_quantile_edges([1, 2], 3)


def test_discretize_value_branches():
    b = BinEdges((2.6667, 4.3333), 3)
    assert discretize_value(b, 1) == 0
    assert discretize_value(b, 3) == 1
    assert discretize_value(b, 100) == 2
    assert discretize_value(b, 2.6667) == 1  # left-closed intervals
    assert discretize_value(b, 4.3333) == 2


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from([2, 4, 5, 10]), st.integers(10, 30))
def test_equal_frequency_property(seed, K, m):
    n = K * m
    x = np.random.default_rng(seed).normal(size=n)
    b = fit_quantile_edges(x, K)
    counts = np.bincount(b.apply(x), minlength=K)
    assert counts.max() - counts.min() <= 1


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=5, max_size=50), st.integers(2, 6),
       st.floats(-200, 200), st.floats(-200, 200))
def test_monotone_and_dense(values, K, x1, x2):
    if len(values) < K:
        return
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        b = fit_quantile_edges(values, K)
    lo, hi = sorted((x1, x2))
    assert discretize_value(b, lo) <= discretize_value(b, hi)
    labels = set(b.apply(values).tolist())
    assert labels == set(range(b.n_bins))


def _fit_disc(n=101, K=2, seed=0):
    X = np.random.default_rng(seed).normal(size=(n, 4)) * [100, 5, 5, 1] + [1000, 0, 0, 0]
    return X, Discretizer.fit(X, (K,) * 4)


def test_discretize_vector_medians():
    X, disc = _fit_disc(n=101)
    med = np.median(X, axis=0)
    assert disc.discretize_vector(*med) == (1, 1, 1, 1)


def test_discretize_vector_below_minima():
    X, disc = _fit_disc()
    assert disc.discretize_vector(*(X.min(axis=0) - 1.0)) == (0, 0, 0, 0)


def test_discretize_vector_composes_modes():
    X, disc = _fit_disc(K=4)
    probe = [X[3, 0], X[7, 1], X[11, 2], X[13, 3]]
    expected = tuple(
        discretize_value(disc.edges[m], standardize(disc.standardizers[m], probe[m])) for m in range(4)
    )
    assert disc.discretize_vector(*probe) == expected


def test_identity_discretizer():
    disc = Discretizer.identity((3, 4, 5, 6))
    assert disc.discretize_vector(2, 3, 4, 5) == (2, 3, 4, 5)
    assert disc.discretize_vector(0, 0, 0, 0) == (0, 0, 0, 0)


def test_discretizer_json_bit_exact(tmp_path):
    X, disc = _fit_disc(K=7, seed=3)
    tt = fit_target_transform(np.random.default_rng(1).normal(size=50) * 10)
    path = tmp_path / "prep.json"
    save_preprocessing(path, disc, tt)
    disc2, tt2 = load_preprocessing(path)
    assert disc2 == disc
    assert tt2 == tt
    for s1, s2 in zip(disc.standardizers, disc2.standardizers):
        assert s1.mu.hex() == s2.mu.hex() and s1.sigma.hex() == s2.sigma.hex()
    assert json.loads(path.read_text())["discretizer"]["mode_sizes"] == [7, 7, 7, 7]


def test_signed_log_values():
    assert signed_log(0.0) == 0.0
    assert signed_log(math.e - 1) == pytest.approx(1.0, abs=1e-15)
    assert signed_log(-(math.e - 1)) == pytest.approx(-1.0, abs=1e-15)


def test_target_transform_endpoints():
    tt = fit_target_transform([-5, 5])
    assert transform_target(tt, -5.0) == pytest.approx(0.0, abs=1e-15)
    assert transform_target(tt, 5.0) == pytest.approx(1.0, abs=1e-15)


def test_target_transform_degenerate():
    tt = fit_target_transform([2.0, 2.0, 2.0])
    assert transform_target(tt, 2.0) == 0.5
    assert inverse_target(tt, 0.5) == pytest.approx(2.0)


def test_target_transform_empty():
    with pytest.raises(ValueError):
        fit_target_transform([])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=2, max_size=40))
def test_forward_inverse_identity_on_unit_interval(values):
    tt = fit_target_transform(values)
    if tt.hi == tt.lo:
        return
    x = np.linspace(0, 1, 11)
    np.testing.assert_allclose(tt.forward(tt.inverse(x)), x, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=40))
def test_inverse_forward_round_trip(values):
    tt = fit_target_transform(values)
    y = np.asarray(values)
    if tt.hi == tt.lo:
        return
    np.testing.assert_allclose(tt.inverse(tt.forward(y)), y, rtol=1e-9, atol=1e-12)


def test_transform_is_dataclass_roundtrip():
    tt = TargetTransform(0.1, 2.0, -1.0, 3.0)
    assert TargetTransform.from_dict(tt.to_dict()) == tt
