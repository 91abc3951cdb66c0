import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radsentry.cluster_synth import ORIGINAL, LabeledDataset
from radsentry.gbdt import GbdtParams, gbdt_fit
from radsentry.preprocess import FeatureMatrix
from radsentry.tuning import (
    SearchSpace,
    TrialResult,
    random_search,
    retrain_compact,
    sample_combinations,
    select_features,
    write_trials_csv,
)

FAST = GbdtParams(min_samples_leaf=5, n_bins=32)


def make_dataset(X, y):
    names = tuple(f"f{i}" for i in range(X.shape[1]))
    return LabeledDataset(FeatureMatrix(X, names), y, np.full(len(y), ORIGINAL))


@pytest.fixture
def split(rng):
    X = rng.random((400, 4))
    y = ((X[:, 0] + 0.5 * X[:, 2] + 0.2 * rng.standard_normal(400)) > 0.8).astype(int)
    return make_dataset(X[:300], y[:300]), make_dataset(X[300:], y[300:])


# -- search space ----------------------------------------------------------------------


def test_space_decode_enumerates_product():
    space = SearchSpace((1, 2), (3, 5), (7, 8))
    assert space.size == 12
    decoded = [tuple(space.decode(c).values()) for c in range(space.size)]
    assert decoded == list(itertools.product((1, 2), (3, 4, 5), (7, 8)))


def test_space_validation_and_round_trip():
    with pytest.raises(ValueError):
        SearchSpace(n_estimators=(5, 4))
    space = SearchSpace((2, 9), (1, 1), (3, 4))
    assert SearchSpace.from_dict(space.to_dict()) == space


def test_sampling_distinct_and_deterministic():
    space = SearchSpace()
    a = sample_combinations(space, 50, seed=9)
    assert a == sample_combinations(space, 50, seed=9)
    assert len({tuple(c.values()) for c in a}) == 50


def test_sampling_clamps_with_warning():
    space = SearchSpace((1, 2), (3, 3), (4, 4))
    with pytest.warns(RuntimeWarning, match="clamping"):
        combos = sample_combinations(space, 5)
    assert sorted(c["n_estimators"] for c in combos) == [1, 2]
    with pytest.raises(ValueError):
        sample_combinations(space, 0)


def test_sampling_uniform():
    space = SearchSpace((1, 3), (1, 2), (1, 2))  # 12 combinations
    counts = {}
    # consecutive seeds from the default root seed
    for s in range(2024, 12_024):
        key = tuple(sample_combinations(space, 1, seed=s)[0].values())
        counts[key] = counts.get(key, 0) + 1
    p = 1 / space.size
    expected = 10_000 * p
    sigma = np.sqrt(expected * (1 - p))
    assert len(counts) == space.size
    assert all(abs(c - expected) <= 3 * sigma for c in counts.values())
    # chi-square, 11 dof, 0.1% critical value
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert chi2 < 31.26


# -- random search ---------------------------------------------------------------------


def test_collapsed_space_returns_point(split):
    train, val = split
    space = SearchSpace((42, 42), (6, 6), (18, 18))
    best, trials = random_search(space, 1, train, val, seed=3, base=FAST)
    assert (best.n_estimators, best.max_depth, best.num_leaves) == (42, 6, 18)
    assert len(trials) == 1 and trials[0].rank == 1


def test_search_deterministic_and_winner_best(split, tmp_path):
    train, val = split
    space = SearchSpace((5, 20), (2, 5), (4, 10))
    best_a, trials_a = random_search(space, 5, train, val, seed=11, base=FAST)
    best_b, trials_b = random_search(space, 5, train, val, seed=11, base=FAST, threads=3)
    assert best_a == best_b
    assert [(t.params, t.metrics, t.rank) for t in trials_a] == [(t.params, t.metrics, t.rank) for t in trials_b]
    assert best_a == min(trials_a, key=TrialResult.sort_key).params
    winner = next(t for t in trials_a if t.rank == 1)
    assert all(winner.metrics.f1 >= t.metrics.f1 for t in trials_a)
    assert sorted(t.rank for t in trials_a) == [1, 2, 3, 4, 5]
    write_trials_csv(trials_a, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0].startswith("trial,rank,n_estimators") and len(lines) == 6


def test_rank_tie_breaks():
    from radsentry.evaluation import MetricsReport

    m = MetricsReport(0.9, 0.8, 0.8, 0.8)
    few = TrialResult(1, GbdtParams(n_estimators=10), m)
    many = TrialResult(0, GbdtParams(n_estimators=30), m)
    better_acc = TrialResult(2, GbdtParams(n_estimators=50), MetricsReport(0.95, 0.8, 0.8, 0.8))
    assert sorted([many, few, better_acc], key=TrialResult.sort_key) == [better_acc, few, many]


# -- feature selection -----------------------------------------------------------------


def test_select_features_examples():
    sel = select_features([0.5, 0.3, 0.15, 0.05], 0.90)
    assert sel.retained == (0, 1, 2)
    assert sel.cumulative_importance == pytest.approx(0.95)
    one = select_features([3.0])
    assert one.retained == (0,) and one.cumulative_importance == 1.0
    # equal importances: lower index first
    assert select_features([1, 1, 1, 1], 0.5).retained == (0, 1)


@pytest.mark.parametrize("bad", [[0, 0], [-1, 2], [np.nan, 1], []])
def test_select_features_rejects(bad):
    with pytest.raises(ValueError):
        select_features(bad)


def exhaustive_prefix(imp, threshold):
    # order by (-importance, index), then scan every prefix length
    order = sorted(range(len(imp)), key=lambda i: (-imp[i], i))
    total = sum(imp)
    for k in range(1, len(imp) + 1):
        if sum(imp[i] for i in order[:k]) / total >= threshold - 1e-12:
            return tuple(order[:k])
    return tuple(order)


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.floats(0, 1, allow_nan=False), min_size=20, max_size=20).filter(lambda v: sum(v) > 0),
    st.floats(0.05, 1.0),
)
def test_select_features_oracle_and_minimal(imp, threshold):
    sel = select_features(imp, threshold)
    assert sel.retained == exhaustive_prefix(imp, threshold)
    total = sum(imp)
    assert sel.cumulative_importance >= threshold - 1e-9
    shorter = sum(imp[i] for i in sel.retained[:-1]) / total
    assert shorter < threshold


# -- compact retrain -------------------------------------------------------------------


def test_retrain_all_features_matches_plain_fit(split):
    train, _ = split
    sel = select_features([1, 1, 1, 1], 1.0)
    assert sel.retained == (0, 1, 2, 3)
    compact = retrain_compact(train, sel, FAST.with_(n_estimators=10))
    plain = gbdt_fit(train.matrix.values, train.labels, FAST.with_(n_estimators=10))
    for a, b in zip(compact.trees, plain.trees):
        assert np.array_equal(a.feature, b.feature) and np.array_equal(a.threshold, b.threshold)
    X = train.matrix.values
    assert np.array_equal(compact.predict_raw(X), plain.predict_raw(X))


def test_dropping_constant_column_keeps_predictions(rng):
    X = rng.random((300, 3))
    X[:, 1] = 0.25
    y = (X[:, 0] + X[:, 2] > 1).astype(int)
    ds = make_dataset(X, y)
    p = FAST.with_(n_estimators=15)
    full = gbdt_fit(X, y, p)
    assert full.feature_importances[1] == 0
    sel = select_features(full.feature_importances, 1.0)
    assert 1 not in sel.retained
    compact = retrain_compact(ds, sel, p)
    Xt = rng.random((500, 3))
    np.testing.assert_allclose(compact.predict_raw(Xt), full.predict_raw(Xt), atol=1e-9)


def test_compact_column_bookkeeping(split):
    train, _ = split
    sel = select_features([0.1, 0.6, 0.0, 0.3], 0.85)
    m = retrain_compact(train, sel, FAST.with_(n_estimators=5))
    assert m.n_features == sel.n_retained == 2
    assert m.feature_map == (1, 3) and m.n_input_features == 4
    assert m.predict(train.matrix.values).shape == (len(train),)
    with pytest.raises(ValueError):
        m.predict(np.zeros((1, 3)))
