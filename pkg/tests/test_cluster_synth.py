import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from radsentry.cluster_synth import (
    ORIGINAL,
    SYNTHETIC,
    AnomalyRules,
    ClusteringError,
    LabeledDataset,
    SmoteConfig,
    build_attack_dataset,
    flag_levels,
    kmeans_fit,
    label_anomalies,
    nearest_neighbors,
    read_labels,
    rowwise_flags,
    search_cluster_count,
    smote_oversample,
    write_labels,
)
from radsentry.preprocess import FeatureMatrix, NoiseConfig

RULES = AnomalyRules()


def exhaustive_optimal_inertia(X, k):
    """Brute force over every assignment of rows to k non-empty groups."""
    best = np.inf
    for assign in itertools.product(range(k), repeat=len(X)):
        a = np.array(assign)
        if len(set(assign)) < k:
            continue
        sse = sum(((X[a == c] - X[a == c].mean(axis=0)) ** 2).sum() for c in range(k))
        best = min(best, sse)
    return best


def brute_assign(X, C):
    out = []
    for x in X:
        d = [float(((x - c) ** 2).sum()) for c in C]
        out.append(d.index(min(d)))
    return np.array(out)


# -- K-Means ----------------------------------------------------------------------


def test_k1_centroid_is_mean(rng):
    X = rng.random((50, 3))
    m = kmeans_fit(X, 1, seed=0)
    np.testing.assert_allclose(m.centroids[0], X.mean(axis=0), atol=1e-9)


def test_two_separated_blobs():
    rng = np.random.default_rng(1)
    a = rng.normal(0, 0.001, (40, 2))
    b = rng.normal(0, 0.001, (60, 2)) + [1.0, 0.0]
    X = np.vstack([a, b])
    m = kmeans_fit(X, 2, seed=5)
    truth = np.r_[np.zeros(40), np.ones(60)]
    agree = (m.assignments == truth).all() or (m.assignments == 1 - truth).all()
    assert agree


@pytest.mark.parametrize("seed", range(5))
def test_eight_points_match_exhaustive_optimum(seed):
    X = np.random.default_rng(100 + seed).random((8, 2))
    opt = exhaustive_optimal_inertia(X, 3)
    m = kmeans_fit(X, 3, seed=seed, n_init=20)
    assert m.inertia <= opt * 1.0 + 1e-9


def test_assignments_are_argmin_and_inertia_recomputes(rng):
    X = rng.random((300, 4))
    m = kmeans_fit(X, 7, seed=2)
    assert np.array_equal(m.assignments, brute_assign(X, m.centroids))
    recomputed = ((X - m.centroids[m.assignments]) ** 2).sum()
    assert m.inertia == pytest.approx(recomputed, rel=1e-6)


def test_inertia_history_non_increasing(rng):
    X = rng.random((500, 3))
    m = kmeans_fit(X, 12, seed=4)
    h = np.array(m.inertia_history)
    assert (np.diff(h) <= 1e-12 * h[:-1]).all()


def test_ties_go_to_lowest_centroid():
    # duplicated points force identical seeds; every row must take cluster 0
    X = np.zeros((5, 2))
    m = kmeans_fit(X, 2, seed=0)
    assert (m.assignments == 0).all()


def test_kmeans_deterministic_and_k_bounds(rng):
    X = rng.random((30, 2))
    a, b = kmeans_fit(X, 4, seed=9), kmeans_fit(X, 4, seed=9)
    assert np.array_equal(a.centroids, b.centroids)
    with pytest.raises(ClusteringError):
        kmeans_fit(X, 31)
    with pytest.raises(ClusteringError):
        kmeans_fit(X, 0)


# -- anomaly rules ------------------------------------------------------------------


def flagged(levels):
    low, high = flag_levels(levels, RULES)
    return sorted(np.asarray(levels)[low].tolist()), sorted(np.asarray(levels)[high].tolist())


def test_flat_zero_flagged():
    assert flagged([0.0, 0.2, 0.25]) == ([0.0], [])


def test_less_than_half_flagged():
    assert flagged([0.08, 0.2, 0.25]) == ([0.08], [])


def test_high_outliers_flagged():
    low, high = flagged([0.2, 0.25, 0.3, 44.0, 66.0])
    assert high == [44.0, 66.0] and low == []
    low, high = flagged([0.2, 0.25, 44.0, 66.0])
    assert high == [44.0, 66.0] and low == []


def test_ordinary_levels_not_flagged():
    assert flagged([0.1, 0.12, 0.15, 0.2, 0.3]) == ([], [])


def test_rowwise_flags_on_raw_values():
    v = np.array([0.0, 0.1, 0.11, 0.12, 0.1, 50.0, 0.0])
    assert rowwise_flags(v, RULES).tolist() == [True, False, False, False, False, True, True]


def test_rules_validate():
    with pytest.raises(ValueError):
        AnomalyRules(near_zero_ratio=1.5)
    with pytest.raises(ValueError):
        AnomalyRules(high_outlier_ratio=1.0)


def _clustered_values():
    """Three groups on a line whose raw values are normal / zero / spike."""
    rng = np.random.default_rng(3)
    X = np.vstack([rng.normal(0, 0.01, (40, 1)), rng.normal(1, 0.01, (10, 1)), rng.normal(2, 0.01, (5, 1))])
    values = np.r_[rng.uniform(0.1, 0.2, 40), np.zeros(10), np.full(5, 40.0)]
    return X, values


def test_label_anomalies_whole_clusters():
    X, values = _clustered_values()
    m = kmeans_fit(X, 3, seed=0)
    lab = label_anomalies(values, m)
    assert lab.labels.sum() == 15
    for c in range(3):
        assert len(set(lab.labels[m.assignments == c].tolist())) == 1
    assert len(lab.low_clusters) == 1 and len(lab.high_clusters) == 1


def test_label_anomalies_all_flagged_errors():
    X = np.array([[0.0], [1.0]])
    m = kmeans_fit(X, 1, seed=0)
    with pytest.raises(ClusteringError):
        label_anomalies(np.zeros(2), m)


# -- cluster-count search -------------------------------------------------------------


def _sandwich():
    """Zero readings sitting between two normal groups: isolated only at k >= 3."""
    rng = np.random.default_rng(4)
    X = np.vstack([rng.normal(0, 0.01, (40, 1)), rng.normal(1, 0.01, (10, 1)), rng.normal(2, 0.01, (40, 1))])
    values = np.r_[rng.uniform(0.1, 0.2, 40), np.zeros(10), rng.uniform(0.1, 0.2, 40)]
    return X, values


def test_search_finds_smallest_isolating_k():
    X, values = _sandwich()
    for k in (1, 2):
        assert not search_cluster_count(X, values, k, k, 1, seed=0).met
    m = kmeans_fit(X, 3, seed=3)
    assert sorted(np.bincount(m.assignments).tolist()) == [10, 40, 40]
    res = search_cluster_count(X, values, 2, 10, n_trials=9, seed=0)
    assert res.met and res.k == 3


def test_search_single_point_space():
    X, values = _sandwich()
    assert search_cluster_count(X, values, 7, 7, n_trials=5).k == 7


def test_search_unmet_returns_best_with_flag():
    X, values = _sandwich()
    res = search_cluster_count(X, values, 1, 2, n_trials=2)
    assert not res.met and res.k in (1, 2)


def test_search_bad_range():
    with pytest.raises(ClusteringError):
        search_cluster_count(np.zeros((3, 1)), np.zeros(3), 5, 2)


# -- SMOTE ----------------------------------------------------------------------------


def test_identical_points_give_identical_synthetics():
    X = np.ones((2, 3))
    out = smote_oversample(X, SmoteConfig(20, k_neighbors=1, seed=0))
    assert np.array_equal(out, np.ones((20, 3)))


def test_diagonal_segment():
    X = np.array([[0.0, 0.0], [1.0, 1.0]])
    out = smote_oversample(X, SmoteConfig(100, k_neighbors=1, seed=1))
    assert np.array_equal(out[:, 0], out[:, 1])
    assert ((out >= 0) & (out <= 1)).all()


def brute_knn(X, i, k):
    d = [(float(((X[i] - X[j]) ** 2).sum()), j) for j in range(len(X)) if j != i]
    d.sort()
    return [j for _, j in d[:k]]


def on_some_segment(s, X, k, tol=1e-9):
    for i in range(len(X)):
        for j in brute_knn(X, i, k):
            seg = X[j] - X[i]
            denom = seg @ seg
            lam = 0.0 if denom == 0 else float((s - X[i]) @ seg / denom)
            if -tol <= lam <= 1 + tol and np.abs(X[i] + lam * seg - s).max() <= tol:
                return True
    return False


def test_smote_segment_property_exhaustive():
    X = np.random.default_rng(8).random((50, 3))
    out = smote_oversample(X, SmoteConfig(500, k_neighbors=5, seed=2))
    assert out.shape == (500, 3)
    assert (out >= X.min(axis=0) - 1e-12).all() and (out <= X.max(axis=0) + 1e-12).all()
    assert all(on_some_segment(s, X, 5) for s in out)


def test_nearest_neighbors_match_brute_force(rng):
    X = rng.random((40, 2))
    nn = nearest_neighbors(X, 4)
    for i in range(40):
        assert nn[i].tolist() == brute_knn(X, i, 4)


def test_smote_errors_and_clamping(caplog):
    with pytest.raises(ValueError):
        smote_oversample(np.zeros((1, 2)), SmoteConfig(5))
    with caplog.at_level(logging.WARNING):
        out = smote_oversample(np.array([[0.0], [1.0], [2.0]]), SmoteConfig(10, k_neighbors=5))
    assert "clamping" in caplog.text and out.shape == (10, 1)
    with pytest.raises(ValueError):
        SmoteConfig(5, k_neighbors=0)


def test_smote_deterministic(rng):
    X = rng.random((20, 2))
    a = smote_oversample(X, SmoteConfig(30, seed=4))
    b = smote_oversample(X, SmoteConfig(30, seed=4))
    assert np.array_equal(a, b)


# -- labeled datasets ----------------------------------------------------------------


def _labeled(n=100, n_pos=10, seed=0):
    rng = np.random.default_rng(seed)
    m = FeatureMatrix(rng.random((n, 3)), ("a", "b", "device:x"))
    labels = np.zeros(n, dtype=np.int8)
    labels[:n_pos] = 1
    return LabeledDataset(m, labels, np.full(n, ORIGINAL))


def test_labeled_dataset_invariants():
    m = FeatureMatrix(np.zeros((2, 1)), ("a",))
    with pytest.raises(ValueError):
        LabeledDataset(m, np.array([0, 2]), np.full(2, ORIGINAL))
    with pytest.raises(ValueError):
        LabeledDataset(m, np.array([0, 0]), np.array([ORIGINAL, SYNTHETIC]))


@pytest.mark.parametrize("n_syn", [0, 30])
def test_attack_dataset_counts(n_syn):
    ds = _labeled()
    out = build_attack_dataset(ds, n_syn, NoiseConfig(0.01, seed=1), seed=2)
    assert len(out) == 100 + n_syn
    assert (out.provenance == SYNTHETIC).sum() == n_syn
    assert (out.labels[out.provenance == SYNTHETIC] == 1).all()
    assert out.labels.sum() == 10 + n_syn


def test_attack_dataset_zero_synthetic_is_noisy_original():
    ds = _labeled()
    out = build_attack_dataset(ds, 0, NoiseConfig(0.0), seed=2)
    # same rows, only reordered
    a = np.sort(out.matrix.values, axis=0)
    b = np.sort(ds.matrix.values, axis=0)
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 30), st.integers(0, 60), st.integers(0, 2**16))
def test_attack_dataset_size_property(n_pos, n_syn, seed):
    ds = _labeled(80, n_pos, seed)
    out = build_attack_dataset(ds, n_syn, NoiseConfig(0.01, seed=seed), seed=seed, k_neighbors=3)
    assert len(out) == 80 + n_syn
    assert out.labels[out.provenance == SYNTHETIC].all()


def test_labels_file_round_trip(tmp_path):
    ds = build_attack_dataset(_labeled(), 5, NoiseConfig(0.0), seed=1)
    write_labels(ds, tmp_path / "l.csv")
    labels, prov = read_labels(tmp_path / "l.csv")
    assert np.array_equal(labels, ds.labels) and np.array_equal(prov, ds.provenance)
