import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from radsentry.ingest import RadiationReading
from radsentry.preprocess import (
    CONTINUOUS_COLUMNS,
    EncoderMap,
    FeatureMatrix,
    MatrixError,
    NoiseConfig,
    Preprocessor,
    apply_minmax,
    fit_minmax,
    inject_noise,
    inverse_minmax,
    one_hot_encode,
    read_matrix,
    write_matrix,
)


def fm(values, names=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    names = names or tuple(f"c{i}" for i in range(values.shape[1]))
    return FeatureMatrix(values, names)


def reading(device, value=0.1, t=0.0):
    return RadiationReading(t, 35.0, 139.0, value, device, t + 60)


# -- FeatureMatrix ----------------------------------------------------------------


def test_matrix_is_read_only_copy():
    src = np.ones((2, 2))
    m = fm(src)
    src[0, 0] = 5
    assert m.values[0, 0] == 1
    with pytest.raises(ValueError):
        m.values[0, 0] = 3


def test_matrix_rejects_bad_shapes_and_nan():
    with pytest.raises(MatrixError):
        FeatureMatrix(np.ones((2, 3)), ("a", "b"))
    with pytest.raises(MatrixError):
        fm([[np.nan]])


# -- min-max ----------------------------------------------------------------------


def test_fit_minmax_simple_and_constant():
    p = fit_minmax(fm([[0, 3], [5, 3], [10, 3]]))
    assert p.mins.tolist() == [0, 3] and p.maxs.tolist() == [10, 3]


def test_fit_minmax_matches_linear_scan():
    m = fm([[4.0, -1.0], [2.5, 7.0], [9.0, 0.5], [3.0, -2.0]])
    lo = [min(r[j] for r in m.values.tolist()) for j in range(2)]
    hi = [max(r[j] for r in m.values.tolist()) for j in range(2)]
    p = fit_minmax(m)
    assert p.mins.tolist() == lo and p.maxs.tolist() == hi


def test_fit_minmax_empty_errors():
    with pytest.raises(MatrixError):
        fit_minmax(FeatureMatrix(np.empty((0, 1)), ("a",)))


def test_apply_minmax_examples():
    p = fit_minmax(fm([0, 5, 10]))
    assert apply_minmax(fm([0, 5, 10]), p).values.ravel().tolist() == [0, 0.5, 1]
    assert apply_minmax(fm([12]), p).values.item() == 1.0
    const = fit_minmax(fm([3, 3, 3]))
    assert apply_minmax(fm([3, 3, 3]), const).values.ravel().tolist() == [0, 0, 0]


def test_apply_minmax_column_mismatch():
    with pytest.raises(MatrixError):
        apply_minmax(fm([[1, 2]]), fit_minmax(fm([1, 2])))


finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)), elements=finite),
       arrays(np.float64, st.tuples(st.integers(1, 20), st.integers(1, 4)), elements=finite))
def test_scaled_entries_in_unit_interval(train, test):
    p = fit_minmax(fm(train))
    if test.shape[1] != train.shape[1]:
        test = np.resize(test, (test.shape[0], train.shape[1]))
    out = apply_minmax(fm(test), p).values
    assert ((out >= 0) & (out <= 1)).all()


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(2, 20), st.integers(1, 4)), elements=finite))
def test_inverse_recovers_inputs(x):
    p = fit_minmax(fm(x))
    back = inverse_minmax(apply_minmax(fm(x), p), p).values
    span = p.maxs - p.mins
    for j in np.flatnonzero(span > 0):
        np.testing.assert_allclose(back[:, j], x[:, j], rtol=1e-9, atol=1e-9 * span[j])


# -- one-hot ----------------------------------------------------------------------


def test_encoder_lexicographic_and_unknown_device():
    enc = EncoderMap.fit(["C", "A", "B", "A"])
    assert enc.devices == ("A", "B", "C")
    block = one_hot_encode([reading("B"), reading("Z")], enc).values
    assert block.tolist() == [[0, 1, 0], [0, 0, 0]]


def test_one_hot_column_sums_equal_frequencies(rng):
    devices = rng.choice(["d1", "d2", "d3", "d4"], size=200).tolist()
    enc = EncoderMap.fit(devices)
    block = one_hot_encode([reading(d) for d in devices], enc).values
    assert block.sum(axis=0).tolist() == [devices.count(d) for d in enc.devices]
    assert set(block.sum(axis=1).tolist()) == {1.0}


# -- noise ------------------------------------------------------------------------


def _mixed(rng, n=10_000):
    cont = rng.random((n, 3))
    onehot = np.eye(2)[rng.integers(2, size=n)]
    return FeatureMatrix(np.hstack([cont, onehot]), ("a", "b", "c", "device:x", "device:y"))


def test_noise_eta_zero_identity(rng):
    m = _mixed(rng, 100)
    assert np.array_equal(inject_noise(m, NoiseConfig(eta=0.0)).values, m.values)


def test_noise_deterministic_and_preserves_one_hot(rng):
    m = _mixed(rng, 500)
    a = inject_noise(m, NoiseConfig(0.05, seed=3))
    b = inject_noise(m, NoiseConfig(0.05, seed=3))
    assert np.array_equal(a.values, b.values)
    assert a.values.shape == m.values.shape
    assert np.array_equal(a.values[:, 3:], m.values[:, 3:])
    assert ((a.values >= 0) & (a.values <= 1)).all()


def test_noise_scale_matches_eta():
    rng = np.random.default_rng(7)
    # keep values away from the clip bounds so clipping does not shrink the noise
    m = FeatureMatrix(0.25 + 0.5 * rng.random((10_000, 3)), ("a", "b", "c"))
    out = inject_noise(m, NoiseConfig(0.01, seed=11))
    diff_std = (out.values - m.values).std(axis=0)
    target = 0.01 * m.values.std(axis=0)
    np.testing.assert_allclose(diff_std, target, rtol=0.2)


def test_noise_row_mask(rng):
    m = _mixed(rng, 100)
    rows = np.zeros(100, dtype=bool)
    rows[:10] = True
    out = inject_noise(m, NoiseConfig(0.1, seed=1), rows=rows)
    assert np.array_equal(out.values[10:], m.values[10:])
    assert not np.array_equal(out.values[:10], m.values[:10])


def test_noise_config_validates():
    with pytest.raises(ValueError):
        NoiseConfig(eta=-0.1)


# -- Preprocessor and files ---------------------------------------------------------


def test_preprocessor_layout_and_raw_values(tmp_path):
    rs = [reading("b", 0.1, 0), reading("a", 0.3, 10), reading("b", 0.2, 20)]
    pre = Preprocessor.fit(rs)
    m = pre.transform(rs)
    assert m.column_names == CONTINUOUS_COLUMNS + ("device:a", "device:b")
    np.testing.assert_allclose(pre.raw_values(m), [0.1, 0.3, 0.2], rtol=1e-12)
    path = tmp_path / "pre.json"
    pre.save(path)
    again = Preprocessor.load(path)
    assert np.array_equal(again.transform(rs).values, m.values)


@pytest.mark.parametrize("suffix", [".csv", ".rdm"])
def test_matrix_file_round_trip(tmp_path, rng, suffix):
    m = FeatureMatrix(rng.random((7, 3)), ("x", "y", "device:z"))
    path = tmp_path / f"m{suffix}"
    write_matrix(m, path)
    back = read_matrix(path)
    assert back.n_rows == 7
    if suffix == ".csv":
        assert back.column_names == m.column_names
        assert np.array_equal(back.values, m.values)
    else:
        assert np.array_equal(back.values, m.values.astype(np.float32).astype(np.float64))
        assert path.read_bytes()[:4] == b"RDM1"
        assert len(path.read_bytes()) == 12 + 4 * 21


def test_rdm_bad_magic(tmp_path):
    path = tmp_path / "m.rdm"
    path.write_bytes(b"XXXX" + bytes(8))
    with pytest.raises(MatrixError, match="magic"):
        read_matrix(path)
