import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gnss_ncr.dataset import (
    DatasetError, LabeledRecording, apply_normalizer, fit_normalizer, load_labeled_dataset, load_recording,
    make_windows, split_by_sets, train_normalizer, window_arrays, windows_for,
)
from gnss_ncr.features import write_feature_csv
from gnss_ncr.gru import CLASS_NAMES
from gnss_ncr.synthetic import epochs_to_nmea, generate_recording, write_dataset


def fake_recording(label, set_id, n, d=10, seed=0):
    rec = LabeledRecording(label, set_id)
    rec.set_features("zt", np.random.default_rng(seed).normal(size=(n, d)))
    return rec


@pytest.mark.parametrize("n, expected", [(100, 95), (6, 1), (5, 0), (0, 0)])
def test_window_counts(n, expected):
    assert len(make_windows(fake_recording(0, "a", n))) == expected


def test_window_label_is_final_epoch():
    X = np.arange(8, dtype=float)[:, None].repeat(10, axis=1)
    labels = np.array([0, 0, 0, 0, 0, 0, 4, 4])
    W, y = window_arrays(X, labels)
    assert W.shape == (3, 6, 10)
    assert list(y) == [0, 4, 4]
    np.testing.assert_array_equal(W[2, :, 0], np.arange(2, 8))


def test_window_stride():
    W, _ = window_arrays(np.zeros((20, 3)), np.zeros(20, dtype=int), length=6, stride=5)
    assert W.shape[0] == 3


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 40), max_size=8))
def test_window_conservation(lengths):
    recs = [fake_recording(0, f"s{i}", n, seed=i) for i, n in enumerate(lengths)]
    X, y = windows_for(recs, "zt")
    assert X.shape[0] == y.shape[0] == sum(max(0, n - 5) for n in lengths)


def test_windows_never_cross_recordings():
    a = LabeledRecording(0, "a")
    a.set_features("zt", np.zeros((8, 10)))
    b = LabeledRecording(1, "b")
    b.set_features("zt", np.ones((8, 10)))
    X, y = windows_for([a, b], "zt")
    for w, lab in zip(X, y):
        assert len(np.unique(w)) == 1 and w[0, 0] == lab


def dataset_of(sets=7):
    return [fake_recording(c, f"{CLASS_NAMES[c]}/set{s:02d}", 10, seed=c * 10 + s)
            for c in range(7) for s in range(sets)]


def test_split_counts_and_disjoint():
    recs = dataset_of()
    train, test = split_by_sets(recs, 1, seed=0)
    assert (len(train), len(test)) == (42, 7)
    assert {r.set_id for r in train}.isdisjoint({r.set_id for r in test})
    assert sorted(r.label for r in test) == list(range(7))


def test_split_deterministic():
    recs = dataset_of()
    a = split_by_sets(recs, 2, seed=5)
    b = split_by_sets(recs, 2, seed=5)
    assert [r.set_id for r in a[1]] == [r.set_id for r in b[1]]


def test_split_cannot_empty_train():
    with pytest.raises(DatasetError):
        split_by_sets(dataset_of(), 7)


def test_normalizer_standardises_training_set():
    X = np.random.default_rng(0).normal(loc=[30, 1, -2], scale=[5, 0.1, 3], size=(200, 3))
    Z = apply_normalizer(fit_normalizer(X), X)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-9)
    np.testing.assert_allclose(Z.std(axis=0), 1, atol=1e-6)


def test_normalizer_constant_column_and_single_vector():
    X = np.column_stack([np.full(5, 7.0), np.arange(5.0)])
    Z = apply_normalizer(fit_normalizer(X), X)
    assert np.all(Z[:, 0] == 0)
    one = np.array([[3.0, 4.0]])
    assert np.all(apply_normalizer(fit_normalizer(one), one) == 0)


def test_train_normalizer_ignores_test_data():
    recs = dataset_of()
    train, test = split_by_sets(recs, 1)
    n1 = train_normalizer(train)
    for r in test:
        r.set_features("zt", r.features("zt") + 1000.0)
    n2 = train_normalizer(train)
    np.testing.assert_array_equal(n1.mean, n2.mean)


def test_load_dataset_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    recs = [generate_recording(c, 12, rng, set_id=f"{CLASS_NAMES[c]}/set{s:02d}") for c in range(7) for s in range(2)]
    write_dataset(recs, tmp_path)
    back = load_labeled_dataset(tmp_path)
    assert len(back) == 14
    assert sum(len(r) for r in back) == 14 * 12
    assert sorted({r.label for r in back}) == list(range(7))
    orig = {r.set_id: r for r in recs}
    for r in back:
        # NMEA groups satellites by talker, so summation order (and the last ulp) can differ
        np.testing.assert_allclose(r.features("zt"), orig[r.set_id].features("zt"), rtol=1e-12, atol=1e-12)


def test_load_dataset_missing_class(tmp_path):
    for name in CLASS_NAMES[:5]:
        (tmp_path / name).mkdir()
    with pytest.raises(DatasetError, match="shallow_indoor, deep_indoor"):
        load_labeled_dataset(tmp_path)


def test_load_dataset_empty_class(tmp_path):
    for name in CLASS_NAMES:
        (tmp_path / name).mkdir()
    with pytest.raises(DatasetError, match="no recordings"):
        load_labeled_dataset(tmp_path)


def test_load_unparseable_file_names_it(tmp_path):
    p = tmp_path / "junk.nmea"
    p.write_text("not nmea at all\n")
    with pytest.raises(DatasetError, match="junk.nmea"):
        load_recording(p, 0)


def test_load_feature_csv(tmp_path):
    p = tmp_path / "set01.csv"
    X = np.random.default_rng(1).normal(size=(20, 9))
    write_feature_csv(p, np.arange(20) * 0.2, np.full(20, 3), X)
    rec = load_recording(p)
    assert rec.label == 3 and len(rec) == 20
    np.testing.assert_array_equal(rec.features("yt"), X)
    with pytest.raises(DatasetError):
        rec.features("zt")


def test_label_sidecar(tmp_path):
    rng = np.random.default_rng(2)
    rec = generate_recording(0, 10, rng)
    p = tmp_path / "trace.nmea"
    p.write_text(epochs_to_nmea(rec.epochs))
    (tmp_path / "trace.labels.csv").write_text("t,label\n" + "".join(f"{i},{i // 5}\n" for i in range(10)))
    back = load_recording(p, 0)
    assert list(back.epoch_labels()) == [0] * 5 + [1] * 5
