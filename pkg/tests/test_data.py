import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from tsencoder import data as D


def test_znormalize_hand_case():
    # mean 2, population std sqrt(2/3)
    np.testing.assert_allclose(D.znormalize([1.0, 2.0, 3.0]), [-1.224744871391589, 0.0, 1.224744871391589],
                               rtol=1e-14, atol=1e-15)


def test_znormalize_constant():
    assert np.all(D.znormalize(np.full(7, 3.3)) == 0.0)


def test_znormalize_idempotent():
    z = D.znormalize(np.random.default_rng(0).normal(size=50))
    np.testing.assert_allclose(D.znormalize(z), z, atol=1e-12)


@given(arrays(np.float64, st.integers(4, 60), elements=st.floats(-1e6, 1e6)))
def test_znormalize_moments(x):
    z = D.znormalize(x)
    if x.std() < 1e-6:
        return
    assert abs(z.mean()) < 1e-10
    assert abs(z.var() - 1.0) < 1e-8


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_two_lines(tmp_path):
    f = write(tmp_path / "a.csv", "0,1.0,2.0,3.0,4.0\n1,3.0,2.0,1.0,0.0\n")
    ds = D.load_dataset(f, f, "ecg")
    assert len(ds.train) == 2 and ds.n_classes == 2
    assert ds.kind == "ecg"
    assert abs(ds.train.series[0].mean()) < 1e-12


def test_labels_reindexed(tmp_path):
    f = write(tmp_path / "a.csv", "7,1,2,3,4\n3,4,3,2,1\n7,0,1,0,1\n")
    ds = D.load_dataset(f, f, "x")
    assert ds.train.labels.tolist() == [1, 0, 1]


def test_variable_lengths(tmp_path):
    f = write(tmp_path / "a.csv", "0,1,2,3,4\n1,4,3,2,1,0,5\n")
    ds = D.load_dataset(f, f, "x")
    assert [len(s) for s in ds.train.series] == [4, 6]


def test_malformed_token_cites_line(tmp_path):
    f = write(tmp_path / "a.csv", "0,1,2,3,4\n1,2,x,4,5\n")
    with pytest.raises(D.DatasetFormatError, match=":2:"):
        D.load_dataset(f, f, "x")


def test_empty_file(tmp_path):
    f = write(tmp_path / "a.csv", "\n")
    with pytest.raises(D.DatasetFormatError, match="empty"):
        D.load_dataset(f, f, "x")


def test_single_class_rejected(tmp_path):
    f = write(tmp_path / "a.csv", "0,1,2,3,4\n0,2,3,4,5\n")
    with pytest.raises(D.DatasetFormatError, match="2 classes"):
        D.load_dataset(f, f, "x")


def test_save_load_roundtrip(tmp_path, small_corpus):
    manifest = D.save_corpus(small_corpus, tmp_path / "c")
    loaded = D.load_manifest(manifest)
    assert [d.name for d in loaded] == [d.name for d in small_corpus]
    for a, b in zip(loaded, small_corpus):
        assert a.kind == b.kind and a.n_classes == b.n_classes
        assert np.array_equal(a.train.labels, b.train.labels)
        for s, t in zip(a.test.series, b.test.series):
            # series are re-normalized on load; they were already normalized
            np.testing.assert_allclose(s, t, atol=1e-12)
    again = D.load_manifest(D.save_corpus(loaded, tmp_path / "d"))
    for a, b in zip(again, loaded):
        for s, t in zip(a.train.series, b.train.series):
            np.testing.assert_allclose(s, t, atol=1e-12)


def test_missing_manifest(tmp_path):
    with pytest.raises(FileNotFoundError):
        D.load_manifest(tmp_path / "none.csv")


def test_synth_deterministic():
    a, b = D.synth_corpus(seed=11), D.synth_corpus(seed=11)
    for x, y in zip(a, b):
        assert all(np.array_equal(s, t) for s, t in zip(x.train.series, y.train.series))
        assert np.array_equal(x.test.labels, y.test.labels)


def test_synth_counts():
    c = D.synth_corpus(n_types=3, datasets_per_type=2, classes=4, instances=40, length_range=(20, 30))
    assert len(c) == 6 and c.types() == ["type0", "type1", "type2"]
    for ds in c:
        assert len(ds.train) + len(ds.test) == 40
        assert set(ds.train.labels) == set(range(4)) and ds.n_classes == 4
        lengths = {len(s) for s in ds.train.series + ds.test.series}
        assert len(lengths) == 1 and 20 <= lengths.pop() <= 30
        assert all(np.all(np.isfinite(s)) for s in ds.train.series)


def _by_class(split):
    groups = {}
    for s, lab in zip(split.series, split.labels):
        groups.setdefault(lab, []).append(s)
    return groups


def test_synth_noise_free_unshifted_instances_identical():
    c = D.synth_corpus(noise=0.0, max_shift=0.0, n_types=1, datasets_per_type=1, seed=2)
    for group in _by_class(c.datasets[0].train).values():
        assert all(np.array_equal(g, group[0]) for g in group)


def test_synth_noise_free_classes_differ_more_than_shifts():
    c = D.synth_corpus(noise=0.0, n_types=2, datasets_per_type=2, seed=2)
    for ds in c:
        groups = _by_class(ds.train)
        within = max(np.sqrt(np.mean((g - grp[0]) ** 2)) for grp in groups.values() for g in grp)
        firsts = [grp[0] for grp in groups.values()]
        between = min(np.sqrt(np.mean((a - b) ** 2)) for i, a in enumerate(firsts) for b in firsts[:i])
        assert within < between


def test_synth_rejects_one_class():
    with pytest.raises(ValueError, match="2 classes"):
        D.synth_corpus(classes=1)


def test_raw_1nn_separability_default_corpus():
    # each default dataset is separable by 1NN on the raw series
    for ds in D.synth_corpus(seed=0):
        tr, te = np.stack(ds.train.series), np.stack(ds.test.series)
        pred = ds.train.labels[((te[:, None] - tr[None]) ** 2).sum(-1).argmin(1)]
        assert np.mean(pred == ds.test.labels) >= 0.9, ds.name
