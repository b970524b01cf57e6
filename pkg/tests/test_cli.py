import csv
import time

import numpy as np
import pytest

from tsencoder import cli
from tsencoder.data import load_manifest

SMALL = """
[encoder]
k = 8
filters = 8, 16, 32

[training]
rounds_per_epoch = 2
max_epochs = 2
seed = 0

[evaluation]
regimes = 1NN, LR
k_sweep = 4, 8
adapt_epochs = 2
new_epochs = 2

[data]
n_types = 2
datasets_per_type = 2
classes = 3
instances = 18
min_length = 24
max_length = 40

[output]
dir = out
"""


def write(tmp_path, text=SMALL, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_synth_writes_corpus(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("n_types = 2", "n_types = 4").replace("datasets_per_type = 2", "datasets_per_type = 3"))
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len([f for f in files if f.endswith("_TRAIN.csv")]) == 12
    assert len([f for f in files if f.endswith("_TEST.csv")]) == 12
    assert "manifest.csv" in files
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    corpus = load_manifest(tmp_path / "a" / "manifest.csv")
    assert len(corpus) == 12 and len(corpus.types()) == 4


def test_synth_rejects_one_class(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("classes = 3", "classes = 1"))
    assert cli.main(["synth", "--config", str(cfg)]) == 1
    assert "classes" in capsys.readouterr().err


def test_unknown_keys_rejected(tmp_path, capsys):
    cfg = write(tmp_path, SMALL + "\n[training2]\nx = 1\n")
    assert cli.main(["train", "--config", str(cfg)]) == 1
    cfg = write(tmp_path, SMALL.replace("seed = 0", "seed = 0\nmomentum = 0.9"))
    assert cli.main(["train", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "training2" in err and "momentum" in err


def test_missing_config(tmp_path, capsys):
    assert cli.main(["train", "--config", str(tmp_path / "none.ini")]) == 1
    assert "not found" in capsys.readouterr().err


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write(root)
    assert cli.main(["train", "--config", str(cfg), "--out", str(root / "t1")]) == 0
    assert cli.main(["train", "--config", str(cfg), "--out", str(root / "t2")]) == 0
    return root


def test_train_outputs(trained):
    weights = trained / "t1" / "encoder.tse"
    assert weights.is_file()
    assert weights.read_bytes() == (trained / "t2" / "encoder.tse").read_bytes()
    log = (trained / "t1" / "train_log.tsv").read_text().splitlines()
    assert log[0].split("\t") == ["epoch", "lr", "train_loss", "val_loss"] and len(log) == 3


def test_train_seed_changes_weights(trained):
    cfg = trained / "run.ini"
    assert cli.main(["train", "--config", str(cfg), "--out", str(trained / "t3"), "--seed", "5"]) == 0
    assert (trained / "t3" / "encoder.tse").read_bytes() != (trained / "t1" / "encoder.tse").read_bytes()


def test_train_missing_manifest(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("[data]", "[data]\nmanifest = nowhere/manifest.csv"))
    assert cli.main(["train", "--config", str(cfg)]) == 1
    assert "manifest" in capsys.readouterr().err


def test_train_from_manifest(tmp_path):
    cfg = write(tmp_path, SMALL.replace("[data]", "[data]\nmanifest = corpus/manifest.csv"))
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "corpus")]) == 0
    assert cli.main(["train", "--config", str(cfg)]) == 0
    assert (tmp_path / "out" / "encoder.tse").is_file()


def test_encode(trained, tmp_path):
    rng = np.random.default_rng(0)
    data_file = tmp_path / "series.csv"
    with open(data_file, "w") as fh:
        for i in range(100):
            fh.write(",".join([str(i % 3)] + [repr(float(v)) for v in rng.normal(size=int(rng.integers(4, 513)))]) + "\n")
    out = tmp_path / "reps.csv"
    start = time.perf_counter()
    assert cli.main(["encode", "--weights", str(trained / "t1" / "encoder.tse"),
                     "--data", str(data_file), "--out", str(out)]) == 0
    assert time.perf_counter() - start < 5.0
    with open(out) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["label"] + [f"z{i}" for i in range(8)]
    assert len(rows) == 101 and all(len(r) == 9 for r in rows[1:])
    assert [r[0] for r in rows[1:4]] == ["0", "1", "2"]
    assert np.isfinite(np.array(rows[1:], dtype=float)).all()


def test_encode_missing_weights(tmp_path, capsys):
    (tmp_path / "d.csv").write_text("0,1,2,3,4\n")
    assert cli.main(["encode", "--weights", str(tmp_path / "x.tse"), "--data",
                     str(tmp_path / "d.csv"), "--out", str(tmp_path / "o.csv")]) == 1
    assert "weight file not found" in capsys.readouterr().err


def test_encode_corrupt_weights(tmp_path, capsys):
    (tmp_path / "x.tse").write_bytes(b"garbage" * 10)
    (tmp_path / "d.csv").write_text("0,1,2,3,4\n")
    assert cli.main(["encode", "--weights", str(tmp_path / "x.tse"), "--data",
                     str(tmp_path / "d.csv"), "--out", str(tmp_path / "o.csv")]) == 1
    assert "not an encoder file" in capsys.readouterr().err


def test_eval(tmp_path):
    cfg = write(tmp_path)
    assert cli.main(["eval", "--config", str(cfg)]) == 0
    with open(tmp_path / "out" / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 * 2
    assert {r["approach"] for r in rows} == {"Encoder-1NN", "Encoder-LR"}
    assert len({r["type"] for r in rows}) == 2
    with open(tmp_path / "out" / "summary.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 2


def test_eval_unknown_regime(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("regimes = 1NN, LR", "regimes = 1NN, KNN"))
    assert cli.main(["eval", "--config", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "KNN" in err and "ADAPT" in err


def test_sweep(tmp_path):
    cfg = write(tmp_path)
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s1")]) == 0
    assert cli.main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "s2")]) == 0
    text = (tmp_path / "s1" / "sweep.csv").read_text()
    assert text == (tmp_path / "s2" / "sweep.csv").read_text()
    rows = list(csv.DictReader(text.splitlines()))
    assert len(rows) == 4
    for regime in ("1NN", "LR"):
        assert [r["k"] for r in rows if r["regime"] == regime] == ["4", "8"]


def test_sweep_rejects_large_k(tmp_path, capsys):
    cfg = write(tmp_path, SMALL.replace("k_sweep = 4, 8", "k_sweep = 4, 2048"))
    assert cli.main(["sweep", "--config", str(cfg)]) == 1
    assert "2048" in capsys.readouterr().err
    assert not (tmp_path / "out").exists()
