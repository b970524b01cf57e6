"""Leave-one-type-out evaluation, metrics and the representation-size sweep."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import adapters, trainer
from .data import Corpus, LabeledDataset, Split
from .encoder import EncoderConfig, represent

log = logging.getLogger(__name__)

REGIMES = ("1NN", "LR", "SVM", "ADAPT", "NEW")
FROZEN = ("1NN", "LR", "SVM")
MAX_K = 1024


# --------------------------------------------------------------------------
# splitting

def split_leave_one_type_out(corpus: Corpus, held_out: str) -> tuple[Corpus, list[LabeledDataset]]:
    types = corpus.types()
    if held_out not in types:
        raise KeyError(f"unknown data type {held_out!r}; corpus has {types}")
    if len(types) < 2:
        raise ValueError("leave-one-type-out needs at least 2 distinct data types")
    train = Corpus([d for d in corpus if d.kind != held_out])
    return train, corpus.of_type(held_out)


def split_train_val(split: Split, rng: np.random.Generator) -> tuple[Split, Split]:
    """Random, non-stratified 80/20 partition; at least one validation instance."""
    n = len(split)
    if n < 2:
        raise ValueError(f"cannot split {n} instance(s) into train and validation")
    n_val = max(1, int(math.floor(0.2 * n)))
    perm = rng.permutation(n)
    return split.subset(np.sort(perm[n_val:])), split.subset(np.sort(perm[:n_val]))


# --------------------------------------------------------------------------
# metrics

def accuracy(pred, true) -> float:
    pred, true = np.asarray(pred), np.asarray(true)
    if pred.shape != true.shape or pred.size == 0:
        raise ValueError(f"prediction shape {pred.shape} vs label shape {true.shape}")
    return 100.0 * float(np.mean(pred == true))


def majority_accuracy(train_labels, test_labels) -> float:
    """Accuracy of always predicting the most frequent train class (lowest id on ties)."""
    values, counts = np.unique(np.asarray(train_labels), return_counts=True)
    majority = values[np.argmax(counts)]
    return accuracy(np.full(len(test_labels), majority), test_labels)


def accuracy_ratio(acc: float, majority: float) -> float:
    """``(A - A_M) / (100 - A_M)``; NaN when the majority classifier is perfect."""
    if majority >= 100.0:
        return float("nan")
    return (acc - majority) / (100.0 - majority)


def ranks(acc: np.ndarray) -> np.ndarray:
    """Per-column ranks of an ``[approaches, datasets]`` table, 1 = best, ties averaged."""
    acc = np.asarray(acc, dtype=np.float64)
    greater = (acc[None, :, :] > acc[:, None, :]).sum(axis=1)
    equal = (acc[None, :, :] == acc[:, None, :]).sum(axis=1)
    return 1.0 + greater + (equal - 1) / 2.0


@dataclass
class Summary:
    approach: str
    mean_accuracy: float
    mean_ratio: float
    average_rank: float
    wins: int


def aggregate(approaches: Sequence[str], acc, ratios=None) -> list[Summary]:
    """Mean A, mean R (NaN entries skipped), average rank and win counts.

    Every approach tied for the best accuracy on a dataset gets a win.
    """
    acc = np.asarray(acc, dtype=np.float64)
    if acc.ndim != 2 or acc.shape[0] != len(approaches):
        raise ValueError(f"accuracy table {acc.shape} for {len(approaches)} approaches")
    r = ranks(acc)
    wins = (acc == acc.max(axis=0, keepdims=True)).sum(axis=1)
    ratios = np.full_like(acc, np.nan) if ratios is None else np.asarray(ratios, dtype=np.float64)
    out = []
    for i, name in enumerate(approaches):
        valid = ratios[i][~np.isnan(ratios[i])]
        out.append(Summary(name, float(acc[i].mean()),
                           float(valid.mean()) if valid.size else float("nan"),
                           float(r[i].mean()), int(wins[i])))
    return out


# --------------------------------------------------------------------------
# protocol

@dataclass
class Row:
    dataset: str
    kind: str
    approach: str
    accuracy: float
    majority_accuracy: float
    ratio: float


@dataclass
class FoldInfo:
    held_out: str
    epochs: int
    initial_val_loss: float
    first_val_loss: float
    best_val_loss: float


@dataclass
class EvalReport:
    rows: list[Row] = field(default_factory=list)
    folds: list[FoldInfo] = field(default_factory=list)

    def approaches(self) -> list[str]:
        return list(dict.fromkeys(r.approach for r in self.rows))

    def datasets(self) -> list[str]:
        return list(dict.fromkeys(r.dataset for r in self.rows))

    def table(self, field_name: str = "accuracy") -> np.ndarray:
        index = {(r.approach, r.dataset): getattr(r, field_name) for r in self.rows}
        return np.array([[index[(a, d)] for d in self.datasets()] for a in self.approaches()])

    def mean_accuracy(self, approach: str) -> float:
        return float(np.mean([r.accuracy for r in self.rows if r.approach == approach]))

    def summary(self) -> list[Summary]:
        return aggregate(self.approaches(), self.table(), self.table("ratio"))

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["dataset", "type", "approach", "accuracy", "majority_accuracy", "ratio"])
            for r in self.rows:
                w.writerow([r.dataset, r.kind, r.approach, repr(r.accuracy),
                            repr(r.majority_accuracy), repr(r.ratio)])

    def write_summary_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["approach", "mean_accuracy", "mean_ratio", "average_rank", "wins"])
            for s in self.summary():
                w.writerow([s.approach, repr(s.mean_accuracy), repr(s.mean_ratio),
                            repr(s.average_rank), s.wins])


def _check_regimes(regimes: Iterable[str]) -> tuple[str, ...]:
    regimes = tuple(regimes)
    if not regimes:
        raise ValueError(f"no evaluation regimes given; choose from {', '.join(REGIMES)}")
    bad = [r for r in regimes if r not in REGIMES]
    if bad:
        raise ValueError(f"unknown regimes {bad}; valid names are {', '.join(REGIMES)}")
    return regimes


def evaluate_dataset(params, ds: LabeledDataset, regimes: Sequence[str], encoder_config,
                     rng: np.random.Generator, adapt_epochs: int = 100,
                     new_epochs: int = 100, batch_size: int = 12) -> dict[str, np.ndarray]:
    """Predictions on ``ds.test`` for every regime. Only train labels are consulted."""
    preds = {}
    frozen = [r for r in regimes if r in FROZEN]
    if frozen:
        raw = represent(params, ds.train.series)
        stats = adapters.standardize_fit(raw)
        tr = adapters.standardize_apply(stats, raw)
        te = adapters.standardize_apply(stats, represent(params, ds.test.series))
        for regime in frozen:
            if regime == "1NN":
                preds[regime] = adapters.knn1(tr, ds.train.labels, te)
            elif regime == "LR":
                preds[regime] = adapters.logreg_fit(tr, ds.train.labels, C=0.1).predict(te)
            else:
                preds[regime] = adapters.svm_fit(tr, ds.train.labels, C=100.0).predict(te)
    adapt_rng, new_rng = rng.spawn(2)
    if "ADAPT" in regimes:
        p, head = trainer.adapt(params, ds.train, ds.n_classes, adapt_rng,
                                epochs=adapt_epochs, batch_size=batch_size)
        preds["ADAPT"] = trainer.predict(p, head, ds.test.series)
    if "NEW" in regimes:
        p, head = trainer.train_new(encoder_config, ds.train, ds.n_classes, new_rng,
                                    epochs=new_epochs, batch_size=batch_size)
        preds["NEW"] = trainer.predict(p, head, ds.test.series)
    return preds


def run_protocol(corpus: Corpus, encoder_config: EncoderConfig, regimes: Iterable[str],
                 rng: np.random.Generator, train_config: trainer.TrainConfig | None = None,
                 adapt_epochs: int = 100, new_epochs: int = 100,
                 held_out_types: Sequence[str] | None = None) -> EvalReport:
    """Leave-one-type-out evaluation of every requested regime.

    For each type, an encoder is pre-trained on all other types and each
    held-out dataset is scored on its own test split.
    """
    regimes = _check_regimes(regimes)
    train_config = train_config or trainer.TrainConfig()
    types = corpus.types()
    if len(types) < 2:
        raise ValueError("leave-one-type-out needs at least 2 distinct data types")
    folds = list(held_out_types) if held_out_types is not None else types
    fold_rngs = rng.spawn(len(folds))
    report = EvalReport()
    for held_out, frng in zip(folds, fold_rngs):
        train_corpus, test_sets = split_leave_one_type_out(corpus, held_out)
        fit_rng, eval_rng = frng.spawn(2)
        log.info("fold %s: pre-training on %d datasets", held_out, len(train_corpus))
        run = trainer.fit_corpus(train_corpus, encoder_config, train_config, fit_rng)
        report.folds.append(FoldInfo(held_out, run.epochs, run.initial_val_loss,
                                     run.val_losses[0], run.best_val_loss))
        for ds, drng in zip(test_sets, eval_rng.spawn(len(test_sets))):
            try:
                preds = evaluate_dataset(run.params, ds, regimes, encoder_config, drng,
                                         adapt_epochs, new_epochs, train_config.batch_size)
            except Exception as exc:
                raise RuntimeError(f"fold {held_out!r}, dataset {ds.name!r}: {exc}") from exc
            maj = majority_accuracy(ds.train.labels, ds.test.labels)
            for regime in regimes:
                acc = accuracy(preds[regime], ds.test.labels)
                report.rows.append(Row(ds.name, ds.kind, f"Encoder-{regime}", acc, maj,
                                       accuracy_ratio(acc, maj)))
    return report


@dataclass
class SweepRow:
    k: int
    regime: str
    mean_accuracy: float


def check_k_values(ks: Iterable[int]) -> list[int]:
    ks = [int(k) for k in ks]
    bad = [k for k in ks if not 1 <= k <= MAX_K]
    if bad:
        raise ValueError(f"representation sizes must lie in [1, {MAX_K}], got {bad}")
    if not ks:
        raise ValueError("k sweep needs at least one value")
    return ks


def k_sweep(corpus: Corpus, ks: Iterable[int], regimes: Iterable[str], rng: np.random.Generator,
            encoder_config: EncoderConfig | None = None,
            train_config: trainer.TrainConfig | None = None, **protocol_kwargs) -> list[SweepRow]:
    """Mean accuracy per (k, regime), retraining the encoder for each k.

    Every k reuses the same random stream, so splits and sampling agree
    across sizes.
    """
    ks = check_k_values(ks)
    regimes = _check_regimes(regimes)
    encoder_config = encoder_config or EncoderConfig()
    base = int(rng.integers(2 ** 63))
    rows = []
    for k in ks:
        report = run_protocol(corpus, encoder_config.with_k(k), regimes,
                              np.random.default_rng(base), train_config, **protocol_kwargs)
        for regime in regimes:
            rows.append(SweepRow(k, regime, report.mean_accuracy(f"Encoder-{regime}")))
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "regime", "mean_accuracy"])
        for r in rows:
            w.writerow([r.k, r.regime, repr(r.mean_accuracy)])
