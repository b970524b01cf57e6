"""Multi-head training of the encoder, plus fine-tuning and from-scratch regimes.

Pre-training visits every dataset once per round (in a fresh random order)
and takes one SGD step on a single random batch through that dataset's own
classification head. An epoch is ``rounds_per_epoch`` rounds. The learning
rate is divided by ``lr_decay_factor`` whenever the validation loss has not
improved for more than ``patience`` epochs, and training stops once it
drops below ``stop_lr``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import numerics as nx
from .data import Corpus, LabeledDataset, Split
from .encoder import EncoderConfig, EncoderParams, build, encode_series, represent
from .numerics import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.005
    lr_decay_factor: float = 3.0
    patience: int = 10
    stop_lr: float = 1e-4
    batch_size: int = 12
    rounds_per_epoch: int = 20
    max_epochs: int | None = None
    seed: int = 0

    def __post_init__(self):
        problems = []
        if not (self.lr > 0 and self.lr_decay_factor > 1 and self.stop_lr > 0):
            problems.append("lr, stop_lr must be positive and lr_decay_factor > 1")
        if self.stop_lr >= self.lr:
            problems.append(f"stop_lr {self.stop_lr} must be below lr {self.lr}")
        if self.patience < 0 or self.batch_size < 1 or self.rounds_per_epoch < 1:
            problems.append("patience >= 0, batch_size >= 1, rounds_per_epoch >= 1 required")
        if self.max_epochs is not None and self.max_epochs < 1:
            problems.append("max_epochs must be positive")
        if problems:
            raise ValueError("invalid training config: " + "; ".join(problems))


@dataclass
class Head:
    """Per-dataset classifier mapping the k-dim representation to class logits."""

    dataset: str
    weight: Tensor
    bias: Tensor

    @classmethod
    def fresh(cls, dataset: str, k: int, n_classes: int, rng: np.random.Generator) -> "Head":
        bound = math.sqrt(1.0 / k)
        return cls(dataset,
                   Tensor(rng.uniform(-bound, bound, (n_classes, k)), requires_grad=True),
                   Tensor(rng.uniform(-bound, bound, n_classes), requires_grad=True))

    def __call__(self, reps: Tensor) -> Tensor:
        return nx.linear(reps, self.weight, self.bias)

    def values(self) -> list[Tensor]:
        return [self.weight, self.bias]

    def copy(self) -> "Head":
        return Head(self.dataset, Tensor(self.weight.data.copy(), requires_grad=True),
                    Tensor(self.bias.data.copy(), requires_grad=True))


@dataclass
class TrainRun:
    params: EncoderParams
    heads: dict[str, Head]
    train_losses: list[float] = field(default_factory=list)
    val_losses: list[float] = field(default_factory=list)
    lrs: list[float] = field(default_factory=list)
    steps: list[int] = field(default_factory=list)
    best_epoch: int = -1
    initial_val_loss: float = float("nan")
    reductions: int = 0
    final_lr: float = float("nan")

    @property
    def epochs(self) -> int:
        return len(self.val_losses)

    @property
    def best_val_loss(self) -> float:
        return self.val_losses[self.best_epoch]

    def write_log(self, path) -> None:
        """Tab-separated: epoch, lr, train loss, validation loss."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("epoch\tlr\ttrain_loss\tval_loss\n")
            for i, (lr, tr, va) in enumerate(zip(self.lrs, self.train_losses, self.val_losses)):
                fh.write(f"{i}\t{lr!r}\t{tr!r}\t{va!r}\n")


# --------------------------------------------------------------------------
# optimizers

def sgd_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], lr: float):
    """Plain SGD, in place: ``p -= lr * g``."""
    for p, g in zip(params, grads):
        p -= lr * g
    return params


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: Sequence[np.ndarray], grads: Sequence[np.ndarray],
              lr: float):
    """One bias-corrected Adam update, in place."""
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


class PlateauSchedule:
    """Divide the learning rate when the monitored loss stops improving.

    Improvement means strictly below the best loss so far. After more than
    ``patience`` consecutive non-improving epochs the rate is divided by
    ``factor`` and the counter restarts.
    """

    def __init__(self, lr: float, factor: float, patience: int, stop_lr: float):
        self.lr = lr
        self.factor = factor
        self.patience = patience
        self.stop_lr = stop_lr
        self.best = math.inf
        self.bad_epochs = 0
        self.reductions = 0

    def step(self, loss: float) -> bool:
        """Record one epoch's loss; returns True if it is a new best."""
        if loss < self.best:
            self.best = loss
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        if self.bad_epochs > self.patience:
            self.lr /= self.factor
            self.reductions += 1
            self.bad_epochs = 0
        return False

    @property
    def done(self) -> bool:
        return self.lr < self.stop_lr


# --------------------------------------------------------------------------
# training

def batch_loss(params: EncoderParams, head: Head, split: Split, idx, train: bool,
               rng: np.random.Generator | None) -> Tensor:
    series = [split.series[i] for i in idx]
    reps, order = encode_series(params, series, train, rng)
    labels = split.labels[np.asarray(idx)[order]]
    return nx.cross_entropy(head(reps), labels)


def _step(params: EncoderParams, head: Head, split: Split, idx, rng, update) -> float:
    tensors = params.values() + head.values()
    for t in tensors:
        t.zero_grad()
    loss = batch_loss(params, head, split, idx, True, rng)
    nx.backward(loss)
    update([t.data for t in tensors], [t.grad for t in tensors])
    return float(loss.data)


def epoch(params: EncoderParams, heads: dict[str, Head], splits: dict[str, Split],
          config: TrainConfig, lr: float, rng: np.random.Generator) -> tuple[float, int]:
    """One pre-training epoch over every dataset in ``splits``.

    Returns the mean batch loss and the number of optimizer steps taken.
    """
    for name, split in splits.items():
        if len(split) == 0:
            raise ValueError(f"dataset {name!r} has no training instances")
    names = list(splits)
    losses = []
    for _ in range(config.rounds_per_epoch):
        for j in rng.permutation(len(names)):
            name = names[j]
            split = splits[name]
            idx = rng.choice(len(split), size=min(config.batch_size, len(split)), replace=False)
            losses.append(_step(params, heads[name], split, idx, rng,
                                lambda p, g: sgd_step(p, g, lr)))
    return float(np.mean(losses)), len(losses)


def split_loss(params: EncoderParams, head: Head, split: Split, batch_size: int = 256) -> float:
    """Eval-mode cross-entropy over a whole split."""
    reps = represent(params, split.series, batch_size)
    return float(nx.cross_entropy(head(Tensor(reps)), split.labels).data)


def validation_loss(params: EncoderParams, heads: dict[str, Head],
                    splits: dict[str, Split]) -> float:
    """Unweighted mean over datasets of the full-split validation loss."""
    missing = [name for name in splits if name not in heads]
    if missing:
        raise KeyError(f"no classification head for datasets {missing}")
    for name, split in splits.items():
        if len(split) == 0:
            raise ValueError(f"dataset {name!r} has no validation instances")
    return float(np.mean([split_loss(params, heads[name], split) for name, split in splits.items()]))


def fit(train_splits: dict[str, Split], val_splits: dict[str, Split], n_classes: dict[str, int],
        encoder_config: EncoderConfig, config: TrainConfig, rng: np.random.Generator,
        validate: Callable[[EncoderParams, dict[str, Head]], float] | None = None,
        log_path=None) -> TrainRun:
    """Pre-train an encoder across datasets, returning the best-validation snapshot.

    ``validate`` overrides the validation loss (used for schedule tests).
    """
    if not train_splits:
        raise ValueError("training corpus is empty")
    init_rng, loop_rng = rng.spawn(2)
    params = build(encoder_config, init_rng)
    heads = {name: Head.fresh(name, encoder_config.k, n_classes[name], init_rng)
             for name in train_splits}
    validate = validate or (lambda p, h: validation_loss(p, h, val_splits))
    schedule = PlateauSchedule(config.lr, config.lr_decay_factor, config.patience, config.stop_lr)
    run = TrainRun(params.copy(), {n: h.copy() for n, h in heads.items()})
    run.initial_val_loss = validate(params, heads)
    while not schedule.done:
        lr = schedule.lr
        train_loss, steps = epoch(params, heads, train_splits, config, lr, loop_rng)
        val = validate(params, heads)
        if not math.isfinite(val):
            raise FloatingPointError(f"validation loss became {val} at epoch {run.epochs}")
        run.train_losses.append(train_loss)
        run.val_losses.append(val)
        run.lrs.append(lr)
        run.steps.append(steps)
        if schedule.step(val):
            run.best_epoch = run.epochs - 1
            run.params = params.copy()
            run.heads = {n: h.copy() for n, h in heads.items()}
        log.info("epoch %d lr %.3g train %.4f val %.4f", run.epochs - 1, lr, train_loss, val)
        if config.max_epochs is not None and run.epochs >= config.max_epochs:
            break
    run.reductions, run.final_lr = schedule.reductions, schedule.lr
    if log_path is not None:
        run.write_log(log_path)
    return run


def fit_corpus(corpus: Corpus, encoder_config: EncoderConfig, config: TrainConfig,
               rng: np.random.Generator, **kwargs) -> TrainRun:
    """``fit`` on every dataset of ``corpus`` with per-dataset 80/20 train/validation splits."""
    from .evaluation import split_train_val

    split_rngs = rng.spawn(len(corpus) + 1)
    train, val, n_classes = {}, {}, {}
    for ds, srng in zip(corpus, split_rngs[:-1]):
        train[ds.name], val[ds.name] = split_train_val(ds.train, srng)
        n_classes[ds.name] = ds.n_classes
    return fit(train, val, n_classes, encoder_config, config, split_rngs[-1], **kwargs)


# --------------------------------------------------------------------------
# target-task regimes

def _supervised(params: EncoderParams, split: Split, n_classes: int, epochs: int, lr: float,
                batch_size: int, rng: np.random.Generator) -> tuple[EncoderParams, Head]:
    if len(split) == 0:
        raise ValueError("target training split is empty")
    head_rng, loop_rng = rng.spawn(2)
    head = Head.fresh("target", params.config.k, n_classes, head_rng)
    state = AdamState()
    for _ in range(epochs):
        perm = loop_rng.permutation(len(split))
        for start in range(0, len(split), batch_size):
            _step(params, head, split, perm[start:start + batch_size], loop_rng,
                  lambda p, g: adam_step(state, p, g, lr))
    return params, head


def adapt(pretrained: EncoderParams, split: Split, n_classes: int, rng: np.random.Generator,
          epochs: int = 100, lr: float = 5e-5, batch_size: int = 12) -> tuple[EncoderParams, Head]:
    """Fine-tune a copy of a pre-trained encoder together with a fresh head (Adam)."""
    return _supervised(pretrained.copy(), split, n_classes, epochs, lr, batch_size, rng)


def train_new(config: EncoderConfig, split: Split, n_classes: int, rng: np.random.Generator,
              epochs: int = 100, lr: float = 1e-4, batch_size: int = 12) -> tuple[EncoderParams, Head]:
    """Train a freshly initialized encoder and head on the target split only (Adam)."""
    init_rng, run_rng = rng.spawn(2)
    return _supervised(build(config, init_rng), split, n_classes, epochs, lr, batch_size, run_rng)


def predict(params: EncoderParams, head: Head, series: Sequence[np.ndarray]) -> np.ndarray:
    """Eval-mode class predictions; ties go to the lowest class id."""
    logits = head(Tensor(represent(params, series))).data
    return np.argmax(logits, axis=1)
