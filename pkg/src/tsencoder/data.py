"""Datasets, file ingestion and a seeded synthetic corpus.

Dataset files are UTF-8 text with one instance per line: an integer class
label followed by the series values, comma-separated. Rows may differ in
length. A corpus manifest is a CSV with columns ``name,type,train,test``;
relative paths are resolved against the manifest's directory.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

MIN_SERIES_LENGTH = 4
MANIFEST_COLUMNS = ("name", "type", "train", "test")


class DatasetFormatError(ValueError):
    """A dataset or manifest file could not be parsed."""


def znormalize(series) -> np.ndarray:
    """Zero mean, unit (population) variance; constant series map to zeros."""
    x = np.asarray(series, dtype=np.float64)
    sd = x.std()
    if sd < 1e-12:
        return np.zeros_like(x)
    return (x - x.mean()) / sd


@dataclass
class Split:
    series: list[np.ndarray]
    labels: np.ndarray

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.series) != len(self.labels):
            raise ValueError(f"{len(self.series)} series but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, idx) -> "Split":
        idx = np.asarray(idx, dtype=np.int64)
        return Split([self.series[i] for i in idx], self.labels[idx])


@dataclass
class LabeledDataset:
    name: str
    kind: str
    train: Split
    test: Split
    n_classes: int = field(default=0)

    def __post_init__(self):
        if not self.kind:
            raise ValueError(f"dataset {self.name!r} has an empty type tag")
        if not self.n_classes:
            labels = np.concatenate([self.train.labels, self.test.labels])
            self.n_classes = int(labels.max()) + 1 if labels.size else 0


@dataclass
class Corpus:
    datasets: list[LabeledDataset]

    def types(self) -> list[str]:
        """Distinct type tags in first-appearance order."""
        return list(dict.fromkeys(d.kind for d in self.datasets))

    def of_type(self, kind: str) -> list[LabeledDataset]:
        return [d for d in self.datasets if d.kind == kind]

    def __len__(self) -> int:
        return len(self.datasets)

    def __iter__(self):
        return iter(self.datasets)


# --------------------------------------------------------------------------
# files

def read_rows(path: Path) -> list[tuple[float, np.ndarray]]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            tokens = line.split(",")
            try:
                label = float(tokens[0])
                values = np.array([float(tok) for tok in tokens[1:]])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}:{lineno}: non-numeric token ({exc})") from None
            if label != int(label):
                raise DatasetFormatError(f"{path}:{lineno}: class label {tokens[0]!r} is not an integer")
            if values.size < MIN_SERIES_LENGTH:
                raise DatasetFormatError(
                    f"{path}:{lineno}: series of length {values.size} is shorter than {MIN_SERIES_LENGTH}")
            if not np.all(np.isfinite(values)):
                raise DatasetFormatError(f"{path}:{lineno}: non-finite value")
            rows.append((int(label), values))
    if not rows:
        raise DatasetFormatError(f"{path}: empty dataset file")
    return rows


def load_dataset(train_path, test_path, kind: str, name: str | None = None) -> LabeledDataset:
    """Read a train/test file pair; labels are re-indexed by sorted original value."""
    train_rows = read_rows(Path(train_path))
    test_rows = read_rows(Path(test_path))
    original = sorted({lab for lab, _ in train_rows})
    if len(original) < 2:
        raise DatasetFormatError(f"{train_path}: training split needs at least 2 classes")
    index = {lab: i for i, lab in enumerate(original)}
    unknown = {lab for lab, _ in test_rows} - set(index)
    if unknown:
        raise DatasetFormatError(f"{test_path}: labels {sorted(unknown)} absent from training split")

    def split(rows):
        return Split([znormalize(v) for _, v in rows], [index[lab] for lab, _ in rows])

    name = name or Path(train_path).stem.replace("_TRAIN", "")
    return LabeledDataset(name, kind, split(train_rows), split(test_rows), len(original))


def write_split(split: Split, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for label, values in zip(split.labels, split.series):
            fh.write(",".join([str(int(label))] + [repr(float(v)) for v in values]) + "\n")


def save_corpus(corpus: Corpus, directory) -> Path:
    """Write every dataset as ``<name>_TRAIN.csv``/``<name>_TEST.csv`` plus ``manifest.csv``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = directory / "manifest.csv"
    with open(manifest, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for ds in corpus:
            train, test = f"{ds.name}_TRAIN.csv", f"{ds.name}_TEST.csv"
            write_split(ds.train, directory / train)
            write_split(ds.test, directory / test)
            writer.writerow([ds.name, ds.kind, train, test])
    return manifest


def load_manifest(path) -> Corpus:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != MANIFEST_COLUMNS:
            raise DatasetFormatError(
                f"{path}: manifest header must be {','.join(MANIFEST_COLUMNS)}")
        entries = list(reader)
    if not entries:
        raise DatasetFormatError(f"{path}: manifest lists no datasets")
    base = path.parent
    return Corpus([
        load_dataset(base / e["train"], base / e["test"], e["type"], e["name"]) for e in entries
    ])


# --------------------------------------------------------------------------
# synthetic corpus

@dataclass(frozen=True)
class SynthSpec:
    n_types: int = 4
    datasets_per_type: int = 3
    classes: int = 3
    instances: int = 60
    length_range: tuple[int, int] = (32, 128)
    noise: float = 0.3
    train_fraction: float = 0.5
    max_shift: float = 0.03
    seed: int = 0


def _type_recipe(rng: np.random.Generator) -> dict:
    # Mixture weights and parameter ranges shared by every waveform of a type.
    mix = rng.dirichlet(np.ones(3) * 0.7)
    return {
        "mix": mix,  # harmonics, trend, bumps
        "freq": tuple(sorted(rng.uniform(0.5, 4.0, size=2))),
        "n_harm": int(rng.integers(1, 4)),
        "n_bumps": int(rng.integers(1, 4)),
        "width": rng.uniform(0.02, 0.1),
    }


def _class_waveform(recipe: dict, rng: np.random.Generator):
    """A callable on [0, 1] built from the type recipe with class-specific draws."""
    lo, hi = recipe["freq"]
    freqs = rng.uniform(lo, hi + 1.0, size=recipe["n_harm"])
    phases = rng.uniform(0, 2 * np.pi, size=recipe["n_harm"])
    amps = rng.uniform(0.5, 1.5, size=recipe["n_harm"])
    slope = rng.uniform(-3, 3)
    curve = rng.uniform(-3, 3)
    centers = rng.uniform(0.1, 0.9, size=recipe["n_bumps"])
    heights = rng.choice([-1.0, 1.0], size=recipe["n_bumps"]) * rng.uniform(1.0, 3.0, recipe["n_bumps"])
    w_h, w_t, w_b = recipe["mix"]
    width = recipe["width"]

    def wave(u: np.ndarray) -> np.ndarray:
        harm = sum(a * np.sin(2 * np.pi * f * u + ph) for a, f, ph in zip(amps, freqs, phases))
        trend = slope * (u - 0.5) + curve * (u - 0.5) ** 2
        bumps = sum(h * np.exp(-0.5 * ((u - c) / width) ** 2) for h, c in zip(heights, centers))
        return w_h * harm + w_t * trend + w_b * bumps

    return wave


def synth_corpus(spec: SynthSpec = SynthSpec(), **overrides) -> Corpus:
    """Seeded stand-in for a multi-type archive.

    Every type has its own recipe mixing harmonics, polynomial trends and
    localized bumps; every class of a dataset is an independent draw from
    that recipe. Instances add a random temporal shift (up to ``max_shift``
    of the length) and Gaussian noise of standard deviation ``noise`` relative to
    the z-normalized base waveform, then get z-normalized themselves.
    """
    if overrides:
        spec = SynthSpec(**{**spec.__dict__, **overrides})
    if spec.classes < 2:
        raise ValueError(f"synthetic datasets need at least 2 classes, got {spec.classes}")
    if spec.n_types < 1 or spec.datasets_per_type < 1:
        raise ValueError("n_types and datasets_per_type must be positive")
    lo, hi = spec.length_range
    if lo < MIN_SERIES_LENGTH or hi < lo:
        raise ValueError(f"invalid length range {spec.length_range}")
    n_train = int(round(spec.instances * spec.train_fraction))
    if spec.instances < 2 * spec.classes or not spec.classes <= n_train <= spec.instances - 1:
        raise ValueError("too few instances for the requested classes and train fraction")

    datasets = []
    for t in range(spec.n_types):
        type_rng = np.random.default_rng([spec.seed, t])
        recipe = _type_recipe(type_rng)
        for d in range(spec.datasets_per_type):
            rng = np.random.default_rng([spec.seed, t, d])
            length = int(rng.integers(lo, hi + 1))
            u = np.linspace(0.0, 1.0, length)
            waves = _distinct_waveforms(recipe, spec.classes, u, rng)
            # every class present in both splits
            labels = _stratified_labels(spec.classes, spec.instances, n_train, rng)
            series = []
            for lab in labels:
                shift = rng.uniform(-spec.max_shift, spec.max_shift)
                base = znormalize(waves[lab](u + shift))
                series.append(znormalize(base + spec.noise * rng.standard_normal(length)))
            name = f"T{t}D{d}"
            datasets.append(LabeledDataset(
                name, f"type{t}",
                Split(series[:n_train], labels[:n_train]),
                Split(series[n_train:], labels[n_train:]),
                spec.classes))
    return Corpus(datasets)


def _distinct_waveforms(recipe: dict, classes: int, u: np.ndarray, rng,
                        min_rms: float = 1.0, max_tries: int = 200) -> list:
    # Reject draws whose z-normalized shape sits within ``min_rms`` of a kept one.
    waves, shapes = [], []
    for _ in range(max_tries):
        wave = _class_waveform(recipe, rng)
        shape = znormalize(wave(u))
        if np.all(shape == 0):
            continue
        if all(np.sqrt(np.mean((shape - s) ** 2)) >= min_rms for s in shapes):
            waves.append(wave)
            shapes.append(shape)
            if len(waves) == classes:
                return waves
    raise ValueError(f"could not draw {classes} distinct class waveforms")


def _stratified_labels(classes: int, n: int, n_train: int, rng) -> np.ndarray:
    train = np.arange(n_train) % classes
    test = np.arange(n - n_train) % classes
    rng.shuffle(train)
    rng.shuffle(test)
    return np.concatenate([train, test])
