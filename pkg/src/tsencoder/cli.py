"""Command-line entry point: ``tsencoder {synth,train,encode,eval,sweep}``.

Runs are described by an INI file::

    [encoder]
    k = 256
    filters = 128, 256, 512
    dropout = 0.2

    [training]
    lr = 0.005
    patience = 10
    batch_size = 12
    seed = 0

    [evaluation]
    regimes = 1NN, LR, SVM
    k_sweep = 16, 64, 256

    [data]
    manifest = corpus/manifest.csv

    [output]
    dir = runs/demo

Without ``manifest`` the ``[data]`` section describes a synthetic corpus
instead (n_types, datasets_per_type, classes, instances, min_length,
max_length, noise, train_fraction, max_shift, seed).

Relative paths are resolved against the config file's directory.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import data, encoder, evaluation, trainer

log = logging.getLogger("tsencoder")

ALLOWED = {
    "encoder": {"k", "filters", "kernels", "paddings", "dropout"},
    "training": {"lr", "lr_decay_factor", "patience", "stop_lr", "batch_size",
                 "rounds_per_epoch", "max_epochs", "seed"},
    "evaluation": {"regimes", "k_sweep", "adapt_epochs", "new_epochs"},
    "data": {"manifest", "n_types", "datasets_per_type", "classes", "instances",
             "min_length", "max_length", "noise", "train_fraction", "max_shift", "seed"},
    "output": {"dir"},
}


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    encoder: encoder.EncoderConfig = field(default_factory=encoder.EncoderConfig)
    training: trainer.TrainConfig = field(default_factory=trainer.TrainConfig)
    regimes: tuple[str, ...] = ("1NN", "LR", "SVM")
    k_sweep: tuple[int, ...] = (16, 64, 256, 1024)
    adapt_epochs: int = 100
    new_epochs: int = 100
    manifest: Path | None = None
    synth: data.SynthSpec = field(default_factory=data.SynthSpec)
    output_dir: Path = Path("out")

    def corpus(self) -> data.Corpus:
        if self.manifest is not None:
            return data.load_manifest(self.manifest)
        return data.synth_corpus(self.synth)


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(",", " ").split())


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    problems = []
    for section in parser.sections():
        if section not in ALLOWED:
            problems.append(f"unknown section [{section}]")
            continue
        for key in parser[section]:
            if key not in ALLOWED[section]:
                problems.append(f"unknown key {key!r} in [{section}]")
    if problems:
        raise ConfigError(f"{path}: " + "; ".join(problems))

    base = path.parent
    rc = RunConfig()
    get = lambda s: parser[s] if parser.has_section(s) else {}  # noqa: E731
    try:
        enc = get("encoder")
        ecfg = rc.encoder
        if "k" in enc:
            ecfg = replace(ecfg, k=int(enc["k"]))
        if "filters" in enc:
            ecfg = replace(ecfg, filters=_ints(enc["filters"]))
        if "kernels" in enc:
            ecfg = replace(ecfg, kernels=_ints(enc["kernels"]))
        if "paddings" in enc:
            ecfg = replace(ecfg, paddings=_ints(enc["paddings"]))
        if "dropout" in enc:
            ecfg = replace(ecfg, dropout_p=float(enc["dropout"]))
        rc.encoder = ecfg.validate()

        tr = get("training")
        kinds = {"lr": float, "lr_decay_factor": float, "stop_lr": float, "patience": int,
                 "batch_size": int, "rounds_per_epoch": int, "max_epochs": int, "seed": int}
        rc.training = trainer.TrainConfig(**{key: kinds[key](tr[key]) for key in tr})

        ev = get("evaluation")
        if "regimes" in ev:
            rc.regimes = evaluation._check_regimes(
                r.strip() for r in ev["regimes"].replace(",", " ").split())
        if "k_sweep" in ev:
            rc.k_sweep = tuple(evaluation.check_k_values(_ints(ev["k_sweep"])))
        for key in ("adapt_epochs", "new_epochs"):
            if key in ev:
                setattr(rc, key, int(ev[key]))

        dsec = get("data")
        if "manifest" in dsec:
            rc.manifest = (base / dsec["manifest"]).resolve()
        synth = {}
        for key in ("n_types", "datasets_per_type", "classes", "instances", "seed"):
            if key in dsec:
                synth[key] = int(dsec[key])
        for key in ("noise", "train_fraction", "max_shift"):
            if key in dsec:
                synth[key] = float(dsec[key])
        lo, hi = rc.synth.length_range
        synth["length_range"] = (int(dsec.get("min_length", lo)), int(dsec.get("max_length", hi)))
        rc.synth = data.SynthSpec(**{**rc.synth.__dict__, **synth})
        if rc.synth.classes < 2:
            raise ValueError(f"synthetic datasets need at least 2 classes, got {rc.synth.classes}")

        out = get("output")
        rc.output_dir = (base / out.get("dir", "out")).resolve()
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return rc


def _apply_overrides(rc: RunConfig, args) -> RunConfig:
    if getattr(args, "seed", None) is not None:
        rc.training = replace(rc.training, seed=args.seed)
        rc.synth = replace(rc.synth, seed=args.seed)
    if getattr(args, "out", None) is not None:
        rc.output_dir = Path(args.out).resolve()
    return rc


# --------------------------------------------------------------------------
# commands

def cmd_synth(rc: RunConfig) -> Path:
    corpus = data.synth_corpus(rc.synth)
    return data.save_corpus(corpus, rc.output_dir)


def cmd_train(rc: RunConfig) -> Path:
    corpus = rc.corpus()
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    run = trainer.fit_corpus(corpus, rc.encoder, rc.training,
                             np.random.default_rng(rc.training.seed),
                             log_path=rc.output_dir / "train_log.tsv")
    weights = rc.output_dir / "encoder.tse"
    encoder.save(run.params, weights)
    return weights


def cmd_encode(weights, dataset_file, out) -> Path:
    weights = Path(weights)
    if not weights.is_file():
        raise FileNotFoundError(f"weight file not found: {weights}")
    params = encoder.load(weights)
    rows = data.read_rows(Path(dataset_file))
    reps = encoder.represent(params, [data.znormalize(v) for _, v in rows])
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label"] + [f"z{i}" for i in range(params.config.k)])
        for (label, _), rep in zip(rows, reps):
            w.writerow([label] + [repr(float(v)) for v in rep])
    return out


def cmd_eval(rc: RunConfig) -> Path:
    corpus = rc.corpus()
    report = evaluation.run_protocol(corpus, rc.encoder, rc.regimes,
                                     np.random.default_rng(rc.training.seed), rc.training,
                                     rc.adapt_epochs, rc.new_epochs)
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    report.write_csv(rc.output_dir / "report.csv")
    report.write_summary_csv(rc.output_dir / "summary.csv")
    return rc.output_dir / "report.csv"


def cmd_sweep(rc: RunConfig) -> Path:
    corpus = rc.corpus()
    rows = evaluation.k_sweep(corpus, rc.k_sweep, rc.regimes,
                              np.random.default_rng(rc.training.seed), rc.encoder, rc.training,
                              adapt_epochs=rc.adapt_epochs, new_epochs=rc.new_epochs)
    rc.output_dir.mkdir(parents=True, exist_ok=True)
    path = rc.output_dir / "sweep.csv"
    evaluation.write_sweep_csv(rows, path)
    return path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsencoder", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("synth", "write a synthetic corpus and its manifest"),
                           ("train", "pre-train an encoder on the whole corpus"),
                           ("eval", "leave-one-type-out evaluation report"),
                           ("sweep", "representation-size sweep")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--out", type=Path, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="overrides the configured seed")
    p = sub.add_parser("encode", help="write representations of a dataset file as CSV")
    p.add_argument("--weights", required=True, type=Path)
    p.add_argument("--data", required=True, type=Path)
    p.add_argument("--out", required=True, type=Path)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "encode":
            path = cmd_encode(args.weights, args.data, args.out)
        else:
            rc = _apply_overrides(load_config(args.config), args)
            path = {"synth": cmd_synth, "train": cmd_train,
                    "eval": cmd_eval, "sweep": cmd_sweep}[args.command](rc)
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(path)
    return 0


if __name__ == "__main__":
    sys.exit(main())
