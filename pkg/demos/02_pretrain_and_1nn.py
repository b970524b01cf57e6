import numpy as np

from tsencoder import EncoderConfig, represent
from tsencoder.adapters import knn1, standardize_apply, standardize_fit
from tsencoder.data import Corpus, synth_corpus
from tsencoder.evaluation import accuracy
from tsencoder.trainer import TrainConfig, fit_corpus

# four synthetic data types, three datasets each
corpus = synth_corpus()
print(len(corpus), "datasets of types", corpus.types())

# hold out one type and pre-train on the rest
held_out = "type0"
source = Corpus([d for d in corpus if d.kind != held_out])
cfg = EncoderConfig(filters=(16, 32, 64), k=32)
run = fit_corpus(source, cfg, TrainConfig(max_epochs=5), np.random.default_rng(0))
for e, (lr, v) in enumerate(zip(run.lrs, run.val_losses)):
    print(f"epoch {e}  lr {lr:.4g}  val loss {v:.4f}")

# frozen encoder + 1NN on the unseen type
for ds in corpus.of_type(held_out):
    stats = standardize_fit(represent(run.params, ds.train.series))
    tr = standardize_apply(stats, represent(run.params, ds.train.series))
    te = standardize_apply(stats, represent(run.params, ds.test.series))
    pred = knn1(tr, ds.train.labels, te)
    print(ds.name, f"{accuracy(pred, ds.test.labels):.1f}%")
