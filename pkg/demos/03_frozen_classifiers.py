import numpy as np

from tsencoder import EncoderConfig
from tsencoder.data import synth_corpus
from tsencoder.evaluation import run_protocol
from tsencoder.trainer import TrainConfig

corpus = synth_corpus(n_types=3, datasets_per_type=2)

# full leave-one-type-out loop, frozen regimes only
report = run_protocol(corpus, EncoderConfig(filters=(16, 32, 64), k=32),
                      ["1NN", "LR", "SVM"], np.random.default_rng(1),
                      TrainConfig(max_epochs=3))

for row in report.rows:
    print(f"{row.dataset:6s} {row.approach:12s} A={row.accuracy:5.1f}  R={row.ratio:.2f}")

print()
print("approach       mean A   mean R   rank  wins")
for s in report.summary():
    print(f"{s.approach:12s} {s.mean_accuracy:7.1f} {s.mean_ratio:8.2f} {s.average_rank:6.2f} {s.wins:5d}")

for f in report.folds:
    print(f"fold {f.held_out}: {f.epochs} epochs, val loss {f.first_val_loss:.3f} -> {f.best_val_loss:.3f}")
