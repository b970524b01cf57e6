import numpy as np

from tsencoder import EncoderConfig
from tsencoder.data import synth_corpus
from tsencoder.evaluation import k_sweep
from tsencoder.trainer import TrainConfig

# harder corpus: more noise, more classes
corpus = synth_corpus(n_types=3, datasets_per_type=2, classes=5, noise=0.8)

rows = k_sweep(corpus, [2, 8, 32, 128], ["1NN", "LR"], np.random.default_rng(2),
               EncoderConfig(filters=(16, 32, 64)), TrainConfig(max_epochs=3))

print("   k  regime  mean A")
for r in rows:
    print(f"{r.k:4d}  {r.regime:6s} {r.mean_accuracy:6.1f}")
