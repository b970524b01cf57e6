import numpy as np

from tsencoder import EncoderConfig, build, encode, represent
from tsencoder.data import znormalize

rng = np.random.default_rng(0)

# an untrained encoder with the default trunk; k = 256
params = build(EncoderConfig(), rng)
print("parameters:", params.n_parameters())

# series of very different lengths all map to the same size
series = [znormalize(np.sin(np.linspace(0, f * np.pi, t)) + 0.1 * rng.normal(size=t))
          for f, t in [(2, 24), (5, 100), (11, 571)]]
reps = represent(params, series)
print("representations:", reps.shape)

# attention weights over time for the first series
inspect = {}
encode(params, series[0][None, None, :], inspect=inspect)
att = inspect["attention"][0]
print("attention shape (filters, time):", att.shape)
print("each filter sums to one:", np.allclose(att.sum(axis=-1), 1.0))
