"""
Looking inside the attention
============================

After training, the model exposes three N x N matrices for any input
window: the row-normalized attention, the gate that decides how much of
the geographic adjacency to keep, and their fusion.  The CLI command
``colagnn export-attention`` writes the same matrices as CSV.
"""

import numpy as np

from colagnn.data import prepare
from colagnn.model import ColaGNN, ColaGnnConfig
from colagnn.synthetic import seasonal_benchmark
from colagnn.train import TrainConfig, train_model

bench = seasonal_benchmark()
data = prepare(bench.series, window=20, horizon=5)
model = ColaGNN(ColaGnnConfig(), bench.adjacency.normalized, window=20, rng=np.random.default_rng(1))
train_model(model, data.train, data.val, TrainConfig(max_epochs=60, patience=20, seed=1))

att = model.attention(data.test.inputs[0])
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print("phase lag per location (weeks):", bench.lags.round(1))
print("\nrow-normalized attention (row i: how location i weighs the others)\n", att.raw)
print("\ngate, mean over entries:", att.gate.mean().round(3))
print("\nfused matrix\n", att.fused)

# is attention asymmetric?  a_ij and a_ji are free to differ
print("\nmax |A - A^T|:", np.abs(att.raw - att.raw.T).max().round(3))
