"""Train an ELM one row at a time and watch it land on the batch solution."""

import numpy as np

from fedoselm import oselm
from fedoselm.elm import Activation, Chunk, Topology, init_model, predict, train_batch

rng = np.random.default_rng(0)

# a small regression problem: 8 inputs, 8 outputs
x = rng.standard_normal((300, 8))
t = np.tanh(x @ rng.standard_normal((8, 8)))

topo = Topology(8, 16, 8, Activation.SIGMOID, init_seed=42)
model = init_model(topo)  # random input layer, beta = 0

batch = train_batch(model, Chunk(x, t), ridge=1e-6)

# sequential: one initial chunk to set P, then one row per update
seq = oselm.init_sequential(model, Chunk(x[:16], t[:16]), ridge=1e-6)
for i, chunk in enumerate(oselm.rows(x[16:], t[16:]), start=17):
    seq = oselm.update(seq, chunk)
    if i in (17, 50, 100, 300):
        gap = np.linalg.norm(seq.beta - batch.beta) / np.linalg.norm(batch.beta)
        print(f"after {i:3d} rows  beta gap to batch {gap:.2e}")

mse = np.mean((predict(seq, x) - t) ** 2)
print(f"training MSE {mse:.4f} with {seq.sample_count} samples seen")
