"""Speed trace -> 15x15 transition tables -> one feature row per window."""

import numpy as np

from fedoselm import data
from fedoselm.anomaly import fit, losses
from fedoselm.elm import Activation, Topology

rng = np.random.default_rng(3)


def trace(mean, jitter, seconds):
    # 1 Hz speed samples in km/h, a random walk around a cruising speed
    steps = rng.normal(0, jitter, seconds)
    return np.clip(mean + np.cumsum(steps) * 0.1, 0, 160)


calm = trace(60, 3, 6000)
erratic = trace(60, 25, 1200)

x_calm = data.driving_features(calm, window=60)
x_erratic = data.driving_features(erratic, window=60)
print("feature rows:", x_calm.shape, x_erratic.shape)

# each 15x15 table is row-stochastic where the level was visited
table = x_calm[0].reshape(15, 15)
print("visited levels:", np.flatnonzero(table.sum(axis=1)))

topo = Topology.autoencoder(225, 16, Activation.SIGMOID, init_seed=0)
det = fit(topo, x_calm[:80], ridge=1e-4)
print("loss on held-out calm windows:", losses(det, x_calm[80:]).mean())
print("loss on erratic windows:      ", losses(det, x_erratic).mean())
