"""Two devices learn different data; one exchange of U and V gives both the union model."""

import numpy as np

from fedoselm.elm import Activation, Chunk, Topology, init_model, train_batch
from fedoselm.merge import combine, extract, rebuild, subtract

rng = np.random.default_rng(1)
topo = Topology(6, 10, 2, Activation.SIGMOID, init_seed=7)  # the seed must be shared

x = rng.standard_normal((400, 6))
t = x @ rng.standard_normal((6, 2)) + 0.01 * rng.standard_normal((400, 2))

a = train_batch(init_model(topo), Chunk(x[:250], t[:250]), ridge=1e-6)
b = train_batch(init_model(topo), Chunk(x[250:], t[250:]), ridge=1e-6)

# U = H^T H and V = H^T t, recovered from each trained model
ua, ub = extract(a), extract(b)
print("payload per device:", ua.u.nbytes + ua.v.nbytes, "bytes (independent of row count)")

merged = rebuild(combine(ua, ub))
union = train_batch(init_model(topo), Chunk(x, t), ridge=2e-6)
print("merged vs union beta:", np.linalg.norm(merged.beta - union.beta) / np.linalg.norm(union.beta))

# taking B back out recovers A
back = rebuild(subtract(combine(ua, ub), ub))
print("after removing B:   ", np.linalg.norm(back.beta - a.beta) / np.linalg.norm(a.beta))
