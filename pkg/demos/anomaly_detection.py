"""An autoencoder ELM flags rows it cannot reconstruct."""

from dataclasses import replace

import numpy as np

from fedoselm import data
from fedoselm.anomaly import fit, is_anomaly, losses, train_normal
from fedoselm.elm import Activation, Topology
from fedoselm.evaluation import roc_auc

ds = data.synth_clusters(n_features=32, n_classes=3, rows_per_class=300, seed=4)
train, test = data.split(ds, 0.8, None, seed=4)

topo = Topology.autoencoder(32, 16, Activation.IDENTITY, init_seed=4)
det = fit(topo, train.require("0"), ridge=1e-4)

for label in ds.classes:
    print(f"pattern {label}: mean loss {losses(det, test.rows(label)).mean():.5f}")

scores = losses(det, test.features)
normal = test.labels == "0"
print("ROC-AUC, pattern 0 vs the rest:", round(roc_auc(scores[normal], scores[~normal]), 4))

# threshold from the training losses, then score one row
train_scores = losses(det, train.require("0"))
det = replace(det, threshold=float(np.quantile(train_scores, 0.99)))
row = test.rows("2")[:1]
print("row from pattern 2 ->", is_anomaly(det, row))

# the detector keeps learning: feed it pattern 2 and its loss falls
before = losses(det, test.rows("2")).mean()
for r in train.require("2")[:200]:
    det = train_normal(det, r[None, :])
print(f"pattern 2 loss {before:.5f} -> {losses(det, test.rows('2')).mean():.5f} after 200 updates")
