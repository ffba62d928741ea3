"""Three edge devices share what they learned through the aggregation server over TCP."""

import numpy as np

from fedoselm import data
from fedoselm.anomaly import fit, losses
from fedoselm.elm import Activation, Topology
from fedoselm.federation import EdgeNode, FederationServer, TcpTransport, list_available

ds = data.synth_clusters(n_features=16, n_classes=3, rows_per_class=200, seed=8)
topo = Topology.autoencoder(16, 8, Activation.IDENTITY, init_seed=123)

with FederationServer() as server:  # port 0: the OS picks a free one
    host, port = server.address
    print(f"server on {host}:{port}")

    nodes = {}
    for label in ds.classes:
        det = fit(topo, ds.rows(label), ridge=1e-4)
        nodes[f"car-{label}"] = EdgeNode(f"car-{label}", det, TcpTransport(host, port))
        nodes[f"car-{label}"].publish()
    print("registered:", list_available(nodes["car-0"].transport))

    me = nodes["car-0"]
    print("car-0 loss per pattern before:",
          [round(float(losses(me.detector, ds.rows(p)).mean()), 5) for p in ds.classes])
    report = me.sync(["car-1", "car-2"])
    print("merged", report.merged, "samples", report.sample_count)
    print("car-0 loss per pattern after: ",
          [round(float(losses(me.detector, ds.rows(p)).mean()), 5) for p in ds.classes])

    # a second round finds nothing new and does not double count
    print("second round unchanged:", me.sync(["car-1", "car-2"]).unchanged)

    for node in nodes.values():
        node.transport.close()
