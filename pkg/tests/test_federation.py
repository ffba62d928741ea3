import socket
import struct
import warnings

import numpy as np
import pytest

from fedoselm.anomaly import fit, losses
from fedoselm.elm import Activation, Chunk, Topology, init_model, train_batch
from fedoselm.errors import FormatError, TransportError
from fedoselm.federation import (
    EdgeNode, FederationMessage, FederationServer, InProcessTransport, Kind, ServerRegistry,
    TcpTransport, decode_message, deserialize, download, edge_round, encode_message,
    list_available, payload_size, register, serialize, server_handle, upload,
)
from fedoselm.federation import modelfile, wire
from fedoselm.merge import extract

TOPO = Topology.autoencoder(6, 4, Activation.IDENTITY, init_seed=11)


def make_detector(seed, rows=40, topo=TOPO, center=0.5):
    g = np.random.default_rng(seed)
    return fit(topo, g.normal(center, 0.1, (rows, topo.n_input)), ridge=1e-4)


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestWire:
    def test_size_formula(self):
        ir = extract(make_detector(0).model)
        assert len(serialize(ir)) == 43 + 8 * (4 * 4 + 4 * 6) == payload_size(4, 6)

    def test_round_trip_bit_exact(self):
        ir = extract(make_detector(0).model)
        back = deserialize(serialize(ir))
        assert back.u.tobytes() == ir.u.tobytes()
        assert back.v.tobytes() == ir.v.tobytes()
        assert back.topology == ir.topology
        assert (back.sample_count, back.ridge) == (ir.sample_count, ir.ridge)

    def test_header_fields(self):
        blob = serialize(extract(make_detector(0).model))
        magic, version, seed, n, nh, m, act, ridge, count = wire.HEADER.unpack_from(blob)
        assert (magic, version, seed, n, nh, m, act) == (b"OSUV", 1, 11, 6, 4, 6, 0)
        assert count == 40 and ridge == 1e-4

    def test_truncated(self):
        blob = serialize(extract(make_detector(0).model))
        with pytest.raises(FormatError, match=f"expected {len(blob)} bytes, got {len(blob) - 1}"):
            deserialize(blob[:-1])

    def test_header_only_truncated(self):
        with pytest.raises(FormatError, match="header"):
            deserialize(b"OSUV\x01")

    def test_bad_magic(self):
        blob = serialize(extract(make_detector(0).model))
        with pytest.raises(FormatError, match="magic"):
            deserialize(b"XXXX" + blob[4:])


class TestEnvelope:
    @pytest.mark.parametrize("msg", [
        FederationMessage(Kind.REGISTER, "dev-1"),
        FederationMessage(Kind.UPLOAD, "dévice", payload=b"\x00\x01\x02"),
        FederationMessage(Kind.ERROR, "x", error_text="unknown device"),
        FederationMessage(Kind.ACK, ""),
    ])
    def test_round_trip(self, msg):
        assert decode_message(encode_message(msg)) == msg

    def test_layout(self):
        raw = encode_message(FederationMessage(Kind.UPLOAD, "ab", payload=b"xyz"))
        assert raw == b"\x01" + struct.pack("<H", 2) + b"ab" + struct.pack("<I", 3) + b"xyz" + b"\x00\x00"

    def test_truncated(self):
        raw = encode_message(FederationMessage(Kind.UPLOAD, "ab", payload=b"xyz"))
        with pytest.raises(FormatError):
            decode_message(raw[:-3])

    def test_unknown_kind(self):
        with pytest.raises(FormatError):
            decode_message(b"\x09\x00\x00\x00\x00\x00\x00\x00\x00")


class TestServerHandle:
    def test_upload_then_list_and_download(self):
        state = ServerRegistry(clock=lambda: 42.0)
        blob = serialize(extract(make_detector(0).model))
        state, reply = server_handle(state, FederationMessage(Kind.UPLOAD, "a", payload=blob))
        assert reply.kind is Kind.ACK
        assert state.entries["a"].uploaded_at == 42.0
        _, reply = server_handle(state, FederationMessage(Kind.LIST, "a"))
        assert reply.payload == b"a"
        _, reply = server_handle(state, FederationMessage(Kind.DOWNLOAD, "a"))
        assert reply.payload == blob

    def test_unknown_device(self):
        _, reply = server_handle(ServerRegistry(), FederationMessage(Kind.DOWNLOAD, "ghost"))
        assert reply.kind is Kind.ERROR and reply.error_text == "unknown device"

    def test_malformed_upload_leaves_registry(self):
        state = ServerRegistry()
        state, reply = server_handle(state, FederationMessage(Kind.UPLOAD, "a", payload=b"OSUVjunk"))
        assert reply.kind is Kind.ERROR and reply.error_text.startswith("malformed payload")
        assert state.entries == {}

    def test_reupload_replaces(self):
        state = ServerRegistry()
        a = serialize(extract(make_detector(0).model))
        b = serialize(extract(make_detector(1).model))
        server_handle(state, FederationMessage(Kind.UPLOAD, "a", payload=a))
        server_handle(state, FederationMessage(Kind.UPLOAD, "a", payload=b))
        assert state.entries["a"].payload == b and len(state.entries) == 1

    def test_list_sorted(self):
        state = ServerRegistry()
        blob = serialize(extract(make_detector(0).model))
        for dev in ("c", "a", "b"):
            server_handle(state, FederationMessage(Kind.UPLOAD, dev, payload=blob))
        assert list_available(InProcessTransport(state)) == ["a", "b", "c"]

    def test_register(self):
        state = ServerRegistry()
        register(InProcessTransport(state), "d")
        assert "d" in state.registered


@pytest.fixture
def server():
    with FederationServer() as srv:
        yield srv


class TestTcp:
    def test_upload_download(self, server):
        blob = serialize(extract(make_detector(0).model))
        with TcpTransport(*server.address) as t:
            upload(t, "a", blob)
            assert download(t, "a") == blob
            assert download(t, "nobody") is None
            assert list_available(t) == ["a"]

    def test_two_clients_see_each_other(self, server):
        host, port = server.address
        t1 = TcpTransport.from_address(f"{host}:{port}")
        t2 = TcpTransport.from_address(f"{host}:{port}")
        a, b = make_detector(0), make_detector(1)
        edge_round(a, [], t1, "a")
        da, _ = edge_round(b, ["a"], t2, "b")
        assert "a" in list_available(t2)
        t1.close(), t2.close()

    def test_garbage_drops_connection_only(self, server):
        with socket.create_connection(server.address, timeout=5) as s:
            s.sendall(struct.pack("<I", 5) + b"\xff\xff\xff\xff\xff")
            assert s.recv(1) == b""
        with TcpTransport(*server.address) as t:
            assert list_available(t) == []

    def test_connection_refused(self):
        s = socket.socket()
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
        s.close()
        with pytest.raises(TransportError):
            list_available(TcpTransport("127.0.0.1", port, timeout=1))


class TestEdgeRound:
    def test_zero_peers_round_trip(self):
        det = make_detector(0)
        after, report = edge_round(det, [], InProcessTransport(), "a")
        assert report.merged == [] and report.ok
        assert rel(after.model.beta, det.model.beta) < 1e-10

    def test_mutual_merge_identical(self):
        t = InProcessTransport()
        a, b = EdgeNode("a", make_detector(0, center=0.3), t), EdgeNode("b", make_detector(1, center=0.7), t)
        a.publish(), b.publish()
        a.sync(["b"]), b.sync(["a"])
        assert rel(a.detector.model.beta, b.detector.model.beta) < 1e-9

    def test_matches_union_batch(self):
        g0, g1 = np.random.default_rng(0), np.random.default_rng(1)
        x0, x1 = g0.normal(0.3, 0.1, (40, 6)), g1.normal(0.7, 0.1, (40, 6))
        t = InProcessTransport()
        a = EdgeNode("a", fit(TOPO, x0, ridge=1e-4), t)
        b = EdgeNode("b", fit(TOPO, x1, ridge=1e-4), t)
        b.publish()
        a.sync(["b"])
        union = train_batch(init_model(TOPO), Chunk(np.vstack([x0, x1])), ridge=2e-4)
        assert rel(a.detector.model.beta, union.beta) < 1e-7

    def test_one_round_among_three(self):
        xs = [np.random.default_rng(s).normal(0.2 + 0.3 * s, 0.1, (30, 6)) for s in range(3)]
        t = InProcessTransport()
        nodes = [EdgeNode(f"d{i}", fit(TOPO, x, ridge=1e-4), t) for i, x in enumerate(xs)]
        for node in nodes:
            node.publish()
        for node in nodes:
            node.sync([f"d{i}" for i in range(3)])
        union = train_batch(init_model(TOPO), Chunk(np.vstack(xs)), ridge=3e-4)
        for node in nodes:
            assert rel(node.detector.model.beta, union.beta) < 1e-7

    def test_seed_mismatch_skipped(self):
        t = InProcessTransport()
        other = Topology.autoencoder(6, 4, Activation.IDENTITY, init_seed=12)
        EdgeNode("b", make_detector(1, topo=other), t).publish()
        det = make_detector(0)
        after, report = edge_round(det, ["b"], t, "a")
        assert "b" in report.incompatible and not report.ok
        assert rel(after.model.beta, det.model.beta) < 1e-10

    def test_missing_peer(self):
        _, report = edge_round(make_detector(0), ["ghost"], InProcessTransport(), "a")
        assert report.missing == ["ghost"]

    def test_repeated_rounds_do_not_double_count(self):
        t = InProcessTransport()
        a, b = EdgeNode("a", make_detector(0), t), EdgeNode("b", make_detector(1), t)
        b.publish()
        first = a.sync(["b"])
        second = a.sync(["b"])
        assert first.merged == ["b"] and second.unchanged == ["b"]
        assert a.detector.model.sample_count == 80

    def test_peer_update_replaces_old_contribution(self):
        t = InProcessTransport()
        a = EdgeNode("a", make_detector(0), t)
        b = EdgeNode("b", make_detector(1), t)
        b.publish()
        a.sync(["b"])
        b.detector = make_detector(2, rows=60)
        b.publish()
        report = a.sync(["b"])
        assert report.merged == ["b"] and a.detector.model.sample_count == 100

    def test_own_contribution_survives_merge(self):
        t = InProcessTransport()
        a, b = EdgeNode("a", make_detector(0), t), EdgeNode("b", make_detector(1), t)
        own = a.own_intermediates()
        b.publish()
        a.sync(["b"])
        assert rel(a.own_intermediates().u, own.u) < 1e-8

    def test_self_duplicate_warns(self):
        t = InProcessTransport()
        a = EdgeNode("a", make_detector(0), t)
        upload(t, "copy", a.own_payload())
        with pytest.warns(UserWarning, match="own contribution"):
            report = a.sync(["copy"])
        assert report.duplicate_of_self == ["copy"]

    def test_merged_detector_improves_on_peer_data(self):
        t = InProcessTransport()
        a = EdgeNode("a", make_detector(0, center=0.2), t)
        b = EdgeNode("b", make_detector(1, center=0.8), t)
        peer_rows = np.random.default_rng(5).normal(0.8, 0.1, (20, 6))
        before = losses(a.detector, peer_rows).mean()
        b.publish()
        a.sync(["b"])
        assert losses(a.detector, peer_rows).mean() < before


class TestModelFile:
    def test_round_trip(self, tmp_path):
        t = InProcessTransport()
        a, b = EdgeNode("a", make_detector(0), t), EdgeNode("b", make_detector(1), t)
        b.publish()
        a.sync(["b"])
        path = tmp_path / "a.osm"
        modelfile.save(path, a)
        back = modelfile.load(path)
        assert back.device_id == "a" and set(back.merged) == {"b"}
        x = np.random.default_rng(3).uniform(0, 1, (5, 6))
        assert losses(back.detector, x).tobytes() == losses(a.detector, x).tobytes()
        assert modelfile.read_contribution(path) == a.own_payload()

    def test_threshold_preserved(self):
        from dataclasses import replace

        node = EdgeNode("a", replace(make_detector(0), threshold=0.25))
        assert modelfile.loads(modelfile.dumps(node)).detector.threshold == 0.25

    def test_truncated(self):
        blob = modelfile.dumps(EdgeNode("a", make_detector(0)))
        with pytest.raises(FormatError):
            modelfile.loads(blob[:-5])
