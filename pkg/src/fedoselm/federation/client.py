"""Edge-node side of the cooperative model update.

A node uploads only its *own* contribution: the intermediates of its model
minus every peer contribution it has merged so far. Peers merged in an
earlier round are remembered together with a digest of the bytes that were
merged; when a peer publishes new bytes the old contribution is subtracted
before the new one is added, so repeating a round never counts data twice.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

import numpy as np

from ..anomaly import AnomalyDetector
from ..errors import FedOselmError, IncompatibleTopologyError, TransportError
from ..merge import Intermediates, combine, combine_all, extract, rebuild, subtract
from . import transport as tx
from .wire import deserialize, digest, serialize

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MergedPeer:
    digest: bytes
    intermediates: Intermediates


@dataclass
class RoundReport:
    device_id: str
    merged: list[str] = field(default_factory=list)
    unchanged: list[str] = field(default_factory=list)
    missing: list[str] = field(default_factory=list)
    incompatible: dict[str, str] = field(default_factory=dict)
    #: Peers whose download failed in a way worth retrying.
    failed: dict[str, str] = field(default_factory=dict)
    duplicate_of_self: list[str] = field(default_factory=list)
    sample_count: int = 0
    ridge_total: float = 0.0

    @property
    def ok(self) -> bool:
        return not (self.missing or self.incompatible or self.failed)


def same_contribution(a: Intermediates, b: Intermediates, rtol: float = 1e-7) -> bool:
    """True when ``a`` and ``b`` describe the same data up to rounding."""
    if a.topology != b.topology or a.sample_count != b.sample_count:
        return False
    scale = max(float(np.max(np.abs(b.u), initial=0.0)), 1e-300)
    vscale = max(float(np.max(np.abs(b.v), initial=0.0)), 1e-300)
    return bool(np.max(np.abs(a.u - b.u), initial=0.0) <= rtol * scale
                and np.max(np.abs(a.v - b.v), initial=0.0) <= rtol * vscale)


class EdgeNode:
    def __init__(self, device_id: str, detector: AnomalyDetector,
                 transport: Optional[tx.Transport] = None,
                 merged: Optional[Mapping[str, MergedPeer]] = None):
        self.device_id = device_id
        self.detector = detector
        self.transport = transport
        self.merged: dict[str, MergedPeer] = dict(merged or {})

    def own_intermediates(self) -> Intermediates:
        total = extract(self.detector.model)
        if not self.merged:
            return total
        return subtract(total, combine_all(p.intermediates for p in self.merged.values()))

    def own_payload(self) -> bytes:
        return serialize(self.own_intermediates())

    def publish(self) -> bytes:
        payload = self.own_payload()
        tx.upload(self._transport(), self.device_id, payload)
        return payload

    def _transport(self) -> tx.Transport:
        if self.transport is None:
            raise TransportError("node has no transport configured", peer_id=self.device_id)
        return self.transport

    def absorb(self, payloads: Mapping[str, bytes], report: Optional[RoundReport] = None,
               own: Optional[Intermediates] = None) -> RoundReport:
        """Merge raw peer payloads into the model (combine + rebuild, once)."""
        report = report or RoundReport(self.device_id)
        own = self.own_intermediates() if own is None else own
        merged = dict(self.merged)
        changed = False
        for peer_id, payload in payloads.items():
            d = digest(payload)
            try:
                ir = deserialize(payload)
            except FedOselmError as exc:
                report.failed[peer_id] = f"unreadable payload: {exc}"
                continue
            if same_contribution(ir, own):
                warnings.warn(
                    f"peer {peer_id!r} carries this device's own contribution; "
                    "merging it would count the same data twice, skipped",
                    stacklevel=2,
                )
                report.duplicate_of_self.append(peer_id)
                continue
            prev = merged.get(peer_id)
            if prev is not None and prev.digest == d:
                report.unchanged.append(peer_id)
                continue
            try:
                combine(own, ir)  # topology / seed check only
            except IncompatibleTopologyError as exc:
                log.warning("skipping peer %s: %s", peer_id, exc)
                report.incompatible[peer_id] = str(exc)
                continue
            merged[peer_id] = MergedPeer(d, ir)
            report.merged.append(peer_id)
            changed = True

        if changed or not self.merged:
            total = combine_all([own, *(p.intermediates for p in merged.values())])
            self.detector = self.detector.with_model(rebuild(total))
            self.merged = merged
        model = self.detector.model
        report.sample_count = model.sample_count
        report.ridge_total = model.ridge
        return report

    def sync(self, peer_ids: Iterable[str]) -> RoundReport:
        """Publish own intermediates, download ``peer_ids``, merge them."""
        report = RoundReport(self.device_id)
        own = self.own_intermediates()
        transport = self._transport()
        tx.upload(transport, self.device_id, serialize(own))
        payloads = {}
        for peer_id in peer_ids:
            if peer_id == self.device_id:
                continue
            try:
                payload = tx.download(transport, peer_id)
            except TransportError as exc:
                report.failed[peer_id] = str(exc)
                continue
            if payload is None:
                report.missing.append(peer_id)
                continue
            payloads[peer_id] = payload
        return self.absorb(payloads, report, own=own)


def edge_round(detector: AnomalyDetector, peer_ids: Iterable[str], transport: tx.Transport,
               device_id: str = "edge") -> tuple[AnomalyDetector, RoundReport]:
    """One stateless cooperative update: upload own, download peers, merge."""
    node = EdgeNode(device_id, detector, transport)
    report = node.sync(peer_ids)
    return node.detector, report
