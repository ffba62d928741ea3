"""Cooperative model update: wire formats, aggregation server, edge client."""

from .client import EdgeNode, MergedPeer, RoundReport, edge_round
from .server import FederationServer, RegistryEntry, ServerRegistry, server_handle
from .transport import (
    InProcessTransport, TcpTransport, Transport, download, list_available, register, upload,
)
from .wire import (
    FederationMessage, Kind, decode_message, deserialize, encode_message, payload_size, serialize,
)

__all__ = [
    "EdgeNode", "MergedPeer", "RoundReport", "edge_round",
    "FederationServer", "RegistryEntry", "ServerRegistry", "server_handle",
    "InProcessTransport", "TcpTransport", "Transport", "download", "list_available", "register",
    "upload", "FederationMessage", "Kind", "decode_message", "deserialize", "encode_message",
    "payload_size", "serialize",
]
