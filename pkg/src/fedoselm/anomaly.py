"""OS-ELM autoencoder used as a semi-supervised anomaly detector."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from . import numerics, oselm
from .elm import Chunk, SlfnModel, Topology, init_model, predict
from .errors import ConfigurationError, DimensionError


@dataclass(frozen=True, eq=False)
class AnomalyDetector:
    model: SlfnModel
    threshold: Optional[float] = None
    #: When set, ``train_normal`` skips rows scoring above ``threshold``.
    reject_above_threshold: bool = False

    def __post_init__(self):
        if not self.model.topology.is_autoencoder:
            raise ConfigurationError(
                "anomaly detector needs an autoencoder topology (n_output == n_input, "
                f"n_hidden < n_input), got {self.model.topology}"
            )
        if self.threshold is not None and not self.threshold >= 0:
            raise ConfigurationError("threshold must be >= 0")

    @property
    def topology(self) -> Topology:
        return self.model.topology

    def with_model(self, model: SlfnModel) -> "AnomalyDetector":
        return replace(self, model=model)


def new_detector(topology: Topology, x0, ridge: float = 0.0, **kwargs) -> AnomalyDetector:
    """Detector initialized for sequential training on the normal rows ``x0``."""
    model = oselm.init_sequential(init_model(topology), Chunk(x0), ridge)
    return AnomalyDetector(model, **kwargs)


def losses(detector: AnomalyDetector, x) -> np.ndarray:
    """Per-row mean squared reconstruction error."""
    x = numerics.as_matrix(x, "x")
    y = predict(detector.model, x)
    return np.mean((x - y) ** 2, axis=1)


def loss(detector: AnomalyDetector, x) -> float:
    x = numerics.as_matrix(x, "x")
    if x.shape[0] != 1:
        raise DimensionError(f"loss scores one row at a time, got {x.shape[0]}")
    return float(losses(detector, x)[0])


def train_normal(detector: AnomalyDetector, x) -> AnomalyDetector:
    x = numerics.as_matrix(x, "x")
    if detector.reject_above_threshold:
        if detector.threshold is None:
            raise ConfigurationError("reject_above_threshold needs a threshold")
        x = x[losses(detector, x) <= detector.threshold]
        if x.shape[0] == 0:
            return detector
    return detector.with_model(oselm.update(detector.model, Chunk(x)))


def train_rows(detector: AnomalyDetector, x) -> AnomalyDetector:
    """Feed ``x`` one row at a time (batch size 1)."""
    x = numerics.as_matrix(x, "x")
    for i in range(x.shape[0]):
        detector = train_normal(detector, x[i:i + 1])
    return detector


def fit(topology: Topology, x, ridge: float = 0.0, init_rows: Optional[int] = None,
        **kwargs) -> AnomalyDetector:
    """Initialize on the first ``init_rows`` rows, then train the rest row by row.

    ``init_rows`` defaults to ``n_hidden`` (the smallest chunk that can make
    ``H0^T H0`` nonsingular without a ridge term).
    """
    x = numerics.as_matrix(x, "x")
    k0 = topology.n_hidden if init_rows is None else init_rows
    k0 = max(1, min(k0, x.shape[0]))
    det = new_detector(topology, x[:k0], ridge, **kwargs)
    return train_rows(det, x[k0:])


def is_anomaly(detector: AnomalyDetector, x) -> tuple[bool, float]:
    if detector.threshold is None:
        raise ConfigurationError("detector threshold is not set")
    score = loss(detector, x)
    return score > detector.threshold, score
