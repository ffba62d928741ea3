"""Batch ELM for single hidden-layer feedforward networks.

The input weights ``alpha`` and hidden bias are random and never trained;
they are regenerated bit-for-bit from ``Topology.init_seed`` so that every
device sharing a seed shares the same hidden layer. Only ``beta`` is solved,
through the normal equations ``(H^T H + ridge I) beta = H^T t``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import numerics
from .errors import ConfigurationError, DimensionError, SingularMatrixError


class Activation(enum.IntEnum):
    IDENTITY = 0
    SIGMOID = 1
    RELU = 2

    @classmethod
    def parse(cls, name) -> "Activation":
        if isinstance(name, cls):
            return name
        try:
            return cls[str(name).upper()]
        except KeyError:
            choices = ", ".join(a.name.lower() for a in cls)
            raise ConfigurationError(f"unknown activation {name!r}; choose from {choices}") from None

    def __call__(self, z: np.ndarray) -> np.ndarray:
        if self is Activation.IDENTITY:
            return z
        if self is Activation.SIGMOID:
            # Split by sign so exp never overflows.
            out = np.empty_like(z)
            pos = z >= 0
            out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
            ez = np.exp(z[~pos])
            out[~pos] = ez / (1.0 + ez)
            return out
        return np.maximum(z, 0.0)


@dataclass(frozen=True)
class Topology:
    n_input: int
    n_hidden: int
    n_output: int
    activation: Activation = Activation.IDENTITY
    init_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "activation", Activation.parse(self.activation))
        if self.n_input < 1 or self.n_output < 1:
            raise ConfigurationError("n_input and n_output must be >= 1")
        if self.n_hidden < 1:
            raise ConfigurationError("n_hidden must be >= 1")
        if not 0 <= self.init_seed < 2**64:
            raise ConfigurationError("init_seed must fit in an unsigned 64-bit integer")

    @classmethod
    def autoencoder(cls, n_features: int, n_hidden: int, activation=Activation.IDENTITY,
                    init_seed: int = 0) -> "Topology":
        if n_hidden >= n_features:
            raise ConfigurationError(
                f"autoencoder needs n_hidden < n_features, got {n_hidden} >= {n_features}"
            )
        return cls(n_features, n_hidden, n_features, activation, init_seed)

    @property
    def is_autoencoder(self) -> bool:
        return self.n_input == self.n_output and self.n_hidden < self.n_input


@dataclass(frozen=True, eq=False)
class SlfnModel:
    """Single hidden-layer network plus optional OS-ELM state.

    ``p`` is ``(H^T H + ridge I)^-1`` accumulated over everything the model has
    seen; ``ridge`` and ``sample_count`` are bookkeeping that travels with it.
    """

    topology: Topology
    alpha: np.ndarray
    bias: np.ndarray
    beta: np.ndarray
    p: Optional[np.ndarray] = None
    ridge: float = 0.0
    sample_count: int = 0

    def with_state(self, beta, p, ridge=None, sample_count=None) -> "SlfnModel":
        return replace(
            self,
            beta=beta,
            p=p,
            ridge=self.ridge if ridge is None else ridge,
            sample_count=self.sample_count if sample_count is None else sample_count,
        )


@dataclass(frozen=True, eq=False)
class Chunk:
    """A training batch ``{x, t}``; autoencoders use ``t = x``."""

    x: np.ndarray
    t: np.ndarray = field(default=None)

    def __post_init__(self):
        x = numerics.as_matrix(self.x, "x")
        t = x if self.t is None else numerics.as_matrix(self.t, "t")
        if x.shape[0] != t.shape[0]:
            raise DimensionError(f"x has {x.shape[0]} rows but t has {t.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "t", t)

    def __len__(self):
        return self.x.shape[0]


def random_layer(topology: Topology) -> tuple[np.ndarray, np.ndarray]:
    """``(alpha, bias)`` drawn i.i.d. Uniform[-1, 1] from the topology seed."""
    rng = np.random.Generator(np.random.PCG64(topology.init_seed))
    alpha = rng.uniform(-1.0, 1.0, size=(topology.n_input, topology.n_hidden))
    bias = rng.uniform(-1.0, 1.0, size=(1, topology.n_hidden))
    return alpha, bias


def init_model(topology: Topology) -> SlfnModel:
    alpha, bias = random_layer(topology)
    beta = np.zeros((topology.n_hidden, topology.n_output))
    return SlfnModel(topology, alpha, bias, beta)


def _check_chunk(model: SlfnModel, data: Chunk) -> None:
    topo = model.topology
    if data.x.shape[1] != topo.n_input:
        raise DimensionError(f"x has {data.x.shape[1]} columns, topology expects {topo.n_input}")
    if data.t.shape[1] != topo.n_output:
        raise DimensionError(f"t has {data.t.shape[1]} columns, topology expects {topo.n_output}")


def hidden(model: SlfnModel, x) -> np.ndarray:
    """Hidden-layer matrix ``H = G(x alpha + b)``."""
    x = numerics.as_matrix(x, "x")
    if x.shape[1] != model.topology.n_input:
        raise DimensionError(
            f"x has {x.shape[1]} columns, topology expects {model.topology.n_input}"
        )
    return model.topology.activation(x @ model.alpha + model.bias)


def predict(model: SlfnModel, x) -> np.ndarray:
    return hidden(model, x) @ model.beta


def train_batch(model: SlfnModel, data: Chunk, ridge: float = 0.0) -> SlfnModel:
    """Closed-form least squares for ``beta``; also primes ``p`` for OS-ELM."""
    if ridge < 0:
        raise ConfigurationError("ridge must be >= 0")
    if len(data) < 1:
        raise DimensionError("training chunk is empty")
    _check_chunk(model, data)
    h = hidden(model, data.x)
    u = h.T @ h
    v = h.T @ data.t
    try:
        p = numerics.inverse_spd(u, ridge)
        beta = numerics.spd_solve(u, v, ridge)
    except SingularMatrixError as exc:
        raise SingularMatrixError(
            f"H^T H is singular with {len(data)} samples and {model.topology.n_hidden} "
            f"hidden nodes; use ridge > 0 or more samples ({exc})",
            pivot=exc.pivot,
        ) from exc
    return model.with_state(beta, p, ridge=ridge, sample_count=len(data))
