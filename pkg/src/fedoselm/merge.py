"""Intermediate results ``U = H^T H``, ``V = H^T t`` and their algebra.

A trained OS-ELM model exposes them without keeping any past data:
``U = P^-1`` and ``V = U beta``. Intermediates from models that share a
topology and seed add up to the intermediates of the pooled data, so one
``combine`` followed by ``rebuild`` yields the model batch-trained on the
union.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce
from typing import Iterable

import numpy as np

from . import numerics
from .elm import SlfnModel, Topology, init_model
from .errors import ConfigurationError, IncompatibleTopologyError


@dataclass(frozen=True, eq=False)
class Intermediates:
    u: np.ndarray
    v: np.ndarray
    topology: Topology
    sample_count: int = 0
    #: Sum of the ridge terms folded into ``u`` by every contributor.
    ridge: float = 0.0

    def __post_init__(self):
        u = numerics.as_matrix(self.u, "u")
        v = numerics.as_matrix(self.v, "v")
        nh, m = self.topology.n_hidden, self.topology.n_output
        if u.shape != (nh, nh) or v.shape != (nh, m):
            raise IncompatibleTopologyError(
                f"U {u.shape} / V {v.shape} do not match topology ({nh} hidden, {m} outputs)"
            )
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)

    def equals(self, other: "Intermediates") -> bool:
        """Bit-exact equality of every field."""
        return (
            self.topology == other.topology
            and self.sample_count == other.sample_count
            and self.ridge == other.ridge
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )


def zeros(topology: Topology) -> Intermediates:
    nh = topology.n_hidden
    return Intermediates(np.zeros((nh, nh)), np.zeros((nh, topology.n_output)), topology)


def _check_compatible(a: Intermediates, b: Intermediates) -> None:
    if a.topology.init_seed != b.topology.init_seed:
        raise IncompatibleTopologyError(
            f"init seeds differ: {a.topology.init_seed} vs {b.topology.init_seed}; "
            "merged models need identical input weights",
            seed_a=a.topology.init_seed,
            seed_b=b.topology.init_seed,
        )
    if a.topology != b.topology:
        raise IncompatibleTopologyError(
            f"topologies differ: {a.topology} vs {b.topology}",
            seed_a=a.topology.init_seed,
            seed_b=b.topology.init_seed,
        )


def extract(model: SlfnModel) -> Intermediates:
    if model.p is None:
        raise ConfigurationError("model has no OS-ELM state P to extract from")
    u = numerics.symmetrize(numerics.inverse_spd(model.p))
    v = u @ model.beta
    return Intermediates(u, v, model.topology, model.sample_count, model.ridge)


def combine(a: Intermediates, b: Intermediates) -> Intermediates:
    _check_compatible(a, b)
    return Intermediates(
        a.u + b.u, a.v + b.v, a.topology, a.sample_count + b.sample_count, a.ridge + b.ridge
    )


def combine_all(irs: Iterable[Intermediates]) -> Intermediates:
    return reduce(combine, irs)


def subtract(a: Intermediates, b: Intermediates) -> Intermediates:
    """Remove ``b``'s contribution from ``a``. The result may be singular."""
    _check_compatible(a, b)
    if a.sample_count < b.sample_count:
        raise ConfigurationError(
            f"cannot subtract {b.sample_count} samples from {a.sample_count}"
        )
    return Intermediates(
        a.u - b.u, a.v - b.v, a.topology, a.sample_count - b.sample_count, a.ridge - b.ridge
    )


def replace(a: Intermediates, old: Intermediates, new: Intermediates) -> Intermediates:
    """Swap one contribution for another (subtract then combine)."""
    return combine(subtract(a, old), new)


def rebuild(ir: Intermediates, ridge_floor: float = 0.0) -> SlfnModel:
    """Model with ``P = U^-1`` and ``beta = U^-1 V``, ready for further updates.

    ``ridge_floor`` is added to the diagonal of ``U`` first and recorded in
    the model's ridge total.
    """
    u = numerics.symmetrize(ir.u)
    p = numerics.inverse_spd(u, ridge_floor)
    beta = numerics.spd_solve(u, ir.v, ridge_floor)
    model = init_model(ir.topology)
    return model.with_state(beta, p, ridge=ir.ridge + ridge_floor, sample_count=ir.sample_count)


def validate(ir: Intermediates) -> Intermediates:
    """Check that ``ir`` is a plausible ``H^T H`` / ``H^T t`` pair.

    ``u`` must be symmetric within 1e-8 relative and positive semi-definite
    up to ``-1e-8 * trace``; both matrices must be finite.
    """
    if not (np.all(np.isfinite(ir.u)) and np.all(np.isfinite(ir.v))):
        raise ConfigurationError("intermediates contain NaN or Inf")
    if not numerics.is_symmetric(ir.u, rtol=1e-8):
        raise ConfigurationError("U is not symmetric")
    if ir.u.size:
        lowest = float(np.linalg.eigvalsh(numerics.symmetrize(ir.u))[0])
        if lowest < -1e-8 * max(float(np.trace(ir.u)), 0.0):
            raise ConfigurationError(f"U is not positive semi-definite (eigenvalue {lowest:.3e})")
    if ir.sample_count < 0:
        raise ConfigurationError("negative sample count")
    return ir
