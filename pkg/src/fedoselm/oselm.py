"""Online sequential ELM (recursive least squares on the output weights)."""

from __future__ import annotations

from typing import Iterable

import numpy as np

from . import numerics
from .elm import Chunk, SlfnModel, _check_chunk, hidden, train_batch
from .errors import ConfigurationError, SingularMatrixError

# 1 + h P h^T is >= 1 for SPD P; anything this small means P is corrupted.
_SCALAR_FLOOR = 1e-300


def init_sequential(model: SlfnModel, chunk0: Chunk, ridge: float = 0.0) -> SlfnModel:
    """Initial ``P0 = (H0^T H0 + ridge I)^-1`` and ``beta0 = P0 H0^T t0``.

    Identical to batch training on ``chunk0``; with ``ridge == 0`` the chunk
    needs at least ``n_hidden`` linearly independent rows.
    """
    if ridge == 0 and len(chunk0) < model.topology.n_hidden:
        raise SingularMatrixError(
            f"initial chunk has {len(chunk0)} rows < n_hidden={model.topology.n_hidden}; "
            "H0^T H0 is singular, pass ridge > 0 or a larger chunk",
        )
    return train_batch(model, chunk0, ridge)


def _update_single(p, beta, h, t):
    ph = p @ h.T  # (N, 1)
    denom = 1.0 + float((h @ ph)[0, 0])
    if not denom > _SCALAR_FLOOR:
        raise SingularMatrixError(
            f"1 + h P h^T = {denom:.3e}; OS-ELM state P is corrupted"
        )
    p = p - (ph @ ph.T) / denom
    beta = beta + (p @ h.T) @ (t - h @ beta)
    return p, beta


def _update_block(p, beta, h, t):
    hp = h @ p  # (k, N)
    s = np.eye(h.shape[0]) + hp @ h.T
    p = p - hp.T @ numerics.spd_solve(numerics.symmetrize(s), hp)
    beta = beta + (p @ h.T) @ (t - h @ beta)
    return p, beta


def update(model: SlfnModel, chunk: Chunk) -> SlfnModel:
    """One OS-ELM step; a single-row chunk takes the scalar reciprocal path."""
    if model.p is None:
        raise ConfigurationError("model has no OS-ELM state; call init_sequential first")
    _check_chunk(model, chunk)
    if len(chunk) == 0:
        return model
    h = hidden(model, chunk.x)
    if h.shape[0] == 1:
        p, beta = _update_single(model.p, model.beta, h, chunk.t)
    else:
        p, beta = _update_block(model.p, model.beta, h, chunk.t)
    p = numerics.ensure_finite(numerics.symmetrize(p), "P")
    beta = numerics.ensure_finite(beta, "beta")
    return model.with_state(beta, p, sample_count=model.sample_count + len(chunk))


def train_stream(model: SlfnModel, chunks: Iterable[Chunk]) -> SlfnModel:
    """Left fold of :func:`update` over ``chunks``."""
    for i, chunk in enumerate(chunks):
        try:
            model = update(model, chunk)
        except SingularMatrixError as exc:
            exc.chunk_index = i
            raise
    return model


def rows(x, t=None) -> list[Chunk]:
    """Split a matrix into batch-size-1 chunks."""
    x = numerics.as_matrix(x, "x")
    t = x if t is None else numerics.as_matrix(t, "t")
    return [Chunk(x[i:i + 1], t[i:i + 1]) for i in range(x.shape[0])]
