"""Reference unlearning baselines: exact ridge retraining and a sharded ensemble.

``ridge_retrain`` is the ground-truth full-data model (one direct solve).
``ridge_fit``/``exact_unlearn`` give the exact-retraining baseline its
incremental form: every deletion is a rank-one downdate, which is what gets
timed.  The sharded ensemble partitions the data round-robin after a seeded
shuffle, trains one ridge model per shard, votes uniformly by sign, and
handles a deletion by retraining only the affected shard from scratch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bbq_linear import LabeledSample
from .core_linalg import GramState, gram_init, rank_one_downdate, rank_one_update

DEFAULT_RIDGE_LAMBDA = 1.0


def ridge_retrain(samples, lam: float = DEFAULT_RIDGE_LAMBDA) -> np.ndarray:
    """Direct solve of ``(lam*I + X^T X) w = X^T y`` over the full sample."""
    samples = list(samples)
    if not samples:
        raise ValueError("ridge_retrain needs a nonempty sample")
    X = np.asarray([s.x for s in samples])
    y = np.asarray([s.y for s in samples], dtype=np.float64)
    d = X.shape[1]
    A = lam * np.eye(d) + X.T @ X
    return np.linalg.solve(A, X.T @ y)


@dataclass
class RidgeModel:
    """Incrementally maintained ridge model over a live sample set."""

    state: GramState
    live: dict[int, LabeledSample]

    @property
    def weight(self) -> np.ndarray:
        return self.state.weight


def ridge_fit(samples, lam: float = DEFAULT_RIDGE_LAMBDA) -> RidgeModel:
    samples = list(samples)
    if not samples:
        raise ValueError("ridge_fit needs a nonempty sample")
    state = gram_init(len(samples[0].x), lam)
    for s in samples:
        rank_one_update(state, s.x, s.y)
    return RidgeModel(state=state, live={s.sample_id: s for s in samples})


def exact_unlearn(model: RidgeModel, ids) -> np.ndarray:
    """Downdate every deleted id out of the model; returns the new weights.

    Unknown ids are ignored (already removed or never present).
    """
    for sid in ids:
        s = model.live.pop(sid, None)
        if s is None:
            continue
        rank_one_downdate(model.state, s.x, s.y)
    return model.state.weight


def _shard_state(members, dim: int, lam: float) -> GramState:
    state = gram_init(dim, lam)
    if members:
        X = np.asarray([s.x for s in members])
        y = np.asarray([s.y for s in members], dtype=np.float64)
        state.gram += X.T @ X
        state.b_vec += X.T @ y
        state.gram_inv = np.linalg.inv(state.gram)
        state.weight = state.gram_inv @ state.b_vec
    return state


@dataclass
class SisaModel:
    shards: list[GramState]
    members: list[dict[int, LabeledSample]]
    assignment: dict[int, int]
    n_shards: int
    lam: float
    dim: int


def sisa_fit(samples, n_shards: int = 16, seed: int = 0, lam: float = DEFAULT_RIDGE_LAMBDA) -> SisaModel:
    """Round-robin shard assignment after a seeded shuffle, one ridge model per shard."""
    samples = list(samples)
    if n_shards < 1:
        raise ValueError("n_shards must be >= 1")
    if not samples:
        raise ValueError("sisa_fit needs a nonempty sample")
    dim = len(samples[0].x)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(len(samples))
    members: list[dict[int, LabeledSample]] = [{} for _ in range(n_shards)]
    assignment: dict[int, int] = {}
    for pos, idx in enumerate(order):
        s = samples[idx]
        shard = pos % n_shards
        members[shard][s.sample_id] = s
        assignment[s.sample_id] = shard
    shards = [_shard_state(list(m.values()), dim, lam) for m in members]
    return SisaModel(
        shards=shards, members=members, assignment=assignment,
        n_shards=n_shards, lam=lam, dim=dim,
    )


def sisa_unlearn(model: SisaModel, ids) -> SisaModel:
    """Retrain each shard touched by a deletion from scratch on its survivors."""
    touched = set()
    for sid in ids:
        shard = model.assignment.pop(sid, None)
        if shard is None:
            continue
        model.members[shard].pop(sid, None)
        touched.add(shard)
    for shard in touched:
        model.shards[shard] = _shard_state(list(model.members[shard].values()), model.dim, model.lam)
    return model


def sisa_predict(model: SisaModel, x) -> int:
    """Uniform majority vote of per-shard sign predictions; all ties go to +1."""
    x = np.asarray(x, dtype=np.float64)
    votes = 0
    for state in model.shards:
        votes += -1 if float(state.weight @ x) < 0.0 else 1
    return -1 if votes < 0 else 1


def sisa_memory_scalars(model: SisaModel) -> int:
    """Stored model scalars: two d*d matrices plus two d-vectors per shard."""
    return model.n_shards * (2 * model.dim * model.dim + 2 * model.dim)


def weight_accuracy(weight: np.ndarray, samples) -> float:
    """Sign-agreement accuracy of a linear weight vector on labeled samples."""
    X = np.asarray([s.x for s in samples])
    y = np.asarray([s.y for s in samples])
    preds = np.where(X @ weight < 0.0, -1, 1)
    return float(np.mean(preds == y))


def sisa_predict_batch(model: SisaModel, X: np.ndarray) -> np.ndarray:
    """Vectorized majority vote over rows of ``X``."""
    W = np.stack([state.weight for state in model.shards])
    votes = np.where(X @ W.T < 0.0, -1, 1).sum(axis=1)
    return np.where(votes < 0, -1, 1)


def sisa_accuracy_batch(model: SisaModel, samples) -> float:
    X = np.asarray([s.x for s in samples])
    y = np.asarray([s.y for s in samples])
    return float(np.mean(sisa_predict_batch(model, X) == y))
