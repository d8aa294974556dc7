"""Synthetic dataset generation, dataset file I/O, and deletion streams.

Datasets are ordered lists of :class:`LabeledSample` with covariates in the
unit ball and labels drawn as ``P(y = +1 | x) = (1 + u @ x) / 2`` for a
planted unit vector ``u``.  Three presets:

  * ``realizable-linear``: x uniform in the unit ball.
  * ``margin``: x uniform in the ball, rejection-sampled until
    ``|u @ x| > gamma``.
  * ``clusters``: a Gaussian-mixture covariate law projected into the ball;
    a non-margin workload for the harness, not tied to any reference
    experiment.

Dataset file format ("SADS1"): the magic line ``SADS1\\n``, one line of JSON
``{"T", "d", "kind", "gamma", "seed", "u"}`` terminated by ``\\n``, then T
binary rows of (sample_id u64 LE, y i8, x d*f64 LE).  Round-trips are
bit-exact.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .bbq_linear import LabeledSample

DATASET_MAGIC = b"SADS1"

DATASET_KINDS = ("realizable-linear", "margin", "clusters")

# Batches of candidate draws per accepted point before giving up on the
# margin rejection loop.
_MAX_REJECTION_ROUNDS = 64


class GenerationInfeasibleError(RuntimeError):
    """Raised when margin rejection sampling stalls (gamma too large for d)."""


class DatasetFormatError(ValueError):
    """Raised on malformed, truncated, or trailing-garbage dataset files."""


@dataclass(frozen=True)
class DatasetSpec:
    kind: str
    T: int
    d: int
    seed: int
    gamma: float = 0.0
    u: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in DATASET_KINDS:
            raise ValueError(f"unknown dataset kind {self.kind!r}")
        if self.T < 1 or self.d < 1:
            raise ValueError("T and d must be positive")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError(f"gamma must lie in [0, 1), got {self.gamma}")
        if self.u is not None and len(self.u) != self.d:
            raise ValueError("planted u has wrong dimension")


@dataclass
class Dataset:
    spec: DatasetSpec
    samples: list[LabeledSample]
    u: np.ndarray


@dataclass(frozen=True)
class DeletionDistribution:
    """How deletion requests are drawn, always without replacement.

    ``uniform`` over the live dataset, ``by-label`` uniform over points with
    ``target_label``, or ``weighted`` by an explicit probability vector over
    sample ids (nonnegative, summing to one over the live dataset).
    """

    kind: str = "uniform"
    target_label: int = -1
    weights: dict[int, float] | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "by-label", "weighted"):
            raise ValueError(f"unknown deletion distribution kind {self.kind!r}")
        if self.kind == "weighted" and self.weights is None:
            raise ValueError("weighted deletion distribution needs weights")


def _unit_ball(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    radii = rng.random(n) ** (1.0 / d)
    return g * radii[:, None]


def _cluster_points(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    n_clusters = 4
    centers = _unit_ball(rng, n_clusters, d) * 0.6
    assignment = rng.integers(0, n_clusters, size=n)
    pts = centers[assignment] + 0.15 * rng.standard_normal((n, d))
    norms = np.linalg.norm(pts, axis=1, keepdims=True)
    # project anything outside the ball back onto a slightly interior shell
    outside = norms[:, 0] > 1.0
    pts[outside] = pts[outside] / norms[outside] * 0.999
    return pts


def gen_dataset(spec: DatasetSpec) -> Dataset:
    """Deterministically generate a dataset from its spec.

    Emits exactly ``spec.T`` points; raises :class:`GenerationInfeasibleError`
    when the margin condition rejects essentially every draw.
    """
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed))
    if spec.u is not None:
        u = np.asarray(spec.u, dtype=np.float64)
        if np.linalg.norm(u) > 1.0 + 1e-9:
            raise ValueError("planted u must satisfy ||u|| <= 1")
    else:
        u = rng.standard_normal(spec.d)
        u /= np.linalg.norm(u)

    xs = np.empty((0, spec.d))
    rounds = 0
    while xs.shape[0] < spec.T:
        if rounds >= _MAX_REJECTION_ROUNDS:
            raise GenerationInfeasibleError(
                f"margin gamma={spec.gamma} rejected nearly all draws in d={spec.d}"
            )
        rounds += 1
        batch = max(spec.T, 1024)
        if spec.kind == "clusters":
            cand = _cluster_points(rng, batch, spec.d)
        else:
            cand = _unit_ball(rng, batch, spec.d)
        if spec.kind == "margin":
            cand = cand[np.abs(cand @ u) > spec.gamma]
        xs = np.vstack([xs, cand])
    xs = xs[: spec.T]

    probs = (1.0 + xs @ u) / 2.0
    ys = np.where(rng.random(spec.T) < probs, 1, -1)
    samples = [LabeledSample(i, xs[i], int(ys[i])) for i in range(spec.T)]
    return Dataset(spec=spec, samples=samples, u=u)


def deletion_stream(samples, dist: DeletionDistribution, n: int, seed: int) -> list[int]:
    """Ordered deletion requests: ``n`` distinct sample ids drawn per ``dist``."""
    if dist.kind == "uniform":
        eligible = [s.sample_id for s in samples]
    elif dist.kind == "by-label":
        eligible = [s.sample_id for s in samples if s.y == dist.target_label]
    else:
        weights = dist.weights
        missing = [s.sample_id for s in samples if s.sample_id not in weights]
        if missing:
            raise ValueError(f"weights missing for {len(missing)} sample ids")
        w = np.array([weights[s.sample_id] for s in samples], dtype=np.float64)
        if np.any(w < 0):
            raise ValueError("deletion weights must be nonnegative")
        total = float(w.sum())
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"deletion weights sum to {total}, expected 1")
        eligible = [s.sample_id for s, wi in zip(samples, w) if wi > 0]
        if n > len(eligible):
            raise ValueError(f"requested {n} deletions, only {len(eligible)} have weight")
        rng = np.random.default_rng(np.random.SeedSequence(seed))
        # Efraimidis-Spirakis keys: sorting u^(1/w) descending is equivalent to
        # sequential weighted sampling without replacement.
        w_pos = np.array([weights[i] for i in eligible])
        keys = rng.random(len(eligible)) ** (1.0 / w_pos)
        order = np.argsort(-keys, kind="stable")
        return [eligible[i] for i in order[:n]]

    if n > len(eligible):
        raise ValueError(f"requested {n} deletions, only {len(eligible)} eligible")
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    order = rng.permutation(len(eligible))
    return [eligible[i] for i in order[:n]]


def save_dataset(ds: Dataset, path) -> None:
    header = {
        "T": ds.spec.T,
        "d": ds.spec.d,
        "kind": ds.spec.kind,
        "gamma": ds.spec.gamma,
        "seed": ds.spec.seed,
        "u": ds.u.tolist(),
    }
    rec = struct.Struct(f"<Qb{ds.spec.d}d")
    with open(path, "wb") as fh:
        fh.write(DATASET_MAGIC + b"\n")
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for s in ds.samples:
            fh.write(rec.pack(s.sample_id, s.y, *s.x.tolist()))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, sep, rest = blob.partition(b"\n")
    if magic != DATASET_MAGIC or not sep:
        raise DatasetFormatError(f"bad magic, expected {DATASET_MAGIC!r}")
    header_line, sep, payload = rest.partition(b"\n")
    if not sep:
        raise DatasetFormatError("missing dataset header line")
    try:
        header = json.loads(header_line.decode("utf-8"))
        T, d = int(header["T"]), int(header["d"])
        kind, gamma, seed = header["kind"], float(header["gamma"]), int(header["seed"])
        u = np.asarray(header["u"], dtype=np.float64)
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise DatasetFormatError(f"malformed dataset header: {exc}") from exc
    rec = struct.Struct(f"<Qb{d}d")
    if len(payload) != T * rec.size:
        raise DatasetFormatError(
            f"dataset payload has {len(payload)} bytes, header promises {T * rec.size}"
        )
    samples = []
    for t in range(T):
        fields = rec.unpack_from(payload, t * rec.size)
        samples.append(LabeledSample(fields[0], np.array(fields[2:]), fields[1]))
    spec = DatasetSpec(kind=kind, T=T, d=d, seed=seed, gamma=gamma)
    return Dataset(spec=spec, samples=samples, u=u)
