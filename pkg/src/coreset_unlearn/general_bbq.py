"""Staged selective sampling and exact deletion for finite function classes.

The learner works pool-based over a finite class of models mapping inputs to
``[0, 1]``.  Its uncertainty score for a candidate ``x`` against a prefix of
already-queried points is

    d2(x; prefix) = max over pairs (f, g) of
        (f(x) - g(x))^2 / (sum over prefix of (f(x_i) - g(x_i))^2 + 1)

Each stage greedily queries the current argmax while the score exceeds a
halving threshold, fits a squared-loss ERM on the stage's queries, marks the
remaining points the stage ERM is confident about, and stops once the
residual unsure set is small relative to the projected dimension of the
class on the pool.  The query rule never reads labels, so a fresh run on the
surviving queried set re-queries exactly the survivors; deletion therefore
reduces to dropping the points and refitting the ERM.

Function classes can be declared in JSON::

    {"format": "finite-function-class", "version": 1,
     "functions": [
       {"name": "f0", "type": "threshold", "feature": 0, "cut": 0.1,
        "below": 0.2, "above": 0.9},
       {"name": "f1", "type": "table", "default": 0.5,
        "values": {"17": 0.8}}
     ]}

Threshold rules read one feature of ``x``; tables map sample ids to values.
Evaluators must depend on the input only, never on labels.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .bbq_linear import LabeledSample

DEFAULT_MAX_CLASS_SIZE = 256
DEFAULT_STAGE_CAP = 30
DEFAULT_DIM_EXACT_CAP = 8

UNBOUNDED = math.inf


class FiniteFunctionClass:
    """An ordered list of named evaluators mapping a sample to ``[0, 1]``."""

    def __init__(self, functions, names=None, max_size: int = DEFAULT_MAX_CLASS_SIZE):
        functions = list(functions)
        if not functions:
            raise ValueError("function class must be nonempty")
        if len(functions) > max_size:
            raise ValueError(f"function class size {len(functions)} exceeds cap {max_size}")
        self.functions: list[Callable] = functions
        self.names = list(names) if names is not None else [f"f{i}" for i in range(len(functions))]
        if len(self.names) != len(self.functions):
            raise ValueError("names and functions must have equal length")

    def __len__(self) -> int:
        return len(self.functions)

    def evaluate(self, index: int, sample) -> float:
        value = float(self.functions[index](sample))
        if not -1e-9 <= value <= 1.0 + 1e-9:
            raise ValueError(
                f"function {self.names[index]} returned {value}, outside [0, 1]"
            )
        return min(max(value, 0.0), 1.0)

    def value_matrix(self, samples) -> np.ndarray:
        """Dense evaluation table of shape (n_functions, n_samples)."""
        out = np.empty((len(self.functions), len(samples)))
        for j, f in enumerate(self.functions):
            for i, s in enumerate(samples):
                out[j, i] = self.evaluate(j, s)
        return out


def load_function_class(path) -> FiniteFunctionClass:
    """Build a class from the declarative JSON format in the module docstring."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format") != "finite-function-class" or doc.get("version") != 1:
        raise ValueError(f"{path}: not a version-1 finite-function-class file")
    functions, names = [], []
    for entry in doc["functions"]:
        kind = entry["type"]
        if kind == "threshold":
            feature = int(entry["feature"])
            cut, below, above = float(entry["cut"]), float(entry["below"]), float(entry["above"])

            def f(sample, feature=feature, cut=cut, below=below, above=above):
                return below if float(sample.x[feature]) <= cut else above

        elif kind == "table":
            default = float(entry.get("default", 0.5))
            values = {int(k): float(v) for k, v in entry.get("values", {}).items()}

            def f(sample, values=values, default=default):
                return values.get(sample.sample_id, default)

        else:
            raise ValueError(f"unknown function type {kind!r}")
        functions.append(f)
        names.append(str(entry.get("name", f"f{len(names)}")))
    return FiniteFunctionClass(functions, names=names)


def d2_score(x, prefix, fclass: FiniteFunctionClass) -> float:
    """Brute-force maximum of the pairwise disagreement ratio for one candidate."""
    n_prefix = len(prefix)
    values_x = np.array([fclass.evaluate(j, x) for j in range(len(fclass))])
    values_p = fclass.value_matrix(prefix) if n_prefix else np.empty((len(fclass), 0))
    best = 0.0
    for f in range(len(fclass)):
        for g in range(len(fclass)):
            num = (values_x[f] - values_x[g]) ** 2
            den = float(np.sum((values_p[f] - values_p[g]) ** 2)) + 1.0
            best = max(best, num / den)
    return best


class ProjectedDimension(NamedTuple):
    value: float
    exact: bool


def _pair_gaps(values: np.ndarray) -> np.ndarray:
    return (values[:, None, :] - values[None, :, :]) ** 2


def _sequence_value(gaps: np.ndarray, order) -> float:
    denom = np.ones(gaps.shape[:2])
    total = 0.0
    for idx in order:
        total += float(np.max(gaps[:, :, idx] / denom))
        denom += gaps[:, :, idx]
    return total


def _greedy_value(gaps: np.ndarray, start: int) -> float:
    n = gaps.shape[2]
    remaining = [i for i in range(n) if i != start]
    denom = np.ones(gaps.shape[:2])
    total = float(np.max(gaps[:, :, start]))
    denom += gaps[:, :, start]
    while remaining:
        scores = np.max(gaps[:, :, remaining] / denom[:, :, None], axis=(0, 1))
        pick = int(np.argmax(scores))
        total += float(scores[pick])
        denom += gaps[:, :, remaining[pick]]
        remaining.pop(pick)
    return total


def projected_dimension(
    fclass: FiniteFunctionClass,
    samples,
    exact_cap: int = DEFAULT_DIM_EXACT_CAP,
    restarts: int = 8,
) -> ProjectedDimension:
    """Worst-case-over-orderings sum of uncertainty scores for a pool.

    Exact (full permutation enumeration) for pools up to ``exact_cap``
    points; larger pools get a greedy lower bound with restarts, flagged by
    ``exact=False``.
    """
    values = fclass.value_matrix(samples)
    gaps = _pair_gaps(values)
    n = len(samples)
    if n == 0:
        return ProjectedDimension(0.0, True)
    if n <= exact_cap:
        best = max(_sequence_value(gaps, order) for order in itertools.permutations(range(n)))
        return ProjectedDimension(best, True)
    first_scores = np.max(gaps, axis=(0, 1))
    starts = np.argsort(-first_scores, kind="stable")[: min(restarts, n)]
    best = max(_greedy_value(gaps, int(s)) for s in starts)
    return ProjectedDimension(best, False)


def erm_fit(fclass: FiniteFunctionClass, labeled) -> int:
    """Index of the squared-loss minimizer over ``labeled``; ties go to the lowest index.

    Targets are ``(1 + y) / 2``, mapping labels into {0, 1}.  An empty sample
    leaves every loss at zero, so the tie-break returns index 0.
    """
    labeled = list(labeled)
    if not labeled:
        return 0
    values = fclass.value_matrix(labeled)
    targets = np.array([(1.0 + s.y) / 2.0 for s in labeled])
    losses = np.sum((targets[None, :] - values) ** 2, axis=1)
    return int(np.argmin(losses))


@dataclass(frozen=True)
class StageRecord:
    stage: int
    eps: float
    queried_ids: tuple[int, ...]
    queried_scores: tuple[float, ...]  # squared score at selection time
    exit_score: float  # max remaining squared score when the stage loop ended
    confident_ids: tuple[int, ...]
    pool_ids: tuple[int, ...]
    survivor_ids: tuple[int, ...]
    stage_erm: int | None


@dataclass(frozen=True)
class GeneralConfig:
    delta: float
    rate_bound: float
    stage_cap: int
    pool_dim: float
    pool_dim_exact: bool
    n_stages: int


@dataclass
class GeneralModelState:
    queried: list[tuple[int, LabeledSample]]
    stage_log: list[StageRecord]
    f_hat: int
    config: GeneralConfig

    @property
    def queried_ids(self) -> set[int]:
        return {s.sample_id for _, s in self.queried}


@dataclass(frozen=True)
class GeneralSystemState:
    f_hat: int
    stored_ids: frozenset[int]


def default_rate_bound(class_size: int, pool_size: int, delta: float) -> float:
    """Standard finite-class squared-loss rate, ``log(|F| * T / delta)``.

    A default, not a derived quantity; callers with a known oracle rate should
    pass their own value.
    """
    return math.log(max(class_size, 1) * max(pool_size, 1) / delta)


def general_bbq_fit(
    pool,
    fclass: FiniteFunctionClass,
    delta: float = 0.05,
    rate_bound: float | None = None,
    *,
    stage_cap: int = DEFAULT_STAGE_CAP,
    dim_exact_cap: int = DEFAULT_DIM_EXACT_CAP,
    exhaust_pool: bool = False,
) -> GeneralModelState:
    """Run the staged greedy sampler over ``pool`` and fit the final ERM.

    Labels are read only for queried points.  Stages halve the query
    threshold; the loop exits once the unsure residual is small relative to
    the projected dimension of the class on the pool, when nothing in the
    pool separates any pair of functions, or at the hard stage cap.

    ``exhaust_pool=True`` disables the residual-based exit so stages continue
    until every point on which some pair of functions disagrees has been
    queried.  Deletion-equivalence checks use this mode: a pool consisting
    entirely of previously queried points is exactly the degenerate case the
    residual exit was not designed for, and the equivalence guarantee wants
    every survivor re-queried.
    """
    pool = list(pool)
    if not pool:
        raise ValueError("pool must be nonempty")
    if rate_bound is None:
        rate_bound = default_rate_bound(len(fclass), len(pool), delta)
    if rate_bound <= 0:
        raise ValueError("rate_bound must be positive")
    if exhaust_pool:
        stage_cap = max(stage_cap, 64)

    values = fclass.value_matrix(pool)
    gaps = _pair_gaps(values)
    ids = np.array([s.sample_id for s in pool])
    pdim = projected_dimension(fclass, pool, exact_cap=dim_exact_cap)

    pool_idx = list(range(len(pool)))
    survivors = list(pool_idx)
    queried: list[tuple[int, LabeledSample]] = []
    stage_log: list[StageRecord] = []
    n_stages = 0

    for ell in range(1, stage_cap + 1):
        n_stages = ell
        eps2 = 4.0 ** (-ell) / rate_bound
        denom = np.ones(gaps.shape[:2])
        stage_queries: list[int] = []
        stage_scores: list[float] = []
        exit_score = 0.0
        candidates = list(pool_idx)
        while candidates:
            scores = np.max(gaps[:, :, candidates] / denom[:, :, None], axis=(0, 1))
            top = float(scores.max())
            if top <= eps2:
                exit_score = top
                break
            tied = np.flatnonzero(scores == top)
            pick = tied[int(np.argmin(ids[[candidates[i] for i in tied]]))]
            chosen = candidates.pop(int(pick))
            stage_queries.append(chosen)
            stage_scores.append(top)
            denom += gaps[:, :, chosen]

        if stage_queries:
            stage_erm = erm_fit(fclass, [pool[i] for i in stage_queries])
            conf_margin = 3.0 * 2.0 ** (-ell)
            confident = [
                i for i in candidates if abs(values[stage_erm, i] - 0.5) > conf_margin
            ]
        else:
            stage_erm = None
            confident = []

        for i in stage_queries:
            queried.append((ell, pool[i]))
        pool_idx = candidates
        dropped = set(stage_queries) | set(confident)
        survivors = [i for i in survivors if i not in dropped]
        stage_log.append(
            StageRecord(
                stage=ell,
                eps=math.sqrt(eps2),
                queried_ids=tuple(int(ids[i]) for i in stage_queries),
                queried_scores=tuple(stage_scores),
                exit_score=exit_score,
                confident_ids=tuple(int(ids[i]) for i in confident),
                pool_ids=tuple(int(ids[i]) for i in pool_idx),
                survivor_ids=tuple(int(ids[i]) for i in survivors),
                stage_erm=stage_erm,
            )
        )

        if exhaust_pool:
            undecided = float(np.max(gaps[:, :, pool_idx])) if pool_idx else 0.0
            if undecided == 0.0:
                break  # every separable point is queried
            continue
        if pdim.value * rate_bound / (2.0 ** (-ell + 1)) > 2.0 ** (-ell + 1) * len(survivors):
            break
        if not stage_queries and not confident:
            remaining_gap = float(np.max(gaps[:, :, pool_idx])) if pool_idx else 0.0
            if remaining_gap == 0.0:
                break  # no pair of functions disagrees anywhere; nothing can change

    f_hat = erm_fit(fclass, [s for _, s in queried])
    config = GeneralConfig(
        delta=delta,
        rate_bound=rate_bound,
        stage_cap=stage_cap,
        pool_dim=pdim.value,
        pool_dim_exact=pdim.exact,
        n_stages=n_stages,
    )
    return GeneralModelState(queried=queried, stage_log=stage_log, f_hat=f_hat, config=config)


def general_state_of_system(model: GeneralModelState) -> GeneralSystemState:
    return GeneralSystemState(
        f_hat=model.f_hat,
        stored_ids=frozenset(s.sample_id for _, s in model.queried),
    )


def general_deletion_update(model: GeneralModelState, ids, fclass: FiniteFunctionClass) -> GeneralModelState:
    """Drop deleted queried points and refit the ERM, in place.

    Requests entirely outside the queried set leave the state untouched.
    """
    ids = set(ids)
    if not ids & model.queried_ids:
        return model
    model.queried = [(stage, s) for stage, s in model.queried if s.sample_id not in ids]
    model.f_hat = erm_fit(fclass, [s for _, s in model.queried])
    return model


def general_capacity(n_queried: int, rate_bound: float, beta) -> float:
    """Core-set deletion budget from the oracle's stability rate.

    ``beta`` maps a sample size to the stability rate of the regression
    oracle.  With no queried points there is nothing to delete, so the budget
    is unbounded.
    """
    if n_queried == 0:
        return UNBOUNDED
    rate = beta(n_queried)
    if rate <= 0:
        raise ValueError("beta must be positive")
    return math.floor(math.sqrt(rate_bound) / (math.sqrt(n_queried) * rate))
