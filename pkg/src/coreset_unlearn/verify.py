"""Self-contained invariant suites runnable from the CLI.

Each suite draws random instances from a seed and checks an exact property of
the implementation: inverse maintenance against dense re-inversion, deletion
equivalence against a fresh fit on the surviving core set, replay
monotonicity, leverage bounds, and the rank-one drift identity.  Suites
return (name, passed, detail) triples; they are the runtime twin of the test
suite, usable without pytest.
"""

from __future__ import annotations

import math

import numpy as np

from .bbq_linear import bbq_fit, deletion_update, replay_on_coreset, state_of_system, system_states_equal
from .capacity import predicted_deletion_drift
from .core_linalg import gram_init, leverage, rank_one_downdate, rank_one_update
from .datastreams import DatasetSpec, gen_dataset


def _random_instance(rng: np.random.Generator):
    T = int(rng.integers(150, 600))
    d = int(rng.integers(2, 12))
    kappa = float(rng.choice([0.3, 0.5, 0.7]))
    cap_k = float(rng.choice([1, 2, 4]))
    spec = DatasetSpec(kind="realizable-linear", T=T, d=d, seed=int(rng.integers(0, 2**31)))
    ds = gen_dataset(spec)
    model = bbq_fit(ds.samples, cap_k=cap_k, kappa=kappa)
    return ds, model


def check_sherman_morrison(seed: int, trials: int) -> tuple[str, bool, str]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    worst = 0.0
    for _ in range(trials):
        d = int(rng.integers(1, 9))
        lam = float(rng.uniform(1.0, 4.0))
        state = gram_init(d, lam)
        applied = []
        for _ in range(40):
            if applied and rng.random() < 0.4:
                x, y = applied.pop(int(rng.integers(len(applied))))
                rank_one_downdate(state, x, y)
            else:
                x = rng.standard_normal(d)
                x *= rng.uniform(0.05, 1.0) / np.linalg.norm(x)
                y = int(rng.choice([-1, 1]))
                rank_one_update(state, x, y)
                applied.append((x, y))
            dense = lam * np.eye(d) + sum(np.outer(x, x) for x, _ in applied)
            err = float(np.max(np.abs(state.gram_inv - np.linalg.inv(dense))))
            worst = max(worst, err)
    return ("sherman-morrison vs dense inversion", worst < 1e-8, f"max error {worst:.3e}")


def check_exact_unlearning(seed: int, trials: int) -> tuple[str, bool, str]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    for t in range(trials):
        ds, model = _random_instance(rng)
        ids = [s.sample_id for s in ds.samples]
        u = set(rng.choice(ids, size=min(len(ids), 20), replace=False).tolist())
        fresh = bbq_fit(
            [s for s in model.coreset if s.sample_id not in u],
            cap_k=model.params.cap_k,
            kappa=model.params.kappa,
            horizon=model.params.horizon,
            dim=model.dim,
        )
        deletion_update(model, u)
        if not system_states_equal(state_of_system(model), state_of_system(fresh)):
            return ("deletion equals fresh fit on survivors", False, f"instance {t} diverged")
    return ("deletion equals fresh fit on survivors", True, f"{trials} instances")


def check_monotonicity(seed: int, trials: int) -> tuple[str, bool, str]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 3]))
    for t in range(trials):
        ds, model = _random_instance(rng)
        core_ids = sorted(model.coreset_ids)
        if not core_ids:
            continue
        k = int(rng.integers(0, min(len(core_ids), 10) + 1))
        u = set(rng.choice(core_ids, size=k, replace=False).tolist()) if k else set()
        replay = replay_on_coreset(model, u)
        expected = {sid for sid in core_ids if sid not in u}
        if replay.coreset_ids != expected:
            return ("replay re-queries exactly the survivors", False, f"instance {t} diverged")
    return ("replay re-queries exactly the survivors", True, f"{trials} instances")


def check_leverage_bounds(seed: int, trials: int) -> tuple[str, bool, str]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 4]))
    for t in range(trials):
        ds, model = _random_instance(rng)
        lam = model.params.lam
        for s in model.coreset:
            if leverage(model.gram_state, s.x) > 1.0 / (lam + 1.0) + 1e-9:
                return ("leverage bounds", False, f"stored-point bound broken on instance {t}")
        n_del = min(int(lam) - 1, len(model.coreset))
        if n_del > 0:
            drop = {s.sample_id for s in model.coreset[:n_del]}
            deletion_update(model, drop)
            limit = math.e * model.params.horizon ** (-model.params.kappa) + 1e-9
            queried = model.coreset_ids | drop
            for s in ds.samples:
                if s.sample_id in queried:
                    continue
                if leverage(model.gram_state, s.x) > limit:
                    return ("leverage bounds", False, f"post-deletion bound broken on instance {t}")
    return ("leverage bounds", True, f"{trials} instances")


def check_drift_identity(seed: int, trials: int) -> tuple[str, bool, str]:
    rng = np.random.default_rng(np.random.SeedSequence([seed, 5]))
    worst = 0.0
    for _ in range(trials):
        ds, model = _random_instance(rng)
        if not model.coreset:
            continue
        victim = model.coreset[int(rng.integers(len(model.coreset)))]
        probe = ds.samples[int(rng.integers(len(ds.samples)))].x
        predicted = predicted_deletion_drift(model.gram_state, victim.x, victim.y, probe)
        before = float(model.weight @ probe)
        deletion_update(model, {victim.sample_id})
        observed = float(model.weight @ probe) - before
        worst = max(worst, abs(observed - predicted))
    return ("rank-one deletion drift identity", worst < 1e-8, f"max error {worst:.3e}")


ALL_SUITES = (
    check_sherman_morrison,
    check_exact_unlearning,
    check_monotonicity,
    check_leverage_bounds,
    check_drift_identity,
)


def run_all(seed: int, trials: int) -> list[tuple[str, bool, str]]:
    return [suite(seed, trials) for suite in ALL_SUITES]
