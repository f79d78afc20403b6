"""Experiment configurations, trial runners, and the built-in preset catalogue.

A config names a mechanism, an attack and/or a game, desk-scale
parameters, a root seed, and a trial count. Each (mechanism, attack,
game) triple dispatches to one trial runner; runners are pure functions
of (config, trial index) via a counter-derived RNG, so re-running a
config reproduces every row byte for byte.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .attacks import (
    bq_attack,
    countmod_query_attack,
    kmeans_attack_loop,
    median_exposure_attack,
    recover_all_deletions,
    xor_recover_all,
)
from .core import DeletionRequest, Multiset, STAR, rank_error, remove
from .dp import PrivacyParams, prefix_query
from .errors import ConfigError
from .games import (
    FullKnowledgeSimulator,
    ScriptedDynamicPlayer,
    SignAdaptiveAttacker,
    StaticAsDynamicPlayer,
    bookkeeping_ok,
    dynamic_game,
    leakage_game,
    non_adaptive_game,
    simulator_blindness_witness,
    static_game,
    stateless_simulator,
    view_key,
)
from .mechanisms import (
    BQContinualRetrainer,
    BQParams,
    CountModRetrainer,
    DPMedianMechanism,
    DPSumMechanism,
    ExactMedianRetrainer,
    KMeansRetrainer,
    MECHANISMS,
    SQMechanism,
    lloyd_2means_1d,
)
from .queries import CountingQueryFamily


@dataclass
class ExperimentConfig:
    """One experiment: ids, parameters, seed, trial count, output path."""

    experiment: str
    mechanism: Optional[dict] = None
    attack: Optional[dict] = None
    game: Optional[dict] = None
    params: dict = field(default_factory=dict)
    seed: int = 20260808
    trials: int = 20
    out: Optional[str] = None

    def runner_key(self) -> Tuple[Optional[str], Optional[str], Optional[str]]:
        return (
            self.mechanism.get("id") if self.mechanism else None,
            self.attack.get("id") if self.attack else None,
            self.game.get("id") if self.game else None,
        )

    def to_json(self) -> dict:
        return {
            "experiment": self.experiment,
            "mechanism": self.mechanism,
            "attack": self.attack,
            "game": self.game,
            "params": self.params,
            "seed": self.seed,
            "trials": self.trials,
            "out": self.out,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        try:
            cfg = cls(
                experiment=str(obj["experiment"]),
                mechanism=obj.get("mechanism"),
                attack=obj.get("attack"),
                game=obj.get("game"),
                params=dict(obj.get("params", {})),
                seed=int(obj.get("seed", 20260808)),
                trials=int(obj.get("trials", 20)),
                out=obj.get("out"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config: {exc}") from exc
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")
        mech_id = self.mechanism.get("id") if self.mechanism else None
        if mech_id is not None and mech_id not in MECHANISMS:
            raise ConfigError(f"unknown mechanism id {mech_id!r}")
        if self.runner_key() not in RUNNERS:
            raise ConfigError(f"no runner registered for {self.runner_key()}")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-derived per-trial stream: independent and order-insensitive."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, trial))))


_FAMILIES: Dict[Tuple[int, int], CountingQueryFamily] = {}


def _family(n: int, t: int) -> CountingQueryFamily:
    if (n, t) not in _FAMILIES:
        _FAMILIES[(n, t)] = CountingQueryFamily(n, t)
    return _FAMILIES[(n, t)]


def _grid_values(rng: np.random.Generator, count: int, grid: int = 1024) -> List[float]:
    """Values on the 1/grid lattice in (0, 1]; sums and deltas stay exact."""
    return [int(v) / grid for v in rng.integers(1, grid + 1, size=count)]


# --- trial runners ---------------------------------------------------------


def run_sum_differencing(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    n_points = int(p.get("n_points", 32))
    n_del = int(p.get("deletions", 5))
    values = _grid_values(rng, n_points)
    victims = [values[i] for i in rng.choice(n_points, size=n_del, replace=False)]
    mech = DPSumMechanism(epsilon=float(p.get("epsilon", 1.0)))
    transcript = non_adaptive_game(mech, values, victims, rng)
    recovered = recover_all_deletions(transcript)
    errors = [abs(r - y) for r, y in zip(recovered, victims)]
    metric = max(errors)
    return {
        "trial": trial,
        "n_deletions": n_del,
        "metric": metric,
        "success": int(all(r == y for r, y in zip(recovered, victims))),
    }


def run_countmod(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    n = int(p.get("n", 64))
    num_queries = int(p.get("queries", 10))
    copies = int(p.get("copies", 3 * n))
    if copies % 3:
        raise ConfigError("padding copies must be a multiple of 3")
    d_set = set(int(i) + 1 for i in rng.choice(n, size=n // 2, replace=False))
    counts = {i: copies + (1 if i in d_set else 0) for i in range(1, n + 1)}
    mech = CountModRetrainer()
    mech.init(Multiset(counts, n=n), rng)

    correct = 0
    deletions = 0
    for _ in range(num_queries):
        support = [i for i in range(1, n + 1) if rng.random() < 0.5]
        answer = countmod_query_attack(mech, support)
        deletions += 3 * len(support)
        if answer == len(set(support) & d_set):
            correct += 1
    return {
        "trial": trial,
        "queries": num_queries,
        "correct": correct,
        "deletions_used": deletions,
        "metric": correct / num_queries,
        "success": int(correct == num_queries),
    }


def run_bq(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    n, t, k = int(p["n"]), int(p["t"]), int(p["k"])
    sigma = float(p.get("noise_sigma", 0.0))
    symdiff_tol = float(p.get("symdiff_tol", 0.0))
    family = _family(n, t)
    d_set = set(int(i) + 1 for i in rng.choice(n, size=int(p.get("set_size", n // 2)), replace=False))
    counts = {i: 1 for i in d_set}
    counts[STAR] = 3 * k * (n // t)
    mech = BQContinualRetrainer(n, t, k, noise_sigma=sigma)
    mech.init(Multiset(counts, n=None), rng)
    params = BQParams(n=n, t=t, k=k, privacy=PrivacyParams(1.0, 1e-6))
    outcome = bq_attack(mech, params, family, true_set=d_set)
    return {
        "trial": trial,
        "set_size": len(d_set),
        "deletions_used": outcome.deletions_used,
        "metric": outcome.success_metric,
        "success": int(outcome.success_metric <= symdiff_tol),
    }


def run_xor1(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    d = int(p.get("d", 8))
    n_points = int(p.get("n_points", 64))
    n_del = int(p.get("deletions", 8))
    values = [int(v) for v in rng.integers(0, 1 << d, size=n_points)]
    victims = [values[i] for i in rng.choice(n_points, size=n_del, replace=False)]
    from .mechanisms import XorMaskDeleted

    mech = XorMaskDeleted(d=d)
    transcript = non_adaptive_game(mech, values, victims, rng)
    recovered = xor_recover_all(transcript)
    exact = sum(1 for r, y in zip(recovered, victims) if r == y)
    return {
        "trial": trial,
        "n_deletions": n_del,
        "metric": exact / n_del,
        "success": int(exact == n_del),
    }


def run_xor2(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    d = int(p.get("d", 8))
    n_points = int(p.get("n_points", 64))
    n_del = int(p.get("deletions", 8))
    values = [int(v) for v in rng.integers(0, 1 << d, size=n_points)]
    victims = [values[i] for i in rng.choice(n_points, size=n_del, replace=False)]
    from .mechanisms import XorMaskUndeleted

    mech = XorMaskUndeleted(d=d)
    transcript = non_adaptive_game(mech, values, victims, rng)
    recovered = xor_recover_all(transcript)
    scratch = Multiset.from_iterable(values)
    members = 0
    for y, rec in zip(victims, recovered):
        scratch = remove(scratch, y, 1)
        if scratch.count(rec) > 0:
            members += 1
    return {
        "trial": trial,
        "n_deletions": n_del,
        "metric": members / n_del,
        "success": int(members == n_del),
    }


def _footnote_world(w: float) -> tuple:
    return tuple([0.0] * 10 + [w] + [1.0] * 12)


def run_median_footnote(config: ExperimentConfig, trial: int, rng) -> dict:
    w_true = 0.25 if rng.random() < 0.5 else 0.75
    mech = ExactMedianRetrainer()
    mech.init(Multiset.from_iterable(_footnote_world(w_true)), rng)
    initial = mech.last_release.value
    recovered = median_exposure_attack(mech, 1.0)
    report = simulator_blindness_witness(
        mech_factory=ExactMedianRetrainer,
        world0=_footnote_world(0.25),
        world1=_footnote_world(0.75),
        controlled_indices=[12],
        side_info=None,
        rng=rng,
        n_trials=4,
        divergence_threshold=1.0,
    )
    return {
        "trial": trial,
        "w_true": w_true,
        "recovered": recovered,
        "initial_release": initial,
        "verdict": report.verdict,
        "metric": abs(recovered - w_true),
        "success": int(recovered == w_true and report.verdict == "UNSAFE"),
    }


def run_dp_median_rank(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    bits = int(p.get("bits", 8))
    n = int(p.get("n", 1024))
    eps = float(p.get("epsilon", 1.0))
    n_del = int(p.get("deletions", 32))
    grid = 1 << bits
    values = [int(v) / grid for v in rng.integers(1, grid + 1, size=n)]
    remaining = Multiset.from_iterable(values)
    mech = DPMedianMechanism(bits=bits, epsilon=eps)
    mech.init(remaining, rng)

    # transcript-constant error budget: the structure's worst prefix error
    exact_prefix = [0] * grid
    from .dp import bin_of

    for x, c in remaining.items():
        exact_prefix[bin_of(float(x), bits)] += c
    for j in range(1, grid):
        exact_prefix[j] += exact_prefix[j - 1]
    bound = max(
        abs(prefix_query(mech.structure, None, j) - exact_prefix[j]) for j in range(grid)
    )

    probe_ranges = [(0.0, 1.0), (0.0, 0.5), (0.5, 1.0), (0.25, 0.75), (0.0, 0.25), (0.75, 1.0)]
    from .dp import range_query

    def exact_in_range(ms: Multiset, a: float, b: float) -> int:
        lo, hi = bin_of(a, bits), bin_of(b, bits)
        return sum(cnt for x, cnt in ms.items() if lo <= bin_of(float(x), bits) <= hi)

    baseline = {
        r: range_query(mech.structure, mech.ledger, *r) - exact_in_range(remaining, *r)
        for r in probe_ranges
    }

    errors = [rank_error(remaining, mech.last_release.value)]
    constancy = True
    pool = list(remaining.elements())
    order = rng.permutation(len(pool))
    for idx in order[:n_del]:
        y = pool[idx]
        mech.delete(DeletionRequest(y, 1))
        remaining = remove(remaining, y, 1)
        errors.append(rank_error(remaining, mech.last_release.value))
        for r in probe_ranges:
            drift = range_query(mech.structure, mech.ledger, *r) - exact_in_range(remaining, *r)
            if drift != baseline[r]:
                constancy = False

    max_err = max(errors)
    return {
        "trial": trial,
        "init_rank_error": errors[0],
        "max_rank_error": max_err,
        "error_bound": bound + 1.0,
        "constancy_ok": int(constancy),
        "metric": float(max_err),
        "success": int(constancy and max_err <= bound + 1.0),
    }


def run_kmeans(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    n = int(p.get("n", 200))
    alpha = float(p.get("alpha", 0.2))
    dist = p.get("distribution", "uniform")
    if dist == "uniform":
        data = [float(v) for v in rng.random(n)]
    elif dist == "mixture":
        means = p.get("means", [0.0, 1.5])
        sigma = float(p.get("sigma", 1.0))
        comp = rng.integers(0, 2, size=n)
        data = [float(v) for v in rng.normal(np.where(comp, means[1], means[0]), sigma)]
    else:
        raise ConfigError(f"unknown distribution {dist!r}")

    n_controlled = math.ceil(alpha * n)
    controlled_idx = rng.choice(n, size=n_controlled, replace=False)
    controlled = [data[i] for i in controlled_idx]
    uncontrolled = Multiset.from_iterable(data)
    for a in controlled:
        uncontrolled = remove(uncontrolled, a, 1)

    mech = KMeansRetrainer()
    mech.init(Multiset.from_iterable(data), rng)
    outcome = kmeans_attack_loop(mech, controlled, n, budget=len(controlled))

    matched = 0
    for r in outcome.recovered:
        if any(abs(r - u) <= 1e-9 * max(1.0, abs(u)) for u in uncontrolled.support()):
            matched += 1

    # ground truth for every non-ambiguous accepted inference, in the frame
    # the attack used (mirrored rounds track the right cluster)
    sizes_ok = True
    scratch = sorted(data)
    by_round = {info["round"]: info for info in outcome.rounds}
    for round_no in sorted(by_round):
        info = by_round[round_no]
        a_star = info["a_star"]
        state_old = lloyd_2means_1d(scratch)
        scratch.remove(a_star)
        state_new = lloyd_2means_1d(scratch)
        if "m1_old" in info and not info.get("ambiguous", False):
            if info["mirrored"]:
                m1_gt, p_gt = state_old.m2, state_old.m2 - state_new.m2
            else:
                m1_gt, p_gt = state_old.m1, state_old.m1 - state_new.m1
            if info["m1_old"] != m1_gt or info["p"] != p_gt:
                sizes_ok = False

    return {
        "trial": trial,
        "deletions_used": outcome.deletions_used,
        "recovered_count": len(outcome.recovered),
        "matched_count": matched,
        "sizes_ok": int(sizes_ok),
        "ambiguous_count": len(outcome.ambiguous_rounds),
        "metric": float(len(outcome.recovered)),
        "success": int(matched >= 1 and sizes_ok),
    }


def _games_suite_specs(p: dict):
    n_points = int(p.get("n_points", 64))
    n_corrupt = int(p.get("corrupted", 8))
    bits = int(p.get("bits", 6))

    def dp_sum_setup(rng):
        data = _grid_values(rng, n_points)
        return DPSumMechanism(epsilon=1.0), data

    def dp_median_setup(rng):
        grid = 1 << bits
        data = [int(v) / grid for v in rng.integers(1, grid + 1, size=n_points)]
        return DPMedianMechanism(bits=bits, epsilon=1.0), data

    def sq_setup(rng):
        domain = 16
        data = [int(v) for v in rng.integers(1, domain + 1, size=n_points)]
        specs = [("const_one",), ("bq_block", domain, 4, 1)]
        return SQMechanism(predicates=specs, epsilon=1.0), data

    return {"dp_sum": dp_sum_setup, "dp_median": dp_median_setup, "sq": sq_setup}, n_corrupt


def run_games_suite(config: ExperimentConfig, trial: int, rng) -> dict:
    setups, n_corrupt = _games_suite_specs(config.params)
    row = {"trial": trial}
    all_exact = True
    bookkeeping = True
    for stream, (mech_id, setup) in enumerate(sorted(setups.items())):
        sub = np.random.Generator(np.random.Philox(np.random.SeedSequence((config.seed, trial, stream))))
        mech, data = setup(sub)
        Y = set(int(i) + 1 for i in sub.choice(len(data), size=n_corrupt, replace=False))
        record = static_game(mech, data, SignAdaptiveAttacker(), Y, None, sub)
        simulated = stateless_simulator(mech_id, mech.sim_seed(), record.deleted_values)
        exact = simulated == record.releases
        row[f"{mech_id}_exact"] = int(exact)
        all_exact = all_exact and exact

        mech2, data2 = setup(sub)
        idx = sorted(int(i) + 1 for i in sub.choice(len(data2), size=4, replace=False))
        script = [({idx[0], idx[1]}, {idx[0]}), ({idx[2]}, {idx[1], idx[2]}), ({idx[3]}, {idx[3]})]
        rec = dynamic_game(mech2, data2, ScriptedDynamicPlayer(script), None, 0, k=4, rng=sub)
        bookkeeping = bookkeeping and bookkeeping_ok(rec, 4)
    row["bookkeeping_ok"] = int(bookkeeping)
    row["metric"] = 1.0 if (all_exact and bookkeeping) else 0.0
    row["success"] = int(all_exact and bookkeeping)
    return row


def run_leakage_full(config: ExperimentConfig, trial: int, rng) -> dict:
    p = config.params
    n_points = int(p.get("n_points", 21))
    k = int(p.get("k", 3))
    data = _grid_values(rng, n_points)
    Y = set(int(i) + 1 for i in rng.choice(n_points, size=k, replace=False))

    def attacker_factory():
        return StaticAsDynamicPlayer(SignAdaptiveAttacker(), Y)

    real, ideal = leakage_game(
        mech_factory=ExactMedianRetrainer,
        D=data,
        attacker_factory=attacker_factory,
        simulator_factory=lambda leak: FullKnowledgeSimulator(leak, attacker_factory, ExactMedianRetrainer),
        leakage=lambda D: list(D),
        side_info=None,
        k=k,
        rng=rng,
    )
    real_key = hashlib.sha256(view_key(real.view).encode()).hexdigest()[:16]
    ideal_key = hashlib.sha256(view_key(ideal.view).encode()).hexdigest()[:16]
    equal = real_key == ideal_key and real.corrupted == ideal.corrupted
    return {
        "trial": trial,
        "views_equal": int(equal),
        "real_view_digest": real_key,
        "sim_view_digest": ideal_key,
        "metric": float(equal),
        "success": int(equal),
    }


RUNNERS: Dict[Tuple[Optional[str], Optional[str], Optional[str]], Callable] = {
    ("dp_sum", "differencing", None): run_sum_differencing,
    ("countmod", "countmod_query", None): run_countmod,
    ("bq_retrainer", "bq", None): run_bq,
    ("xor1", "xor_differencing", None): run_xor1,
    ("xor2", "xor_differencing", None): run_xor2,
    ("exact_median", "median_exposure", "witness"): run_median_footnote,
    ("dp_median", None, "rank_trace"): run_dp_median_rank,
    ("kmeans", "kmeans_loop", None): run_kmeans,
    (None, None, "stateless_suite"): run_games_suite,
    ("exact_median", None, "leakage"): run_leakage_full,
}


COLUMNS: Dict[Tuple[Optional[str], Optional[str], Optional[str]], List[str]] = {
    ("dp_sum", "differencing", None): ["trial", "n_deletions", "metric", "success"],
    ("countmod", "countmod_query", None): ["trial", "queries", "correct", "deletions_used", "metric", "success"],
    ("bq_retrainer", "bq", None): ["trial", "set_size", "deletions_used", "metric", "success"],
    ("xor1", "xor_differencing", None): ["trial", "n_deletions", "metric", "success"],
    ("xor2", "xor_differencing", None): ["trial", "n_deletions", "metric", "success"],
    ("exact_median", "median_exposure", "witness"): [
        "trial", "w_true", "recovered", "initial_release", "verdict", "metric", "success",
    ],
    ("dp_median", None, "rank_trace"): [
        "trial", "init_rank_error", "max_rank_error", "error_bound", "constancy_ok", "metric", "success",
    ],
    ("kmeans", "kmeans_loop", None): [
        "trial", "deletions_used", "recovered_count", "matched_count", "sizes_ok",
        "ambiguous_count", "metric", "success",
    ],
    (None, None, "stateless_suite"): [
        "trial", "dp_median_exact", "dp_sum_exact", "sq_exact", "bookkeeping_ok", "metric", "success",
    ],
    ("exact_median", None, "leakage"): [
        "trial", "views_equal", "real_view_digest", "sim_view_digest", "metric", "success",
    ],
}


def _preset(experiment, mechanism=None, attack=None, game=None, params=None, trials=20, seed=20260808):
    return ExperimentConfig(
        experiment=experiment,
        mechanism=mechanism,
        attack=attack,
        game=game,
        params=params or {},
        seed=seed,
        trials=trials,
    )


def _build_presets() -> Dict[str, ExperimentConfig]:
    return {
        "sum-differencing": _preset(
            "sum-differencing",
            mechanism={"id": "dp_sum", "params": {"epsilon": 1.0}},
            attack={"id": "differencing", "params": {}},
            params={"n_points": 32, "deletions": 5, "epsilon": 1.0},
            trials=100,
        ),
        "countmod-quadratic": _preset(
            "countmod-quadratic",
            mechanism={"id": "countmod", "params": {}},
            attack={"id": "countmod_query", "params": {}},
            params={"n": 64, "queries": 10, "copies": 192},
            trials=20,
        ),
        "bq-linear": _preset(
            "bq-linear",
            mechanism={"id": "bq_retrainer", "params": {}},
            attack={"id": "bq", "params": {}},
            params={"n": 64, "t": 1, "k": 2, "noise_sigma": 0.0, "symdiff_tol": 0.0},
            trials=20,
        ),
        "bq-omega1": _preset(
            "bq-omega1",
            mechanism={"id": "bq_retrainer", "params": {}},
            attack={"id": "bq", "params": {}},
            params={"n": 256, "t": 16, "k": 4, "set_size": 128, "noise_sigma": 0.0, "symdiff_tol": 0.0},
            trials=20,
        ),
        "xor1": _preset(
            "xor1",
            mechanism={"id": "xor1", "params": {"d": 8}},
            attack={"id": "xor_differencing", "params": {}},
            params={"d": 8, "n_points": 64, "deletions": 8},
            trials=200,
        ),
        "xor2": _preset(
            "xor2",
            mechanism={"id": "xor2", "params": {"d": 8}},
            attack={"id": "xor_differencing", "params": {}},
            params={"d": 8, "n_points": 64, "deletions": 8},
            trials=200,
        ),
        "median-footnote": _preset(
            "median-footnote",
            mechanism={"id": "exact_median", "params": {}},
            attack={"id": "median_exposure", "params": {}},
            game={"id": "witness", "mode": None},
            params={},
            trials=50,
        ),
        "dp-median-rank": _preset(
            "dp-median-rank",
            mechanism={"id": "dp_median", "params": {"bits": 8, "epsilon": 1.0}},
            game={"id": "rank_trace", "mode": None},
            params={"bits": 8, "n": 1024, "epsilon": 1.0, "deletions": 32},
            trials=50,
        ),
        "kmeans-uniform": _preset(
            "kmeans-uniform",
            mechanism={"id": "kmeans", "params": {}},
            attack={"id": "kmeans_loop", "params": {}},
            params={"n": 200, "alpha": 0.2, "distribution": "uniform"},
            trials=50,
        ),
        "kmeans-mixture": _preset(
            "kmeans-mixture",
            mechanism={"id": "kmeans", "params": {}},
            attack={"id": "kmeans_loop", "params": {}},
            params={"n": 200, "alpha": 0.2, "distribution": "mixture", "means": [0.0, 1.5], "sigma": 1.0},
            trials=50,
        ),
        "games-stateless-suite": _preset(
            "games-stateless-suite",
            game={"id": "stateless_suite", "mode": None},
            params={"n_points": 64, "corrupted": 8, "bits": 6},
            trials=100,
        ),
        "leakage-full": _preset(
            "leakage-full",
            mechanism={"id": "exact_median", "params": {}},
            game={"id": "leakage", "mode": None},
            params={"n_points": 21, "k": 3},
            trials=200,
        ),
    }


def list_presets() -> Dict[str, ExperimentConfig]:
    """Fresh copies of every built-in configuration."""
    return _build_presets()


def get_preset(name: str) -> ExperimentConfig:
    presets = _build_presets()
    if name not in presets:
        raise ConfigError(f"unknown preset {name!r}; see `gauntlet list`")
    return presets[name]
