"""Executable security games over the deletion interface.

Three nested games (fixed deletion sequence; adaptive ordering over a
static corrupted set; fully dynamic corruption) plus a leakage variant
that hands the simulator an explicit function of the dataset. The "is
this mechanism safe" question is answered two ways: a generic replay
simulator for mechanisms whose transcript is determined by the initial
release and the deleted values, and a two-world witness that certifies
no simulator can exist when identical simulator inputs face diverging
real views.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from .core import (
    DeletionRequest,
    Mechanism,
    MechanismTranscript,
    Multiset,
    Release,
    canonical_json,
)
from .dp import DeletionLedger, RangeCountStructure, bin_value, median_search
from .errors import (
    AttackerProtocolViolation,
    DuplicateDeletionError,
    InvalidWorldPairError,
    NotStatelessError,
)
from .mechanisms import build_predicates


def transcript_hash(releases: Sequence[Release]) -> str:
    payload = canonical_json([z.to_json() for z in releases])
    return hashlib.sha256(payload.encode()).hexdigest()


def view_key(view) -> str:
    return canonical_json(view)


def ensure_deterministic_side_info(side_info: Optional[Callable], D) -> Any:
    """Evaluate a side-information function, rejecting randomized ones.

    Both the real and simulated runs must receive the same payload, so
    the function is called twice and compared.
    """
    if side_info is None:
        return None
    first, second = side_info(D), side_info(D)
    if canonical_json(first) != canonical_json(second):
        raise ValueError("side-information function must be deterministic")
    return first


@dataclass
class GameRecord:
    """Output of one game run: the corrupted set and the declared view."""

    game: str
    corrupted: Tuple[int, ...]
    view: Any
    transcript_hash: str
    mode: Optional[int] = None
    releases: List[Release] = field(default_factory=list)
    deleted_values: List[Any] = field(default_factory=list)
    rounds: List[dict] = field(default_factory=list)


def non_adaptive_game(
    mech: Mechanism,
    D: Sequence,
    deletions: Sequence,
    rng: np.random.Generator,
) -> MechanismTranscript:
    """Run init plus a fixed deletion sequence; return the full transcript."""
    ms = Multiset.from_iterable(D)
    scratch = ms
    z0 = mech.init(ms, rng)
    transcript = MechanismTranscript(initial=z0)
    from .core import remove as _remove

    for y in deletions:
        if scratch.count(y) < 1:
            raise DuplicateDeletionError(f"deletion sequence exhausts {y!r}")
        scratch = _remove(scratch, y, 1)
        req = DeletionRequest(y, 1)
        z = mech.delete(req)
        transcript.steps.append((req, z))
    return transcript


class FixedOrderAttacker:
    """Static attacker that deletes its controlled indices in a fixed order."""

    def __init__(self, order: Optional[Sequence[int]] = None):
        self._order = list(order) if order is not None else None

    def begin(self, controlled: Dict[int, Any], side_info, z0: Release, rng) -> None:
        self.controlled = dict(controlled)
        self.side_info = side_info
        self.releases = [z0]
        self._queue = list(self._order) if self._order is not None else sorted(controlled)

    def choose(self) -> int:
        return self._queue.pop(0)

    def observe(self, z: Release) -> None:
        self.releases.append(z)

    def view(self):
        return {
            "randomness": None,
            "Y": sorted(self.controlled),
            "side_info": self.side_info,
            "releases": [z.to_json() for z in self.releases],
        }


class SignAdaptiveAttacker(FixedOrderAttacker):
    """Orders deletions by the drift of the releases it has seen.

    If the last release moved up (or stayed), delete the largest
    remaining controlled point next, otherwise the smallest. Exercises
    genuine adaptivity while staying deterministic.
    """

    def __init__(self):
        super().__init__(order=None)

    @staticmethod
    def _level(z: Release) -> float:
        if z.kind == "vector":
            return float(sum(z.value))
        if z.kind == "pair":
            return float(z.value[0] + z.value[1])
        return float(z.value)

    def begin(self, controlled, side_info, z0, rng) -> None:
        super().begin(controlled, side_info, z0, rng)
        self._queue = sorted(controlled, key=lambda i: (self.controlled[i], i))

    def choose(self) -> int:
        levels = [self._level(z) for z in self.releases]
        go_high = len(levels) < 2 or levels[-1] >= levels[-2]
        return self._queue.pop(-1 if go_high else 0)


def static_game(
    mech: Mechanism,
    D: Sequence,
    attacker,
    Y: Set[int],
    side_info: Optional[Callable],
    rng: np.random.Generator,
) -> GameRecord:
    """Adaptive-order deletions over a fixed corrupted index set Y (1-indexed)."""
    info = ensure_deterministic_side_info(side_info, D)
    mech_rng, atk_rng = rng.spawn(2)
    z0 = mech.init(Multiset.from_iterable(D), mech_rng)
    controlled = {i: D[i - 1] for i in Y}
    attacker.begin(controlled, info, z0, atk_rng)

    releases = [z0]
    deleted_values: List[Any] = []
    used: Set[int] = set()
    for _ in range(len(Y)):
        j = attacker.choose()
        if j not in Y or j in used:
            raise AttackerProtocolViolation(f"index {j} outside the unused corrupted set")
        used.add(j)
        z = mech.delete(DeletionRequest(D[j - 1], 1))
        deleted_values.append(D[j - 1])
        releases.append(z)
        attacker.observe(z)

    return GameRecord(
        game="static",
        corrupted=tuple(sorted(Y)),
        view=attacker.view(),
        transcript_hash=transcript_hash(releases),
        releases=releases,
        deleted_values=deleted_values,
    )


class ScriptedDynamicPlayer:
    """Dynamic player following a fixed (corrupt, delete) script."""

    def __init__(self, script: Sequence[Tuple[Set[int], Set[int]]]):
        self._script = [(set(I), set(J)) for I, J in script]

    def begin(self, side_info, z0: Release, rng) -> None:
        self.side_info = side_info
        self.releases = [z0]
        self.learned: Dict[int, Any] = {}
        self._pos = 0

    def round(self):
        if self._pos >= len(self._script):
            return None
        step = self._script[self._pos]
        self._pos += 1
        return step

    def learn(self, revealed: Dict[int, Any]) -> None:
        self.learned.update(revealed)

    def observe(self, z: Release) -> None:
        self.releases.append(z)

    def view(self):
        return {
            "randomness": None,
            "side_info": self.side_info,
            "learned": {str(i): self.learned[i] for i in sorted(self.learned)},
            "releases": [z.to_json() for z in self.releases],
        }


class StaticAsDynamicPlayer:
    """Wrap a static attacker: corrupt all of Y up front, then delete one by one."""

    def __init__(self, static_attacker, Y: Set[int]):
        self.inner = static_attacker
        self.Y = set(Y)

    def begin(self, side_info, z0, rng) -> None:
        self._side_info = side_info
        self._z0 = z0
        self._rng = rng
        self._first = True
        self._remaining = len(self.Y)

    def round(self):
        if self._first:
            self._first = False
            return (set(self.Y), set())
        if self._remaining == 0:
            return None
        self._remaining -= 1
        return (set(), {self.inner.choose()})

    def learn(self, revealed: Dict[int, Any]) -> None:
        self.inner.begin(revealed, self._side_info, self._z0, self._rng)

    def observe(self, z: Release) -> None:
        self.inner.observe(z)

    def view(self):
        return self.inner.view()


def dynamic_game(
    mech: Mechanism,
    D: Sequence,
    player,
    side_info: Optional[Callable],
    b: int,
    k: int,
    rng: np.random.Generator,
) -> GameRecord:
    """Dynamic corruption game; b=0 serves deletions, b=1 hides them.

    In mode b=1 the mechanism is never invoked after init; the player is
    then a simulator and its output v is a claimed view. The record keeps
    the (Y, R, I, J) trail per round so bookkeeping invariants can be
    audited afterwards.
    """
    if b not in (0, 1):
        raise ValueError(f"mode bit must be 0 or 1, got {b}")
    info = ensure_deterministic_side_info(side_info, D)
    mech_rng, player_rng = rng.spawn(2)
    z0 = mech.init(Multiset.from_iterable(D), mech_rng)
    player.begin(info, z0, player_rng)

    Y: Set[int] = set()
    R: Set[int] = set()
    releases = [z0]
    deleted_values: List[Any] = []
    rounds: List[dict] = []
    while len(R) < k:
        step = player.round()
        if step is None:
            break
        I, J = set(step[0]), set(step[1])
        if any(not (1 <= i <= len(D)) for i in I):
            raise AttackerProtocolViolation("corruption index outside [n]")
        if len(Y | I) > k:
            raise AttackerProtocolViolation(f"corrupting {sorted(I)} would exceed the budget k={k}")
        Y |= I
        if I:
            player.learn({i: D[i - 1] for i in I})
        if not J <= (Y - R):
            raise AttackerProtocolViolation(f"deletion set {sorted(J)} not within Y minus R")
        R |= J
        if b == 0 and J:
            z = mech.delete_batch([DeletionRequest(D[j - 1], 1) for j in sorted(J)])
            releases.append(z)
            deleted_values.extend(D[j - 1] for j in sorted(J))
            player.observe(z)
        rounds.append({"I": sorted(I), "J": sorted(J), "Y": sorted(Y), "R": sorted(R)})

    return GameRecord(
        game="dynamic",
        mode=b,
        corrupted=tuple(sorted(Y)),
        view=player.view(),
        transcript_hash=transcript_hash(releases),
        releases=releases,
        deleted_values=deleted_values,
        rounds=rounds,
    )


class FullKnowledgeSimulator:
    """Leakage-game simulator for leaks that pin down the dataset multiset.

    Wraps the same dynamic player the real game runs, mirrors its
    corruption choices into the outer game (so the output Y matches), and
    answers its deletions from an internal mechanism instance initialized
    on the leaked multiset. Deleted values are taken from the corruption
    reveals (J is always inside Y), so an order-free leak such as the
    exact histogram suffices for any symmetric mechanism.
    """

    def __init__(self, leaked_multiset, player_factory: Callable, mech_factory: Callable):
        self.leaked = list(leaked_multiset)
        self.player_factory = player_factory
        self.mech_factory = mech_factory

    def begin(self, side_info, z0: Release, rng) -> None:
        inner_rng, mech_rng = rng.spawn(2)
        self._inner = self.player_factory()
        self._inner.begin(side_info, z0, inner_rng)
        self._mech = self.mech_factory()
        self._mech.init(Multiset.from_iterable(self.leaked), mech_rng)
        self._learned: Dict[int, Any] = {}
        self._pending_J: Set[int] = set()

    def _flush(self) -> None:
        if self._pending_J:
            reqs = [DeletionRequest(self._learned[j], 1) for j in sorted(self._pending_J)]
            self._inner.observe(self._mech.delete_batch(reqs))
            self._pending_J = set()

    def round(self):
        self._flush()
        step = self._inner.round()
        if step is None:
            return None
        I, J = set(step[0]), set(step[1])
        self._pending_J = J
        return (I, J)

    def learn(self, revealed: Dict[int, Any]) -> None:
        self._learned.update(revealed)
        self._inner.learn(revealed)

    def observe(self, z: Release) -> None:  # pragma: no cover - b=1 never calls this
        raise AssertionError("simulator must not receive real releases")

    def view(self):
        self._flush()
        return self._inner.view()


def leakage_game(
    mech_factory: Callable[[], Mechanism],
    D: Sequence,
    attacker_factory: Callable,
    simulator_factory: Callable[[Any], Any],
    leakage: Optional[Callable],
    side_info: Optional[Callable],
    k: int,
    rng: np.random.Generator,
) -> Tuple[GameRecord, GameRecord]:
    """Real dynamic run versus a simulator pre-loaded with the leak g(D)."""
    rng0, rng1 = rng.spawn(2)
    real = dynamic_game(mech_factory(), D, attacker_factory(), side_info, 0, k, rng0)
    leaked = leakage(D) if leakage is not None else None
    simulator = simulator_factory(leaked)
    ideal = dynamic_game(mech_factory(), D, simulator, side_info, 1, k, rng1)
    return real, ideal


# Replay rules for mechanisms whose transcript is a deterministic
# function of (initial payload, deleted values). The payload is the
# mechanism's sim_seed, not necessarily its public release: the median
# mechanism replays from its serialized tree.


def _replay_dp_sum(seed: dict, deleted: Sequence) -> List[Release]:
    z = seed["z0"]
    out = [Release.scalar(z)]
    for y in deleted:
        z = z - y
        out.append(Release.scalar(z))
    return out


def _replay_dp_median(seed: dict, deleted: Sequence) -> List[Release]:
    P = RangeCountStructure.from_dict(seed["structure"])
    ledger = DeletionLedger(P.bits)
    n = int(seed["n0"])
    out = [Release.scalar(bin_value(median_search(P, ledger, n), P.bits))]
    for y in deleted:
        ledger.record(float(y))
        n -= 1
        out.append(Release.scalar(bin_value(median_search(P, ledger, n), P.bits)))
    return out


def _replay_sq(seed: dict, deleted: Sequence) -> List[Release]:
    predicates = build_predicates([tuple(s) for s in seed["predicates"]])
    sums = list(seed["sums"])
    out = [Release.vector(sums)]
    for y in deleted:
        sums = [s - c(y) for s, c in zip(sums, predicates)]
        out.append(Release.vector(sums))
    return out


def _replay_xor1(seed: dict, deleted: Sequence) -> List[Release]:
    z = int(seed["z"])
    out = [Release.scalar(z)]
    for y in deleted:
        out.append(Release.scalar(z ^ int(y)))
    return out


STATELESS_REPLAYERS = {
    "dp_sum": _replay_dp_sum,
    "dp_median": _replay_dp_median,
    "sq": _replay_sq,
    "naive_median": lambda seed, deleted: [Release.scalar(seed["z0"])] * (len(list(deleted)) + 1),
    "xor1": _replay_xor1,
}


def stateless_simulator(mech_id: str, sim_seed: dict, deleted_values: Sequence) -> List[Release]:
    """Recompute the whole release sequence from the initial payload.

    Bit-exact for the registered mechanisms; raises NotStatelessError for
    mechanisms whose updates depend on undeleted data or fresh
    randomness (exact median, batched-query retrainer, clustering, the
    sample-a-survivor masker).
    """
    replayer = STATELESS_REPLAYERS.get(mech_id)
    if replayer is None:
        raise NotStatelessError(f"mechanism {mech_id!r} has no registered update rule")
    if sim_seed is None:
        raise NotStatelessError(f"mechanism {mech_id!r} provided no simulation payload")
    return replayer(sim_seed, list(deleted_values))


def make_scalar_grid_discretizer(views: Sequence[float], buckets: int = 32) -> Callable:
    lo = min(views)
    hi = max(views)
    width = (hi - lo) or 1.0

    def bucket(v: float) -> int:
        j = int((v - lo) / width * buckets)
        return min(max(j, 0), buckets - 1)

    return bucket


def tv_estimate(
    sampler_a: Callable[[np.random.Generator], Any],
    sampler_b: Callable[[np.random.Generator], Any],
    n_trials: int,
    rng: np.random.Generator,
    discretizer: Optional[Callable] = None,
) -> float:
    """Empirical total variation between two view samplers.

    Draws n_trials from each, maps views to buckets (canonical JSON by
    default), and returns half the L1 distance of the empirical bucket
    distributions. Standard error is of order sqrt(K/N) for K occupied
    buckets.
    """
    rng_a, rng_b = rng.spawn(2)
    views_a = [sampler_a(rng_a) for _ in range(n_trials)]
    views_b = [sampler_b(rng_b) for _ in range(n_trials)]
    if discretizer is None:
        discretizer = view_key
    counts_a: Dict[Any, int] = {}
    counts_b: Dict[Any, int] = {}
    for v in views_a:
        key = discretizer(v)
        counts_a[key] = counts_a.get(key, 0) + 1
    for v in views_b:
        key = discretizer(v)
        counts_b[key] = counts_b.get(key, 0) + 1
    keys = set(counts_a) | set(counts_b)
    return 0.5 * sum(abs(counts_a.get(k, 0) - counts_b.get(k, 0)) for k in keys) / n_trials


def bookkeeping_ok(record: GameRecord, k: int) -> bool:
    """Audit a dynamic game's (I, J, Y, R) trail against the loop rules."""
    Y: Set[int] = set()
    R: Set[int] = set()
    for entry in record.rounds:
        I, J = set(entry["I"]), set(entry["J"])
        if len(Y | I) > k:
            return False
        Y |= I
        if J & R or not J <= Y:
            return False
        R |= J
        if set(entry["Y"]) != Y or set(entry["R"]) != R:
            return False
    return R <= Y and len(Y) <= k and set(record.corrupted) == Y


@dataclass
class WitnessReport:
    verdict: str
    inputs_identical: bool
    divergence: float
    trials: int


def simulator_blindness_witness(
    mech_factory: Callable[[], Mechanism],
    world0: Sequence,
    world1: Sequence,
    controlled_indices: Sequence[int],
    side_info: Optional[Callable],
    rng: np.random.Generator,
    n_trials: int = 32,
    divergence_threshold: float = 0.5,
) -> WitnessReport:
    """Certify that no simulator can bridge two worlds.

    Any simulator's input is the tuple (z_0, controlled values, side
    info). The witness runs both worlds with paired randomness and checks
    (a) those tuples are bit-identical across worlds, and (b) the real
    views diverge with frequency at least the threshold. When both hold
    the mechanism is UNSAFE: every simulator produces identical output
    distributions in the two worlds, so at least one world's real view is
    at total variation >= divergence/2 from anything it can emit.
    """
    if len(world0) != len(world1):
        raise InvalidWorldPairError("worlds must have equal size")
    controlled = sorted(set(int(i) for i in controlled_indices))
    for i in controlled:
        if world0[i - 1] != world1[i - 1]:
            raise InvalidWorldPairError(f"controlled index {i} differs across worlds")

    inputs_identical = True
    diverged = 0
    for _ in range(n_trials):
        seed = int(rng.integers(0, 2**63 - 1))
        tuples = []
        views = []
        for world in (world0, world1):
            run_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
            mech = mech_factory()
            info = ensure_deterministic_side_info(side_info, world)
            z0 = mech.init(Multiset.from_iterable(world), run_rng)
            sim_input = {
                "z0": z0.to_json(),
                "controlled": [world[i - 1] for i in controlled],
                "side_info": info,
            }
            releases = [z0]
            for i in controlled:
                releases.append(mech.delete(DeletionRequest(world[i - 1], 1)))
            tuples.append(canonical_json(sim_input))
            views.append(canonical_json([z.to_json() for z in releases]))
        if tuples[0] != tuples[1]:
            inputs_identical = False
        if views[0] != views[1]:
            diverged += 1

    divergence = diverged / n_trials
    unsafe = inputs_identical and divergence >= divergence_threshold
    return WitnessReport(
        verdict="UNSAFE" if unsafe else "SAFE_INCONCLUSIVE",
        inputs_identical=inputs_identical,
        divergence=divergence,
        trials=n_trials,
    )
