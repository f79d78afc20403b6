"""Attackers that drive mechanisms through the deletion interface.

Each attack consumes a live Mechanism (or a finished transcript) and
emits either an exact extracted secret or a reconstruction with its
success metric. Deletion budgets are explicit; the classic star-padding
regimes are preset as "quadratic" (3n copies per element), "linear"
(3kn stars, one query per round) and "omega1" (3kn/t stars, t queries
per round).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, List, Optional, Sequence, Set, Tuple

from .core import DeletionRequest, Mechanism, MechanismTranscript, Multiset, STAR
from .errors import (
    DegenerateCentersError,
    NoDeletionsError,
    NoIntegerSolutionError,
)
from .mechanisms import BQParams, KMeansState, BQContinualRetrainer
from .queries import CountingQueryFamily, reconstruct


@dataclass
class AttackOutcome:
    """What an attack recovered and what it cost."""

    recovered: Any
    deletions_used: int
    success_metric: float
    ambiguous_rounds: List[int] = field(default_factory=list)
    rounds: List[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "recovered": self.recovered if not isinstance(self.recovered, set) else sorted(self.recovered),
            "deletions_used": self.deletions_used,
            "metric": self.success_metric,
            "ambiguous_rounds": list(self.ambiguous_rounds),
        }


def differencing_attack(transcript: MechanismTranscript, step: int = 1) -> float:
    """Deleted value at the given 1-indexed step of an exact-subtraction transcript."""
    if not transcript.steps:
        raise NoDeletionsError("transcript has no deletions")
    releases = transcript.releases()
    return releases[step - 1].value - releases[step].value


def recover_all_deletions(transcript: MechanismTranscript) -> List[float]:
    """All deleted values of an exact-subtraction transcript, in order."""
    if not transcript.steps:
        raise NoDeletionsError("transcript has no deletions")
    releases = transcript.releases()
    return [releases[i].value - releases[i + 1].value for i in range(len(releases) - 1)]


def countmod_query_attack(mech: Mechanism, query_support: Sequence[int]) -> float:
    """Extract one counting-query answer from a mod-3 count mechanism.

    Deletes 2 copies of every element the query selects, reads the
    release, then deletes 1 more copy of each to reset the padding to
    multiples of 3. Uses exactly 3 * |support| deletions and leaves the
    mechanism ready for the next query.
    """
    support = sorted(set(int(i) for i in query_support))
    for i in support:
        mech.delete(DeletionRequest(i, 2))
    a_q = mech.last_release.value
    for i in support:
        mech.delete(DeletionRequest(i, 1))
    return float(a_q)


def bq_attack(
    mech: BQContinualRetrainer,
    params: BQParams,
    family: CountingQueryFamily,
    true_set: Optional[Set[int]] = None,
) -> AttackOutcome:
    """Reconstruct the hidden subset from a continual batched-query mechanism.

    The mechanism must be initialized on D plus 3k * (n/t) stars, so its
    initial release answers the last block. Each round deletes 3k stars,
    forcing the released block index down by one; after n/t - 1 rounds
    the attacker holds answers to all n queries and decodes them.
    """
    blocks = params.num_blocks
    answers = [0.0] * params.n

    def record(block_index: int, values) -> None:
        lo = (block_index - 1) * params.t
        for offset, v in enumerate(values):
            answers[lo + offset] = float(v)

    record(blocks, mech.last_release.value)
    deletions = 0
    for round_no in range(1, blocks):
        z = mech.delete(DeletionRequest(STAR, 3 * params.k))
        deletions += 3 * params.k
        record(blocks - round_no, z.value)

    estimate = reconstruct(answers, params.n)
    metric = float(len(estimate ^ true_set)) if true_set is not None else math.nan
    return AttackOutcome(recovered=estimate, deletions_used=deletions, success_metric=metric)


def xor_differencing_attack(transcript: MechanismTranscript, step: int = 1) -> int:
    """Masked value at the given step: z_0 XOR z_step."""
    if not transcript.steps:
        raise NoDeletionsError("transcript has no deletions")
    releases = transcript.releases()
    return int(releases[0].value) ^ int(releases[step].value)


def xor_recover_all(transcript: MechanismTranscript) -> List[int]:
    """All masked values of an XOR transcript: z_0 XOR z_l for every step l."""
    if not transcript.steps:
        raise NoDeletionsError("transcript has no deletions")
    releases = transcript.releases()
    z0 = int(releases[0].value)
    return [z0 ^ int(z.value) for z in releases[1:]]


def median_exposure_attack(mech: Mechanism, controlled_value) -> float:
    """Delete the single controlled point and read off the exposed value."""
    z = mech.delete(DeletionRequest(controlled_value, 1))
    return z.value


@dataclass(frozen=True)
class InferredSizes:
    m1_old: int
    p: int
    ambiguous: bool


# Relative integrality tolerance: center means are floating point, so the
# jump-count formula lands near, not on, integers.
_INTEGER_TOL = 1e-6


def kmeans_infer_sizes(
    c_old: Tuple[float, float],
    c_new: Tuple[float, float],
    n_before: int,
    a_star: float,
    *,
    allow_reverse: bool = False,
) -> InferredSizes:
    """Recover the pre-deletion left-cluster size and the jump count.

    After a right-cluster deletion, equating the two expressions for the
    new right-cluster sum leaves one equation in (m1_old, p). Candidate
    left-cluster sizes are scanned in ascending order; the first whose
    implied jump count p is (numerically) an integer in the feasible
    window is accepted, and any further passing candidate marks the round
    ambiguous. By default the window is 0 <= p <= m1_old (points jumped
    left-to-right, if at all); allow_reverse widens it to jumps in either
    direction, -(m2_old - 1) <= p <= m1_old.
    """
    c1_old, c2_old = c_old
    c1_new, c2_new = c_new
    if c2_new == c1_new:
        raise DegenerateCentersError("new centers coincide")

    slope = (c1_old - c1_new - c2_old + c2_new) / (c2_new - c1_new)
    offset = (n_before * (c2_old - c2_new) + c2_new - a_star) / (c2_new - c1_new)

    accepted: Optional[InferredSizes] = None
    for m1 in range(1, n_before):
        p = slope * m1 + offset
        p_int = round(p)
        lo = -(n_before - m1 - 1) if allow_reverse else 0
        if abs(p - p_int) <= _INTEGER_TOL * max(1.0, abs(p)) and lo <= p_int <= m1:
            if accepted is None:
                accepted = InferredSizes(m1, int(p_int), False)
            else:
                return InferredSizes(accepted.m1_old, accepted.p, True)
    if accepted is None:
        raise NoIntegerSolutionError("no candidate left-cluster size gives an integer jump count")
    return accepted


def kmeans_isolate_point(c1_old: float, c1_new: float, m1_old: int, p: int = 1) -> float:
    """Exact value of the single point that jumped out of the left cluster.

    With p = -1 the same books give the negated value of the single point
    that jumped in.
    """
    return m1_old * c1_old - (m1_old - p) * c1_new


def _mirror_frame(c_old, c_new, a_star):
    """Reflect the line so a left-cluster deletion becomes a right-cluster one."""
    return (
        (-c_old[1], -c_old[0]),
        (-c_new[1], -c_new[0]),
        -a_star,
    )


def _sweep_candidate(pool: List[float], c1: float, boundary: float, c2: float, phase: str):
    """Pick the deletion that pushes the assignment boundary in the phase direction.

    Deleting above c2 or inside (c1, boundary] pushes the boundary left;
    deleting below c1 or inside (boundary, c2) pushes it right. Within the
    phase, the candidate farthest from its own cluster center moves it most.
    """
    right_push = [a for a in pool if a < c1 or boundary < a < c2]
    left_push = [a for a in pool if a > c2 or c1 <= a <= boundary]
    cand = right_push if phase == "R" else left_push
    if not cand:
        cand = left_push if phase == "R" else right_push
        phase = "L" if phase == "R" else "R"
    if not cand:
        return None, phase
    a = max(cand, key=lambda x: abs(x - (c1 if x <= boundary else c2)))
    return a, phase


def kmeans_attack_loop(
    mech: Mechanism,
    controlled: Sequence[float],
    n_initial: int,
    budget: Optional[int] = None,
) -> AttackOutcome:
    """Drive the cluster boundary across data points and isolate single jumpers.

    Each round deletes the controlled point that pushes the assignment
    boundary furthest in the current sweep direction (rightward phase
    first, then leftward), so the boundary crosses as many uncontrolled
    points as the budget allows. Consecutive center pairs feed the size
    inference - in the mirrored frame when the deletion came from the
    left cluster - and every unambiguous single jump (in either
    direction) yields an exactly isolated point. Runs to budget
    exhaustion; multi-jump rounds are recorded and skipped.
    """
    pool = sorted(float(a) for a in controlled)
    budget = len(pool) if budget is None else min(budget, len(pool))
    recovered: List[float] = []
    ambiguous_rounds: List[int] = []
    rounds: List[dict] = []
    n_before = n_initial
    deletions = 0
    phase = "R"

    for round_no in range(1, budget + 1):
        if not pool:
            break
        c_old = mech.last_release.value
        boundary = (c_old[0] + c_old[1]) / 2.0
        a_star, phase = _sweep_candidate(pool, c_old[0], boundary, c_old[1], phase)
        if a_star is None:
            a_star = pool[-1]
        pool.remove(a_star)
        mirrored = a_star <= boundary

        z = mech.delete(DeletionRequest(a_star, 1))
        deletions += 1
        c_new = z.value
        info = {"round": round_no, "a_star": a_star, "mirrored": mirrored, "c_old": c_old, "c_new": c_new}
        if mirrored:
            co, cn, ast = _mirror_frame(c_old, c_new, a_star)
        else:
            co, cn, ast = c_old, c_new, a_star
        try:
            sizes = kmeans_infer_sizes(co, cn, n_before, ast, allow_reverse=True)
        except (NoIntegerSolutionError, DegenerateCentersError) as exc:
            info["skipped"] = type(exc).__name__
            rounds.append(info)
            n_before -= 1
            continue
        info.update(m1_old=sizes.m1_old, p=sizes.p, ambiguous=sizes.ambiguous)
        if sizes.ambiguous:
            ambiguous_rounds.append(round_no)
        elif abs(sizes.p) == 1:
            point = sizes.p * kmeans_isolate_point(co[0], cn[0], sizes.m1_old, sizes.p)
            if mirrored:
                point = -point
            recovered.append(point)
            info["recovered"] = point
        rounds.append(info)
        n_before -= 1

    return AttackOutcome(
        recovered=recovered,
        deletions_used=deletions,
        success_metric=float(len(recovered)),
        ambiguous_rounds=ambiguous_rounds,
        rounds=rounds,
    )
