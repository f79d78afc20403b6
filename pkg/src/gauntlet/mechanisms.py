"""Curator mechanisms: retraining baselines, DP solvers, pathological maskers, clustering.

Every mechanism speaks the core Mechanism interface (init once, then one
release per deletion request) and is registered under a string id for
config/CLI selection. The stateless ones additionally expose a sim_seed:
the payload from which their whole transcript can be replayed given the
deleted values alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    DeletionRequest,
    Mechanism,
    Multiset,
    Release,
    STAR,
    exact_median,
    remove,
    star_count,
)
from .dp import (
    DeletionLedger,
    PrivacyParams,
    bin_value,
    build_range_structure,
    gaussian,
    laplace,
    median_search,
    snap_to_grid,
    RangeCountStructure,
)
from .errors import (
    DegenerateDataError,
    EmptyDatasetError,
    InvalidParamsError,
)
from .queries import BatchAnswer, CountingQueryFamily, eval_block


def countmod(T: Multiset) -> int:
    """Number of domain elements whose occurrence count is 2 mod 3 (stars ignored)."""
    return sum(1 for x, c in T.items() if not (x is STAR) and c % 3 == 2)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _clamp(v: int, lo: int, hi: int) -> int:
    return max(lo, min(hi, v))


@dataclass(frozen=True)
class BQParams:
    """Parameters of the batched-query task."""

    n: int
    t: int
    k: int
    privacy: PrivacyParams
    alpha: float = 0.0
    beta: float = 0.1

    def __post_init__(self):
        if self.n % self.t:
            raise InvalidParamsError(f"t={self.t} must divide n={self.n}")
        if self.k < 1:
            raise InvalidParamsError(f"k must be >= 1, got {self.k}")

    @property
    def num_blocks(self) -> int:
        return self.n // self.t


def bq_one_shot(
    T: Multiset,
    params: BQParams,
    family: CountingQueryFamily,
    rng: np.random.Generator,
    *,
    exact_mode: bool = False,
) -> BatchAnswer:
    """One-shot DP solver for the batched-query task.

    Picks the block index by adding Laplace(2/eps) noise to the star
    count (eps/2 of the budget), then answers that block's t queries on
    the star-free part with independent Gaussian noise of sigma =
    sqrt(16 t ln(1/delta)) / eps (the other eps/2, delta). The index is
    valid whenever the Laplace draw stays within k, which happens with
    probability at least 1 - beta/2 under the k >= (2/eps) ln(2/beta)
    hypothesis.
    """
    if family.n != params.n or family.t != params.t:
        raise InvalidParamsError("query family does not match BQ parameters")
    eps, delta = params.privacy.epsilon, params.privacy.delta
    if not exact_mode:
        if delta <= 0:
            raise InvalidParamsError("the Gaussian answer mechanism needs delta > 0")
        if params.k < (2.0 / eps) * math.log(2.0 / params.beta):
            raise InvalidParamsError(
                f"k={params.k} below (2/eps)ln(2/beta)={2.0 / eps * math.log(2.0 / params.beta):.3f}"
            )
    star = star_count(T)
    noise = 0.0 if exact_mode else laplace(2.0 / eps, rng)
    i_hat = _clamp(_round_half_up((star + noise) / (3.0 * params.k)), 1, params.num_blocks)
    stripped = Multiset({x: c for x, c in T.items() if x is not STAR}, n=params.n)
    exact = eval_block(family, i_hat, stripped)
    sigma = 0.0 if exact_mode else math.sqrt(16.0 * params.t * math.log(1.0 / delta)) / eps
    values = tuple(a + gaussian(sigma, rng) for a in exact)
    return BatchAnswer(i_hat, values)


class CountModRetrainer(Mechanism):
    """Perfect retraining for the mod-3 occurrence statistic."""

    mechanism_id = "countmod"

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        return self._mark_initialized(Release.scalar(countmod(dataset)))

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        z = Release.scalar(countmod(self.remaining))
        self.last_release = z
        return z


class BQContinualRetrainer(Mechanism):
    """Perfect retraining for the batched-query task.

    After every deletion batch it recounts the stars, picks the block
    index nearest star/(3k) (clamped), and answers that block's queries
    on the remaining star-free elements, optionally with fresh Gaussian
    noise per answer. Releases are the bare answer vectors; a deleting
    attacker already knows which block each round is forced to serve.
    """

    mechanism_id = "bq_retrainer"

    def __init__(self, n: int, t: int, k: int, noise_sigma: float = 0.0):
        super().__init__()
        self.params_n, self.params_t, self.params_k = n, t, k
        if n % t:
            raise InvalidParamsError(f"t={t} must divide n={n}")
        self.noise_sigma = noise_sigma
        self.family = CountingQueryFamily(n, t)

    def current_block_index(self) -> int:
        star = star_count(self.remaining)
        return _clamp(
            _round_half_up(star / (3.0 * self.params_k)), 1, self.params_n // self.params_t
        )

    def _answer(self) -> Release:
        i = self.current_block_index()
        stripped = Multiset(
            {x: c for x, c in self.remaining.items() if x is not STAR}, n=self.params_n
        )
        exact = eval_block(self.family, i, stripped)
        if self.noise_sigma > 0:
            values = tuple(a + gaussian(self.noise_sigma, self._rng) for a in exact)
        else:
            values = tuple(float(a) for a in exact)
        return Release.vector(values)

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        self._rng = rng
        return self._mark_initialized(self._answer())

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        z = self._answer()
        self.last_release = z
        return z

    def delete_batch(self, requests: List[DeletionRequest]) -> Release:
        # recompute once per batch, not once per request
        self._require_initialized()
        if not requests:
            raise ValueError("empty deletion batch")
        for req in requests:
            self.remaining = remove(self.remaining, req.element, req.multiplicity)
        z = self._answer()
        self.last_release = z
        return z


class DPSumMechanism(Mechanism):
    """Noisy initial sum, then exact subtraction of each deleted value.

    The transcript is a deterministic function of (z_0, deleted values):
    internal state is nothing but the last release, so the mechanism is
    stateless in the simulation sense. Inputs live in [0, 1], making the
    sum's sensitivity 1; the initial noise is Laplace(1/eps).
    """

    mechanism_id = "dp_sum"

    def __init__(self, epsilon: float = 1.0, exact_mode: bool = False):
        super().__init__()
        self.epsilon = epsilon
        self.exact_mode = exact_mode

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        total = math.fsum(x * c for x, c in sorted(dataset.items()))
        eta = 0.0 if self.exact_mode else snap_to_grid(laplace(1.0 / self.epsilon, rng))
        self._z = total + eta
        self._z0 = self._z
        return self._mark_initialized(Release.scalar(self._z))

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        self._z = self._z - request.element * request.multiplicity
        z = Release.scalar(self._z)
        self.last_release = z
        return z

    def sim_seed(self):
        return {"z0": self._z0}


class DPMedianMechanism(Mechanism):
    """Approximate median from a private range-count tree plus an exact deletion ledger.

    The tree is built once; every release is the smallest domain value
    whose noisy prefix count (minus deletions) reaches half the remaining
    size. The transcript is a deterministic function of (initial tree,
    deleted values), so deletions never add to the error the tree itself
    introduced.
    """

    mechanism_id = "dp_median"

    def __init__(self, bits: int = 8, epsilon: float = 1.0, exact_mode: bool = False):
        super().__init__()
        self.bits = bits
        self.epsilon = epsilon
        self.exact_mode = exact_mode

    def _search_release(self) -> Release:
        if self.n_remaining <= 0:
            raise EmptyDatasetError("dp median with no remaining elements")
        j = median_search(self.structure, self.ledger, self.n_remaining)
        return Release.scalar(bin_value(j, self.bits))

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        self.structure = build_range_structure(
            dataset, self.bits, self.epsilon, rng, exact_mode=self.exact_mode
        )
        self.ledger = DeletionLedger(self.bits)
        self.n_remaining = dataset.total_size
        return self._mark_initialized(self._search_release())

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        self.ledger.record(float(request.element), request.multiplicity)
        self.n_remaining -= request.multiplicity
        z = self._search_release()
        self.last_release = z
        return z

    def sim_seed(self):
        return {"structure": self.structure.to_dict(), "n0": len(self.remaining) + self.ledger.total}


class NaiveMedianMechanism(Mechanism):
    """Releases the exact median once and then ignores every deletion.

    Rank error after m <= k deletions is at most m, deterministically.
    """

    mechanism_id = "naive_median"

    def __init__(self, k: Optional[int] = None):
        super().__init__()
        self.k = k

    def init(self, dataset: Multiset, rng) -> Release:
        self._fixed = Release.scalar(float(exact_median(dataset)))
        return self._mark_initialized(self._fixed)

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.last_release = self._fixed
        return self._fixed

    def sim_seed(self):
        return {"z0": self._fixed.value}


class ExactMedianRetrainer(Mechanism):
    """Perfect retraining for the exact median; the canonical unsafe baseline."""

    mechanism_id = "exact_median"

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        return self._mark_initialized(Release.scalar(float(exact_median(dataset))))

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        z = Release.scalar(float(exact_median(self.remaining)))
        self.last_release = z
        return z


class XorMaskDeleted(Mechanism):
    """Variant 1 masker: random d-bit mask z, each deletion releases z XOR x.

    Every single release is uniform over d-bit vectors, yet consecutive
    releases give away the deleted value exactly.
    """

    mechanism_id = "xor1"

    def __init__(self, d: int = 8):
        super().__init__()
        self.d = d

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        self.z = int(rng.integers(0, 1 << self.d))
        return self._mark_initialized(Release.scalar(self.z))

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        z = Release.scalar(self.z ^ int(request.element))
        self.last_release = z
        return z

    def sim_seed(self):
        return {"z": self.z, "d": self.d}


class XorMaskUndeleted(Mechanism):
    """Variant 2 masker: each deletion releases z XOR y for a random remaining y."""

    mechanism_id = "xor2"

    def __init__(self, d: int = 8):
        super().__init__()
        self.d = d

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        self._rng = rng
        self.z = int(rng.integers(0, 1 << self.d))
        return self._mark_initialized(Release.scalar(self.z))

    def _sample_remaining(self) -> int:
        total = self.remaining.total_size
        if total == 0:
            raise EmptyDatasetError("no remaining points to sample")
        u = int(self._rng.integers(0, total))
        acc = 0
        for x, c in sorted(self.remaining.items()):
            acc += c
            if u < acc:
                return int(x)
        raise AssertionError("unreachable")

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        y = self._sample_remaining()
        z = Release.scalar(self.z ^ y)
        self.last_release = z
        return z


# Serializable predicate specs for the SQ framework. A spec is a tuple:
# ("const_one",) or ("bq_block", n, t, block_index).
PredicateSpec = Tuple


def build_predicates(specs: Sequence[PredicateSpec]) -> List[Callable]:
    fns: List[Callable] = []
    for spec in specs:
        kind = spec[0]
        if kind == "const_one":
            fns.append(lambda x: 1)
        elif kind == "bq_block":
            _, n, t, block = spec
            family = CountingQueryFamily(int(n), int(t))
            for j in family.block_queries(int(block)):
                fns.append(lambda x, row=family.table[j - 1]: int(row[x - 1]))
        else:
            raise InvalidParamsError(f"unknown predicate spec {spec!r}")
    return fns


class SQMechanism(Mechanism):
    """Noisy sufficient-statistic sums, maintained exactly under deletion.

    Each predicate sum gets independent Laplace(|C|/eps) noise at init;
    deleting x subtracts c(x) from every maintained sum. The release is
    the current sum vector (identity post-processing by default).
    """

    mechanism_id = "sq"

    def __init__(
        self,
        predicates: Sequence,
        epsilon: float = 1.0,
        exact_mode: bool = False,
        post_process: Optional[Callable] = None,
    ):
        super().__init__()
        self._specs: Optional[List[PredicateSpec]] = None
        if predicates and all(isinstance(p, tuple) for p in predicates):
            self._specs = [tuple(p) for p in predicates]
            self.predicates = build_predicates(self._specs)
        else:
            self.predicates = list(predicates)
        if not self.predicates:
            raise InvalidParamsError("SQ mechanism needs at least one predicate")
        self.epsilon = epsilon
        self.exact_mode = exact_mode
        self.post_process = post_process

    def _release(self) -> Release:
        if self.post_process is not None:
            return Release.scalar(self.post_process(self.sums))
        return Release.vector(self.sums)

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        scale = len(self.predicates) / self.epsilon
        self.sums = []
        for c_fn in self.predicates:
            exact = sum(c_fn(x) * cnt for x, cnt in sorted(dataset.items()))
            eta = 0.0 if self.exact_mode else snap_to_grid(laplace(scale, rng))
            self.sums.append(exact + eta)
        self._sums0 = tuple(self.sums)
        return self._mark_initialized(self._release())

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        x, m = request.element, request.multiplicity
        self.sums = [s - c_fn(x) * m for s, c_fn in zip(self.sums, self.predicates)]
        z = self._release()
        self.last_release = z
        return z

    def sim_seed(self):
        if self._specs is None:
            return None
        return {"sums": self._sums0, "predicates": [list(s) for s in self._specs]}


@dataclass(frozen=True)
class KMeansState:
    """Converged two-cluster state on the line."""

    c1: float
    c2: float
    m1: int
    m2: int

    @property
    def boundary(self) -> float:
        return (self.c1 + self.c2) / 2.0


def lloyd_2means_1d(values: Sequence[float]) -> KMeansState:
    """Two-means on the line by alternating assignment and mean updates.

    Starts from (min, max); points at the midpoint tie to cluster 1.
    Stops when the assignment no longer changes. Deterministic.
    """
    xs = sorted(float(v) for v in values)
    if len(xs) < 2:
        raise DegenerateDataError("need at least two points")
    if xs[0] == xs[-1]:
        raise DegenerateDataError("all points identical")
    prefix = [0.0]
    for v in xs:
        prefix.append(prefix[-1] + v)
    n = len(xs)

    c1, c2 = xs[0], xs[-1]
    m1_prev = -1
    for _ in range(10_000):
        boundary = (c1 + c2) / 2.0
        # count of points <= boundary; ties to cluster 1
        lo, hi = 0, n
        while lo < hi:
            mid = (lo + hi) // 2
            if xs[mid] <= boundary:
                lo = mid + 1
            else:
                hi = mid
        m1 = lo
        if m1 == 0 or m1 == n:
            raise DegenerateDataError("a cluster emptied out")
        if m1 == m1_prev:
            return KMeansState(c1, c2, m1, n - m1)
        m1_prev = m1
        c1 = prefix[m1] / m1
        c2 = (prefix[n] - prefix[m1]) / (n - m1)
    raise AssertionError("Lloyd iteration failed to converge")


class KMeansRetrainer(Mechanism):
    """Perfect retraining for 1-D two-means; releases centers only.

    Cluster sizes stay hidden: the whole deletion attack exists to infer
    them from consecutive center pairs.
    """

    mechanism_id = "kmeans"

    def init(self, dataset: Multiset, rng) -> Release:
        self.remaining = dataset
        state = lloyd_2means_1d(list(dataset.elements()))
        self._state = state
        return self._mark_initialized(Release.pair(state.c1, state.c2))

    def delete(self, request: DeletionRequest) -> Release:
        self._require_initialized()
        self.remaining = remove(self.remaining, request.element, request.multiplicity)
        state = lloyd_2means_1d(list(self.remaining.elements()))
        self._state = state
        z = Release.pair(state.c1, state.c2)
        self.last_release = z
        return z


MECHANISMS = {
    "dp_sum": lambda p: DPSumMechanism(epsilon=float(p.get("epsilon", 1.0))),
    "dp_median": lambda p: DPMedianMechanism(
        bits=int(p.get("bits", 8)), epsilon=float(p.get("epsilon", 1.0))
    ),
    "bq_retrainer": lambda p: BQContinualRetrainer(
        n=int(p["n"]), t=int(p["t"]), k=int(p["k"]), noise_sigma=float(p.get("noise_sigma", 0.0))
    ),
    "xor1": lambda p: XorMaskDeleted(d=int(p.get("d", 8))),
    "xor2": lambda p: XorMaskUndeleted(d=int(p.get("d", 8))),
    "sq": lambda p: SQMechanism(
        predicates=[tuple(s) for s in p["predicates"]], epsilon=float(p.get("epsilon", 1.0))
    ),
    "exact_median": lambda p: ExactMedianRetrainer(),
    "naive_median": lambda p: NaiveMedianMechanism(k=p.get("k")),
    "kmeans": lambda p: KMeansRetrainer(),
    "countmod": lambda p: CountModRetrainer(),
}


def make_mechanism(mech_id: str, params: dict) -> Mechanism:
    try:
        factory = MECHANISMS[mech_id]
    except KeyError:
        raise InvalidParamsError(f"unknown mechanism id {mech_id!r}") from None
    return factory(params or {})
