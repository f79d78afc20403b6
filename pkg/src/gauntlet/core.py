"""Datasets as exact multisets, deletion semantics, and the stateful-mechanism interface.

Everything downstream manipulates datasets through the types here: an
immutable integer-count multiset, per-request deletion records, tagged
release payloads, and the transcript of (initial release, per-deletion
releases) that the security games consume.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple

from .errors import EmptyDatasetError, UnderflowError


class _Star:
    """Distinguished padding symbol; exactly one instance exists."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "STAR"

    def __reduce__(self):
        return (_star_instance, ())


def _star_instance() -> "_Star":
    return STAR


STAR = _Star()


def _element_key(x) -> tuple:
    # Sort order for serialization: stars last, then by repr within type.
    return (isinstance(x, _Star), str(x))


class Multiset:
    """Immutable multiset with exact non-negative integer counts.

    Elements are arbitrary hashable values; the counting-query modules use
    integers in 1..n plus STAR, the median and clustering modules use real
    values. Counts of zero are never stored. If ``n`` is given, non-star
    elements must be integers in 1..n.
    """

    __slots__ = ("_counts", "n", "total_size")

    def __init__(self, counts: Optional[Dict[Any, int]] = None, n: Optional[int] = None):
        clean: Dict[Any, int] = {}
        total = 0
        for x, c in (counts or {}).items():
            if not isinstance(c, int) or c < 0:
                raise ValueError(f"count for {x!r} must be a non-negative int, got {c!r}")
            if c == 0:
                continue
            if n is not None and not isinstance(x, _Star):
                if not isinstance(x, int) or not (1 <= x <= n):
                    raise ValueError(f"element {x!r} outside 1..{n}")
            clean[x] = c
            total += c
        self._counts = clean
        self.n = n
        self.total_size = total

    @classmethod
    def from_iterable(cls, xs: Iterable, n: Optional[int] = None) -> "Multiset":
        counts: Dict[Any, int] = {}
        for x in xs:
            counts[x] = counts.get(x, 0) + 1
        return cls(counts, n=n)

    def count(self, x) -> int:
        return self._counts.get(x, 0)

    def support(self) -> List:
        return list(self._counts.keys())

    def items(self) -> List[Tuple[Any, int]]:
        return list(self._counts.items())

    def elements(self) -> Iterator:
        """Iterate elements with multiplicity."""
        for x, c in self._counts.items():
            for _ in range(c):
                yield x

    def union(self, other: "Multiset") -> "Multiset":
        counts = dict(self._counts)
        for x, c in other._counts.items():
            counts[x] = counts.get(x, 0) + c
        return Multiset(counts, n=self.n if self.n == other.n else None)

    def add(self, x, m: int = 1) -> "Multiset":
        counts = dict(self._counts)
        counts[x] = counts.get(x, 0) + m
        return Multiset(counts, n=self.n)

    def has_star(self) -> bool:
        return any(isinstance(x, _Star) for x in self._counts)

    def __contains__(self, x) -> bool:
        return x in self._counts

    def __len__(self) -> int:
        return self.total_size

    def __eq__(self, other) -> bool:
        return isinstance(other, Multiset) and self._counts == other._counts

    def __hash__(self):
        return hash(frozenset(self._counts.items()))

    def __repr__(self) -> str:
        inner = ", ".join(f"{x!r}: {c}" for x, c in sorted(self._counts.items(), key=lambda t: _element_key(t[0])))
        return f"Multiset({{{inner}}})"


@dataclass(frozen=True)
class DeletionRequest:
    """Request to delete ``multiplicity`` copies of ``element``."""

    element: Any
    multiplicity: int = 1

    def __post_init__(self):
        if self.multiplicity < 1:
            raise ValueError("multiplicity must be >= 1")

    def to_json(self) -> dict:
        elem = "star" if isinstance(self.element, _Star) else self.element
        return {"elem": elem, "mult": self.multiplicity}


def remove(T: Multiset, x, m: int = 1) -> Multiset:
    """Return T with m copies of x removed.

    Raises UnderflowError when fewer than m copies are present; a request
    for an element not in the dataset is rejected rather than ignored.
    """
    have = T.count(x)
    if have < m:
        raise UnderflowError(f"cannot delete {m} copies of {x!r}; only {have} present")
    counts = {y: c for y, c in T.items()}
    if have == m:
        del counts[x]
    else:
        counts[x] = have - m
    out = Multiset.__new__(Multiset)
    out._counts = counts
    out.n = T.n
    out.total_size = T.total_size - m
    return out


def star_count(T: Multiset) -> int:
    """Number of STAR symbols in T."""
    return T.count(STAR)


def exact_median(D: Multiset):
    """Exact median of a non-empty multiset over an ordered domain.

    With the elements sorted ascending x_1 <= ... <= x_n (1-indexed), this
    is x_{(n+1)/2} for odd n and x_{n/2} for even n.
    """
    n = D.total_size
    if n == 0:
        raise EmptyDatasetError("median of empty dataset")
    target = (n + 1) // 2
    acc = 0
    for x, c in sorted(D.items()):
        acc += c
        if acc >= target:
            return x
    raise AssertionError("unreachable: counts sum below target")


def rank_error(D: Multiset, z) -> int:
    """Number of elements of D strictly between z and the exact median.

    Counts multiplicity. A value equal to the median, or adjacent to it
    with nothing strictly between, scores 0.
    """
    m = exact_median(D)
    lo, hi = (z, m) if z <= m else (m, z)
    return sum(c for x, c in D.items() if lo < x < hi)


# Release payloads: one tagged union serves every mechanism, so a single
# transcript type can carry scalars (sums, medians, counts), vectors
# (query blocks, noisy statistic tables), center pairs, and structure
# handles (the serialized range-count tree).

KIND_SCALAR = "scalar"
KIND_VECTOR = "vector"
KIND_PAIR = "pair"
KIND_STRUCTURE = "structure"


@dataclass(frozen=True)
class Release:
    kind: str
    value: Any

    @classmethod
    def scalar(cls, v) -> "Release":
        return cls(KIND_SCALAR, float(v) if not isinstance(v, int) else v)

    @classmethod
    def vector(cls, vs) -> "Release":
        return cls(KIND_VECTOR, tuple(float(v) for v in vs))

    @classmethod
    def pair(cls, c1, c2) -> "Release":
        return cls(KIND_PAIR, (float(c1), float(c2)))

    @classmethod
    def structure(cls, payload: dict) -> "Release":
        return cls(KIND_STRUCTURE, payload)

    def to_json(self):
        if self.kind == KIND_SCALAR:
            return self.value
        if self.kind == KIND_VECTOR:
            return list(self.value)
        if self.kind == KIND_PAIR:
            return {"c1": self.value[0], "c2": self.value[1]}
        if self.kind == KIND_STRUCTURE:
            return {"structure": self.value}
        raise ValueError(f"unknown release kind {self.kind!r}")


@dataclass
class MechanismTranscript:
    """Initial release plus the ordered per-deletion releases."""

    initial: Release
    steps: List[Tuple[DeletionRequest, Release]] = field(default_factory=list)

    def releases(self) -> List[Release]:
        return [self.initial] + [z for _, z in self.steps]

    def deleted_values(self) -> List:
        out = []
        for req, _ in self.steps:
            out.extend([req.element] * req.multiplicity)
        return out

    def to_json(self) -> dict:
        return {
            "initial": self.initial.to_json(),
            "steps": [{"delete": req.to_json(), "release": z.to_json()} for req, z in self.steps],
        }

    def to_json_str(self) -> str:
        return canonical_json(self.to_json())


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class Mechanism:
    """Stateful curator: ``init`` once, then ``delete`` per request.

    Each delete logically removes the requested copies from the
    mechanism's current dataset and returns the updated release.
    Instances are single-owner state machines; run one per game trial.
    """

    #: registry id, set by subclasses
    mechanism_id: str = ""

    def __init__(self):
        self.last_release: Optional[Release] = None
        self._initialized = False

    def init(self, dataset: Multiset, rng) -> Release:
        raise NotImplementedError

    def delete(self, request: DeletionRequest) -> Release:
        raise NotImplementedError

    def delete_batch(self, requests: List[DeletionRequest]) -> Release:
        """Serve a batch as one round; only the final release is published."""
        if not requests:
            raise ValueError("empty deletion batch")
        z = None
        for req in requests:
            z = self.delete(req)
        return z

    def sim_seed(self):
        """Payload that, with the deleted values, determines the transcript.

        Only stateless mechanisms provide one; others return None.
        """
        return None

    def _mark_initialized(self, release: Release) -> Release:
        self._initialized = True
        self.last_release = release
        return release

    def _require_initialized(self):
        if not self._initialized:
            raise RuntimeError(f"{type(self).__name__}.delete called before init")
