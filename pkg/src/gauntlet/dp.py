"""Differential-privacy noise primitives and the private range-count structure.

The range-count structure is a complete binary interval tree over 2^L bins
of [0, 1]; every node carries its exact subtree count plus independent
Laplace(L/eps) noise (budget eps/L per level, eps total by composition
across levels). Deletions never touch the tree: an exact per-bin ledger is
subtracted at query time, so the noise contribution of any fixed range is
constant across a whole deletion transcript.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from .errors import (
    DomainOverflowError,
    InvalidRangeError,
    InvalidScaleError,
)

# Noise values are snapped to this absolute grid before they enter any
# released quantity. All dataset statistics here are integers (counts) or
# coarse dyadics, so with grid-aligned noise every release and every
# ledger subtraction is exact in double precision: transcript deltas are
# exact integers, with no last-ulp drift. The perturbation (<= 2^-21) is
# irrelevant at noise scales of order L/eps.
GRID_BITS = 20
_GRID = float(1 << GRID_BITS)


def snap_to_grid(x: float) -> float:
    return round(x * _GRID) / _GRID


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not (self.epsilon > 0):
            raise InvalidScaleError(f"epsilon must be positive, got {self.epsilon}")
        if not (0 <= self.delta < 1):
            raise InvalidScaleError(f"delta must lie in [0, 1), got {self.delta}")


def laplace(b: float, rng: np.random.Generator, *, zero_ok: bool = False) -> float:
    """One draw from the Laplace distribution with scale b.

    Scale 0 (the zero-noise limit) is only allowed when zero_ok is set; it
    returns exactly 0.0.
    """
    if b < 0 or (b == 0 and not zero_ok):
        raise InvalidScaleError(f"laplace scale must be positive, got {b}")
    if b == 0:
        return 0.0
    return float(rng.laplace(0.0, b))


def gaussian(sigma: float, rng: np.random.Generator) -> float:
    """One draw from N(0, sigma^2); sigma = 0 returns exactly 0.0."""
    if sigma < 0:
        raise InvalidScaleError(f"gaussian sigma must be non-negative, got {sigma}")
    if sigma == 0:
        return 0.0
    return float(rng.normal(0.0, sigma))


def bin_of(x: float, bits: int) -> int:
    """Bin index of a value in [0, 1] over 2^bits bins.

    Bins are left-open, right-closed except bin 0, so every exact grid
    point j/2^bits (j >= 1) lands in the bin whose representative value
    is itself.
    """
    if x < 0.0 or x > 1.0:
        raise DomainOverflowError(f"value {x} outside [0, 1]")
    return max(0, math.ceil(x * (1 << bits)) - 1)


def bin_value(j: int, bits: int) -> float:
    """Representative (right-edge) value of bin j."""
    return (j + 1) / (1 << bits)


class DeletionLedger:
    """Exact per-bin counts of deleted elements."""

    def __init__(self, bits: int):
        self.bits = bits
        self.counts = [0] * (1 << bits)
        self.total = 0

    def record(self, x: float, m: int = 1) -> None:
        self.counts[bin_of(x, self.bits)] += m
        self.total += m

    def range_total(self, lo_bin: int, hi_bin: int) -> int:
        return sum(self.counts[lo_bin : hi_bin + 1])

    def copy(self) -> "DeletionLedger":
        out = DeletionLedger(self.bits)
        out.counts = list(self.counts)
        out.total = self.total
        return out


class RangeCountStructure:
    """Noisy interval tree: 2^(L+1) - 1 nodes in level order.

    Exact counts are discarded after the build; only the noisy values
    remain. Immutable once built.
    """

    def __init__(self, bits: int, epsilon: float, nodes: Tuple[float, ...]):
        if len(nodes) != (1 << (bits + 1)) - 1:
            raise ValueError("node array does not match tree size")
        self.bits = bits
        self.epsilon = epsilon
        self.nodes = tuple(nodes)

    @property
    def per_level_epsilon(self) -> float:
        return self.epsilon / self.bits

    def to_dict(self) -> dict:
        return {"bits": self.bits, "epsilon": self.epsilon, "nodes": list(self.nodes)}

    @classmethod
    def from_dict(cls, d: dict) -> "RangeCountStructure":
        return cls(int(d["bits"]), float(d["epsilon"]), tuple(d["nodes"]))

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, RangeCountStructure)
            and self.bits == other.bits
            and self.epsilon == other.epsilon
            and self.nodes == other.nodes
        )


def build_range_structure(
    D,
    bits: int,
    eps: float,
    rng: Optional[np.random.Generator],
    *,
    exact_mode: bool = False,
) -> RangeCountStructure:
    """Build the noisy interval tree over the dataset's [0, 1] values.

    D is a Multiset of reals in [0, 1]; each of the L+1 ... levels shares
    the eps/L per-level budget. exact_mode skips the noise entirely and is
    a test-only flag.
    """
    if not exact_mode and not (eps > 0):
        raise InvalidScaleError(f"epsilon must be positive, got {eps}")
    n_leaves = 1 << bits
    leaf_counts = [0] * n_leaves
    for x, c in D.items():
        leaf_counts[bin_of(float(x), bits)] += c

    size = (1 << (bits + 1)) - 1
    exact = [0] * size
    first_leaf = n_leaves - 1
    for j, c in enumerate(leaf_counts):
        exact[first_leaf + j] = c
    for i in range(first_leaf - 1, -1, -1):
        exact[i] = exact[2 * i + 1] + exact[2 * i + 2]

    if exact_mode:
        noisy = [float(c) for c in exact]
    else:
        scale = bits / eps
        noisy = [c + snap_to_grid(laplace(scale, rng)) for c in exact]
    return RangeCountStructure(bits, eps if not exact_mode else math.inf, tuple(noisy))


def _decompose(bits: int, lo: int, hi: int) -> List[int]:
    """Canonical dyadic decomposition of the bin range [lo, hi].

    Maximal aligned nodes, listed left to right; at most 2L contribute.
    """
    out: List[int] = []
    stack = [(0, 0, (1 << bits) - 1)]
    while stack:
        idx, node_lo, node_hi = stack.pop()
        if hi < node_lo or node_hi < lo:
            continue
        if lo <= node_lo and node_hi <= hi:
            out.append(idx)
            continue
        mid = (node_lo + node_hi) // 2
        # push right first so the left child is processed first
        stack.append((2 * idx + 2, mid + 1, node_hi))
        stack.append((2 * idx + 1, node_lo, mid))
    return out


def range_query(
    P: RangeCountStructure,
    ledger: Optional[DeletionLedger],
    a: float,
    b: float,
) -> float:
    """Estimate of the remaining count in [a, b]: noisy tree minus ledger."""
    if a > b:
        raise InvalidRangeError(f"range [{a}, {b}] has a > b")
    lo = bin_of(a, P.bits)
    hi = bin_of(b, P.bits)
    total = 0.0
    for idx in _decompose(P.bits, lo, hi):
        total += P.nodes[idx]
    if ledger is not None:
        total -= ledger.range_total(lo, hi)
    return total


def prefix_query(P: RangeCountStructure, ledger: Optional[DeletionLedger], hi_bin: int) -> float:
    """Remaining-count estimate for bins [0, hi_bin]."""
    total = 0.0
    for idx in _decompose(P.bits, 0, hi_bin):
        total += P.nodes[idx]
    if ledger is not None:
        total -= ledger.range_total(0, hi_bin)
    return total


def median_search(P: RangeCountStructure, ledger: Optional[DeletionLedger], n_remaining: int) -> int:
    """Bin of the smallest value whose noisy prefix count reaches n/2.

    Root-to-leaf descent accumulating left-sibling node values; the
    accumulation order matches prefix_query's decomposition order, so the
    two agree bit-for-bit on every prefix they both evaluate.
    """
    tau = n_remaining / 2
    idx, node_lo, node_hi = 0, 0, (1 << P.bits) - 1
    acc = 0.0
    while node_lo < node_hi:
        mid = (node_lo + node_hi) // 2
        left = 2 * idx + 1
        prefix_if_left = acc + P.nodes[left]
        deleted = ledger.range_total(0, mid) if ledger is not None else 0
        if prefix_if_left - deleted >= tau:
            idx, node_hi = left, mid
        else:
            acc = prefix_if_left
            idx, node_lo = 2 * idx + 2, mid + 1
    return node_lo
