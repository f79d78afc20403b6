"""Fixed counting-query family, valid-index arithmetic, and reconstruction decoding.

The family is the n x n Walsh-Hadamard matrix in {0,1} form: query j on
element i is (1 + H[j,i]) / 2 with H the Sylvester-ordered +-1 matrix, so
row 1 is the all-ones query and distinct rows are orthogonal in the +-1
representation. Approximate answers to all n queries are decoded back to
a subset of [n] by the inverse transform; an exhaustive least-squares
decoder over all subsets serves as the independent oracle at small n.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Set, Tuple

import numpy as np

from .core import Multiset
from .errors import LengthMismatchError, StarPresentError, TooLargeError


def _sylvester(n: int) -> np.ndarray:
    if n & (n - 1):
        raise ValueError(f"domain size must be a power of two, got {n}")
    H = np.ones((1, 1), dtype=np.int64)
    while H.shape[0] < n:
        H = np.block([[H, H], [H, -H]])
    return H


class CountingQueryFamily:
    """The n fixed counting queries, with block structure of width t."""

    def __init__(self, n: int, t: int):
        if n < 1 or n & (n - 1):
            raise ValueError(f"n must be a power of two, got {n}")
        if t < 1 or n % t:
            raise ValueError(f"block width {t} must divide n={n}")
        self.n = n
        self.t = t
        self.hadamard = _sylvester(n)
        # {0,1} query table: row j-1, column i-1 = q_j(i)
        self.table = (1 + self.hadamard) // 2

    @property
    def num_blocks(self) -> int:
        return self.n // self.t

    def matrix_row(self, j: int) -> np.ndarray:
        """Query j as a {0,1} vector over the domain (1-indexed j)."""
        return self.table[j - 1]

    def block_queries(self, i: int) -> range:
        """Query indices (i-1)t+1 .. it of block i."""
        return range((i - 1) * self.t + 1, i * self.t + 1)


@dataclass(frozen=True)
class BatchAnswer:
    """Answers to one block of t queries."""

    block_index: int
    values: Tuple[float, ...]


def _counts_vector(D: Multiset, n: int) -> np.ndarray:
    counts = np.zeros(n, dtype=np.int64)
    for x, c in D.items():
        if not isinstance(x, int):
            raise StarPresentError(f"counting queries need elements of [n]; got {x!r}")
        counts[x - 1] = c
    return counts


def eval_query(family: CountingQueryFamily, j: int, D: Multiset) -> int:
    """q_j(D) = sum over elements x of D (with multiplicity) of q_j(x)."""
    if D.has_star():
        raise StarPresentError("dataset contains the star symbol")
    counts = _counts_vector(D, family.n)
    return int(family.table[j - 1] @ counts)


def eval_block(family: CountingQueryFamily, i: int, D: Multiset) -> Tuple[int, ...]:
    """Exact answers to all t queries of block i."""
    if D.has_star():
        raise StarPresentError("dataset contains the star symbol")
    counts = _counts_vector(D, family.n)
    rows = family.table[(i - 1) * family.t : i * family.t]
    return tuple(int(v) for v in rows @ counts)


def valid_index_range(star: int, k: int, num_blocks: int) -> Tuple[int, int]:
    """Allowed block indices for a dataset with the given star count.

    Returns the inclusive interval [ceil((star-k)/3k), floor((star+k)/3k)]
    intersected with [1, num_blocks]; (lo, hi) with lo > hi means empty.
    The raw interval has width 2/3, so it never holds more than one
    integer, and it can be empty outright.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    lo = -((-(star - k)) // (3 * k))  # ceil
    hi = (star + k) // (3 * k)  # floor
    lo = max(lo, 1)
    hi = min(hi, num_blocks)
    return lo, hi


def fwht(v: np.ndarray) -> np.ndarray:
    """In-place-style fast Walsh-Hadamard transform (Sylvester order)."""
    a = np.array(v, dtype=np.float64)
    h = 1
    n = a.shape[0]
    while h < n:
        a = a.reshape(-1, 2 * h)
        lo = a[:, :h].copy()
        hi = a[:, h:].copy()
        a[:, :h] = lo + hi
        a[:, h:] = lo - hi
        a = a.reshape(n)
        h *= 2
    return a


def reconstruct(answers: Sequence[float], n: int) -> Set[int]:
    """Decode approximate query answers into an estimated subset of [n].

    Converts to +-1 coefficient estimates via c_j = 2*answers[j] -
    answers[1] (the all-ones query doubles as the size estimate), inverts
    the transform, and rounds each coordinate at threshold 1/2 with ties
    to 0. If the per-query coefficient errors carry total energy E, at
    most 4E/n coordinates can flip (Parseval plus the rounding margin).
    """
    if len(answers) != n:
        raise LengthMismatchError(f"expected {n} answers, got {len(answers)}")
    a = np.asarray(answers, dtype=np.float64)
    coeffs = 2.0 * a - a[0]
    raw = fwht(coeffs) / n
    return {i + 1 for i in range(n) if raw[i] > 0.5}


def _all_subsets_lex(n: int) -> np.ndarray:
    """All indicator vectors over [n], ordered lexicographically.

    Row s has d_i = bit (n - i) of s, so row order equals lex order on
    the tuples (d_1, ..., d_n).
    """
    s = np.arange(1 << n, dtype=np.int64)[:, None]
    shifts = n - 1 - np.arange(n, dtype=np.int64)[None, :]
    return ((s >> shifts) & 1).astype(np.float64)


def brute_force_reconstruct(answers: Sequence[float], n: int) -> Set[int]:
    """Exhaustive least-squares decoder; the independent oracle for reconstruct.

    Minimizes sum_j (answers[j] - q_j(S))^2 over every S in 2^[n]; ties go
    to the lexicographically smallest indicator. Limited to n <= 16.
    """
    if n > 16:
        raise TooLargeError(f"exhaustive search capped at n=16, got {n}")
    if len(answers) != n:
        raise LengthMismatchError(f"expected {n} answers, got {len(answers)}")
    a = np.asarray(answers, dtype=np.float64)
    H = _sylvester(n).astype(np.float64)
    S = _all_subsets_lex(n)
    # q_j(S) = (|S| + (H s)_j) / 2 for every candidate s at once
    q = (S.sum(axis=1, keepdims=True) + S @ H.T) / 2.0
    costs = ((q - a[None, :]) ** 2).sum(axis=1)
    best = int(np.argmin(costs))  # argmin returns the first, i.e. lex-smallest
    return {i + 1 for i in range(n) if (best >> (n - 1 - i)) & 1}


def coefficient_error_energy(answers: Sequence[float], true_set: Set[int], n: int) -> float:
    """Total squared error of the +-1 coefficient estimates for a known set.

    Test-side helper: feeds the decoder guarantee |D symdiff Dhat| <= 4E/n.
    """
    a = np.asarray(answers, dtype=np.float64)
    d = np.zeros(n)
    for i in true_set:
        d[i - 1] = 1.0
    truth = fwht(d)
    coeffs = 2.0 * a - a[0]
    return float(((coeffs - truth) ** 2).sum())
