"""Traces of matrix powers and their split into chaos and remainder parts.

For the scaled matrix X_N and k >= 2,

    Tr(X_N^k) - E Tr(X_N^k) = J_N(k) + R_N(k),

where J_N(k) sums the cyclic products over D_N^(k) (all k cyclic pairs
distinct) and R_N(k) sums the centered products over the complement.  For
k = 1 the chaos part is the diagonal statistic and the remainder vanishes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .chain_combinatorics import cyclic_site_codes, enumerate_d, iter_index_tuples
from .ensemble import EntryDistribution, ScaledMatrix
from .errors import check_budget
from .moment_oracle import exact_expected_trace

__all__ = [
    "TraceFluctuation",
    "trace_power",
    "trace_powers",
    "trace_power_indexsum",
    "chaos_component",
    "diagonal_sum",
    "remainder_component",
    "expected_trace",
    "decompose",
]


def _values(matrix) -> np.ndarray:
    if isinstance(matrix, ScaledMatrix):
        return matrix.values
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    return a


def trace_power(matrix, k: int) -> float:
    """Tr(A^k) by repeated dense products."""
    if k < 1:
        raise ValueError("k must be >= 1")
    a = _values(matrix)
    if k == 1:
        return float(np.trace(a))
    p = a
    for _ in range(k - 2):
        p = p @ a
    # Tr(P A) without forming the last product
    return float(np.sum(p * a.T))


def trace_powers(matrix, orders) -> dict[int, float]:
    """Tr(A^k) for several k sharing one chain of products."""
    orders = sorted(set(int(k) for k in orders))
    if not orders or orders[0] < 1:
        raise ValueError("orders must be >= 1")
    a = _values(matrix)
    kmax = orders[-1]
    out = {}
    p = a
    for k in range(1, kmax):
        if k > 1:
            p = p @ a
        if k in orders:
            out[k] = float(np.trace(p))
    out[kmax] = float(np.trace(a)) if kmax == 1 else float(np.sum(p * a.T))
    return out


def _raw(array, N: int) -> np.ndarray:
    if N < 1:
        raise ValueError("N must be >= 1")
    return array.raw_block(N)


def _cyclic_products(raw: np.ndarray, tuples: np.ndarray) -> np.ndarray:
    nxt = np.roll(tuples, -1, axis=1)
    return np.prod(raw[tuples, nxt], axis=1)


def trace_power_indexsum(array, N: int, k: int, budget: int | None = None) -> float:
    """N^{-k/2} times the sum of cyclic entry products over all of [N]^k."""
    if k < 1:
        raise ValueError("k must be >= 1")
    check_budget(N**k, budget, f"index sum over [{N}]^{k}")
    raw = _raw(array, N)
    partial = [math.fsum(_cyclic_products(raw, t)) for t in iter_index_tuples(N, k)]
    return math.fsum(partial) / N ** (k / 2)


@lru_cache(maxsize=128)
def _d_array(N: int, k: int) -> np.ndarray:
    d = np.array(enumerate_d(N, k), dtype=np.int64).reshape(-1, k) - 1
    d.setflags(write=False)
    return d


def chaos_component(array, N: int, k: int, budget: int | None = None) -> float:
    """J_N(k): scaled sum of cyclic products over D_N^(k)."""
    if k < 2:
        raise ValueError("chaos_component needs k >= 2; use diagonal_sum for k = 1")
    check_budget(N**k, budget, f"D_{N}^({k}) enumeration")
    raw = _raw(array, N)
    d = _d_array(N, k)
    if len(d) == 0:
        return 0.0
    return math.fsum(_cyclic_products(raw, d)) / N ** (k / 2)


def diagonal_sum(array, N: int) -> float:
    """N^{-1/2} times the sum of the raw diagonal entries."""
    raw = _raw(array, N)
    return math.fsum(np.diag(raw)) / math.sqrt(N)


@lru_cache(maxsize=512)
def _expected_numerator(N: int, k: int, dist: EntryDistribution) -> float:
    return float(exact_expected_trace(N, k, dist).numerator)


def expected_trace(N: int, k: int, dist: EntryDistribution) -> float:
    """E Tr(X_N^k) from the exact oracle, as a float."""
    return _expected_numerator(N, k, dist) / N ** (k / 2)


def _dist_of(array, dist):
    dist = dist if dist is not None else getattr(array, "dist", None)
    if dist is None:
        raise ValueError("an entry distribution is needed for exact centering")
    return dist


def remainder_component(array, N: int, k: int, dist: EntryDistribution | None = None,
                        budget: int | None = None) -> float:
    """R_N(k): scaled centered cyclic products over index vectors outside D_N^(k)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k == 1:
        return 0.0
    dist = _dist_of(array, dist)
    check_budget(N**k, budget, f"index sum over [{N}]^{k}")
    raw = _raw(array, N)
    partial = []
    for t in iter_index_tuples(N, k):
        codes = np.sort(cyclic_site_codes(t, N), axis=1)
        repeated = np.any(codes[:, 1:] == codes[:, :-1], axis=1)
        if repeated.any():
            partial.append(math.fsum(_cyclic_products(raw, t[repeated])))
    # every vector in D has a singleton block, so its expectation is 0 and the
    # full expected numerator is the complement's centering
    centering = _expected_numerator(N, k, dist)
    return (math.fsum(partial) - centering) / N ** (k / 2)


@dataclass(frozen=True)
class TraceFluctuation:
    N: int
    k: int
    total: float
    chaos_part: float
    remainder: float
    expected: float

    @property
    def defect(self) -> float:
        """total - (chaos_part + remainder)."""
        return self.total - (self.chaos_part + self.remainder)


def decompose(array, N: int, k: int, dist: EntryDistribution | None = None,
              budget: int | None = None) -> TraceFluctuation:
    """Centered trace together with its chaos and remainder parts."""
    dist = _dist_of(array, dist)
    mean = expected_trace(N, k, dist)
    total = trace_power(ScaledMatrix(N, _raw(array, N)), k) - mean
    if k == 1:
        return TraceFluctuation(N, k, total, diagonal_sum(array, N), 0.0, mean)
    return TraceFluctuation(N, k, total, chaos_component(array, N, k, budget),
                            remainder_component(array, N, k, dist, budget), mean)
