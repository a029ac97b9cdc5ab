"""Exact trace moments by counting cyclic-pair patterns.

Pattern counts |A_N(pi)| are polynomials in N (of degree at most k); they are
interpolated exactly from brute-force counts at N = 1..k+1 and re-checked at
N = k+2 before use.  Values carrying the irrational factor N^{-k/2} are
returned as :class:`ScaledValue` so that the rational part stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .chain_combinatorics import (
    Partition,
    cyclic_pairs,
    enumerate_d,
    joint_pattern_counts,
    partitions,
    pattern_counts,
)
from .ensemble import EntryDistribution
from .errors import BudgetExceededError, check_budget

__all__ = [
    "PolynomialCheckError",
    "MomentPolynomial",
    "PatternKey",
    "ScaledValue",
    "interpolate",
    "brute_pattern_count",
    "pattern_polynomial",
    "pattern_polynomials",
    "joint_pattern_polynomials",
    "exact_expected_trace",
    "exact_fluct_covariance",
    "exact_chaos_variance",
    "exact_chaos_cross",
    "intersection_histogram",
]

PatternKey = Partition


class PolynomialCheckError(AssertionError):
    """Interpolated pattern polynomial disagrees with brute force at the check node."""


@dataclass(frozen=True)
class MomentPolynomial:
    """Polynomial in N with exact rational coefficients (lowest degree first)."""

    coefficients: tuple[Fraction, ...]
    provenance: str = ""

    def __post_init__(self):
        coeffs = [Fraction(c) for c in self.coefficients]
        while len(coeffs) > 1 and coeffs[-1] == 0:
            coeffs.pop()
        object.__setattr__(self, "coefficients", tuple(coeffs) or (Fraction(0),))

    @property
    def degree(self) -> int:
        if len(self.coefficients) == 1 and self.coefficients[0] == 0:
            return -1
        return len(self.coefficients) - 1

    def __call__(self, N) -> Fraction:
        acc = Fraction(0)
        for c in reversed(self.coefficients):
            acc = acc * N + c
        return acc

    def to_dict(self) -> dict:
        return {"provenance": self.provenance, "degree": self.degree,
                "coefficients": [str(c) for c in self.coefficients]}

    def __str__(self) -> str:
        terms = [f"{c}*N^{p}" for p, c in enumerate(self.coefficients) if c]
        return " + ".join(reversed(terms)) or "0"


def _poly_mul(a: list[Fraction], b: list[Fraction]) -> list[Fraction]:
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def interpolate(xs: Sequence[int], ys: Sequence, provenance: str = "") -> MomentPolynomial:
    """Exact Lagrange interpolation through the points (xs[i], ys[i])."""
    if len(set(xs)) != len(xs):
        raise ValueError("interpolation nodes must be distinct")
    total = [Fraction(0)] * len(xs)
    for i, (xi, yi) in enumerate(zip(xs, ys)):
        if yi == 0:
            continue
        basis = [Fraction(1)]
        denom = Fraction(1)
        for j, xj in enumerate(xs):
            if j != i:
                basis = _poly_mul(basis, [Fraction(-xj), Fraction(1)])
                denom *= xi - xj
        scale = Fraction(yi) / denom
        for p, c in enumerate(basis):
            total[p] += c * scale
    return MomentPolynomial(tuple(total), provenance)


# -- pattern counts ----------------------------------------------------------


def brute_pattern_count(pi: Partition, N: int, budget: int | None = None) -> int:
    """|A_N(pi)| by exhaustive enumeration of [N]^k."""
    return pattern_counts(pi.k, N, budget).get(pi, 0)


def _polys_from_counts(K: int, count_at, label: str) -> dict[Partition, MomentPolynomial]:
    nodes = list(range(1, K + 2))
    tables = [count_at(N) for N in nodes]
    check_N = K + 2
    check = count_at(check_N)
    keys = set(check)
    for t in tables:
        keys |= set(t)
    out = {}
    for pi in sorted(keys):
        poly = interpolate(nodes, [t.get(pi, 0) for t in tables], f"{label} {pi}")
        if poly(check_N) != check.get(pi, 0):
            raise PolynomialCheckError(
                f"{label} {pi}: interpolant gives {poly(check_N)} at N={check_N}, "
                f"brute force gives {check.get(pi, 0)}")
        if poly.degree > K:
            raise PolynomialCheckError(f"{label} {pi}: degree {poly.degree} exceeds {K}")
        out[pi] = poly
    return out


@lru_cache(maxsize=32)
def _pattern_polys(k: int) -> dict[Partition, MomentPolynomial]:
    return _polys_from_counts(k, lambda N: pattern_counts(k, N), "|A_N|")


def pattern_polynomials(k: int, max_k: int = 5) -> dict[Partition, MomentPolynomial]:
    """|A_N(pi)| as polynomials in N for every pi in P(k)."""
    if k > max_k:
        raise BudgetExceededError(f"pattern polynomials for k={k} exceed max_k={max_k}")
    polys = dict(_pattern_polys(k))
    for pi in partitions(k, max_k=max(6, k)):
        polys.setdefault(pi, MomentPolynomial((Fraction(0),), f"|A_N| {pi}"))
    return polys


def pattern_polynomial(pi: Partition, max_k: int = 5) -> MomentPolynomial:
    return pattern_polynomials(pi.k, max_k)[pi]


@lru_cache(maxsize=32)
def _joint_polys(k1: int, k2: int) -> dict[Partition, MomentPolynomial]:
    return _polys_from_counts(k1 + k2, lambda N: joint_pattern_counts(k1, k2, N), f"joint({k1},{k2})")


def joint_pattern_polynomials(k1: int, k2: int, max_total: int = 7) -> dict[Partition, MomentPolynomial]:
    """Counts of (i, j) by joint pattern of their k1 + k2 cyclic pairs, as polynomials in N."""
    if k1 + k2 > max_total:
        raise BudgetExceededError(f"joint polynomials for k1+k2={k1 + k2} exceed {max_total}")
    return dict(_joint_polys(k1, k2))


# -- exact statistics --------------------------------------------------------


@dataclass(frozen=True)
class ScaledValue:
    """``numerator * N^(-halves/2)`` with an exact rational numerator."""

    statistic: str
    k: object
    N: int
    numerator: Fraction
    halves: int

    @property
    def value(self) -> float:
        return float(self.numerator) / self.N ** (self.halves / 2)

    def exact(self) -> Fraction:
        """The value as a rational; only defined for an even scale exponent."""
        if self.halves % 2:
            if self.numerator == 0:
                return Fraction(0)
            raise ValueError("odd half-integer scale has no exact rational value")
        return self.numerator / Fraction(self.N) ** (self.halves // 2)

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "k": self.k, "N": self.N,
                "numerator": str(self.numerator), "scale_exponent_halves": -self.halves}


def _block_moment(sizes, dist: EntryDistribution) -> Fraction:
    out = Fraction(1)
    for s in sizes:
        out *= dist.moment(s)
        if out == 0:
            return out
    return out


def exact_expected_trace(N: int, k: int, dist: EntryDistribution) -> ScaledValue:
    """E[Tr X_N^k] = N^{-k/2} sum_pi |A_N(pi)| prod_B mu_|B|."""
    polys = pattern_polynomials(k, max_k=max(5, k))
    num = sum((poly(N) * _block_moment(pi.sizes, dist) for pi, poly in polys.items() if poly(N)),
              Fraction(0))
    return ScaledValue("expected_trace", k, N, num, k)


def _covariance_weight(pi: Partition, k1: int, dist: EntryDistribution) -> Fraction:
    upper = pi.restrict(range(1, k1 + 1))
    lower = pi.restrict(range(k1 + 1, pi.k + 1))
    return _block_moment(pi.sizes, dist) - _block_moment(upper.sizes, dist) * _block_moment(lower.sizes, dist)


def exact_fluct_covariance(N: int, k1: int, k2: int, dist: EntryDistribution,
                           max_total: int = 7, budget: int | None = None) -> ScaledValue:
    """Cov(Tr X_N^k1, Tr X_N^k2), exact, via joint cyclic-pair patterns."""
    K = k1 + k2
    if K <= max_total:
        counts = {pi: poly(N) for pi, poly in joint_pattern_polynomials(k1, k2, max_total).items()}
    else:
        counts = joint_pattern_counts(k1, k2, N, budget)
    num = Fraction(0)
    for pi, c in counts.items():
        if c:
            num += c * _covariance_weight(pi, k1, dist)
    return ScaledValue("fluct_covariance", [k1, k2], N, num, K)


def _site_masks(N: int, k: int) -> np.ndarray:
    vecs = enumerate_d(N, k)
    masks = np.zeros(len(vecs), dtype=np.uint64)
    for idx, v in enumerate(vecs):
        m = 0
        for a, b in cyclic_pairs(v):
            m |= 1 << ((a - 1) * N + (b - 1))
        masks[idx] = m
    return masks


def intersection_histogram(N: int, k1: int, k2: int, budget: int | None = None) -> dict[int, int]:
    """Number of pairs (i, j) in D_N^(k1) x D_N^(k2) by the size of their common site set."""
    if N * N > 64:
        raise BudgetExceededError("site bitmasks support N <= 8")
    m1, m2 = _site_masks(N, k1), _site_masks(N, k2)
    check_budget(len(m1) * len(m2), budget, "D x D intersection histogram")
    hist = np.zeros(min(k1, k2) + 1, dtype=np.int64)
    step = max(1, (1 << 22) // max(1, len(m2)))
    for start in range(0, len(m1), step):
        inter = np.bitwise_count(m1[start:start + step, None] & m2[None, :])
        hist += np.bincount(inter.ravel(), minlength=len(hist))
    return {c: int(h) for c, h in enumerate(hist) if h}


def _matched_count(N: int, k: int) -> int:
    groups: dict[frozenset, int] = {}
    for v in enumerate_d(N, k):
        key = frozenset(cyclic_pairs(v))
        groups[key] = groups.get(key, 0) + 1
    return sum(c * c for c in groups.values())


def exact_chaos_cross(N: int, k1: int, k2: int, dist: EntryDistribution | None = None,
                      budget: int | None = None) -> ScaledValue:
    """E[J_N(k1) J_N(k2)] from the site-intersection histogram of D x D.

    A shared site carries mu_2, an unshared one mu_1; ``dist`` selects the
    moment table (any centered unit-variance law gives the same answer).
    """
    mu1 = Fraction(0) if dist is None else dist.moment(1)
    mu2 = Fraction(1) if dist is None else dist.moment(2)
    if N * N <= 64:
        hist = intersection_histogram(N, k1, k2, budget)
        num = sum((h * mu1 ** (k1 + k2 - 2 * c) * mu2**c for c, h in hist.items()), Fraction(0))
    elif mu1 == 0:
        # only pairs with identical site sets survive
        num = Fraction(_matched_count(N, k1)) * mu2**k1 if k1 == k2 else Fraction(0)
    else:
        raise BudgetExceededError("non-centered moment tables need N <= 8")
    return ScaledValue("chaos_cross", [k1, k2], N, num, k1 + k2)


def exact_chaos_variance(N: int, k: int, dist: EntryDistribution | None = None,
                         budget: int | None = None) -> Fraction:
    """E[J_N(k)^2] exactly."""
    return exact_chaos_cross(N, k, k, dist, budget).exact()

