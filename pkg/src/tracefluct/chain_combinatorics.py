"""Set partitions of [k], cyclic-pair patterns, chains and their classes.

Conventions used throughout the package:

* index vectors are 1-based tuples ``(i_1, ..., i_k)`` with entries in [N];
* the cyclic pairs of a vector are ``(i_a, i_{a+1})`` with ``i_{k+1} = i_1``
  and are produced only by :func:`cyclic_pairs` (or its vectorized twin
  :func:`cyclic_site_codes`);
* partition blocks are numbered ``1..r`` in canonical order (ascending
  minimum element).
"""

from __future__ import annotations

import itertools
from collections import Counter, defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .ensemble import EntryDistribution
from .errors import BudgetExceededError, check_budget

__all__ = [
    "Partition",
    "Chain",
    "ClassSpec",
    "FreedomCertificate",
    "cyclic_pairs",
    "cyclic_site_codes",
    "canonical_labels",
    "partitions",
    "q_subset",
    "one_block",
    "all_singletons",
    "pattern_of",
    "pattern_counts",
    "joint_pattern_counts",
    "iter_index_tuples",
    "enumerate_d",
    "enumerate_pattern",
    "enumerate_class",
    "in_class",
    "check_freedom",
    "admissible_bijections",
    "cardinality_bound_check",
    "g_set",
    "bracket",
    "remainder_variance_exact",
    "remainder_variance_by_pattern",
    "chaos_remainder_cross_exact",
]

_CHUNK = 1 << 17


# -- partitions --------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Partition:
    """A set partition of ``[k]`` with canonically ordered blocks."""

    k: int
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        seen = sorted(a for b in self.blocks for a in b)
        if seen != list(range(1, self.k + 1)):
            raise ValueError(f"blocks {self.blocks} do not partition [{self.k}]")
        if any(not b or list(b) != sorted(b) for b in self.blocks):
            raise ValueError("blocks must be nonempty and sorted")
        if [b[0] for b in self.blocks] != sorted(b[0] for b in self.blocks):
            raise ValueError("blocks must be ordered by their minimum")

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], k: int | None = None) -> "Partition":
        bl = [tuple(sorted(b)) for b in blocks]
        bl.sort(key=lambda b: b[0])
        if k is None:
            k = sum(len(b) for b in bl)
        return cls(k, tuple(bl))

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        groups: dict[int, list[int]] = {}
        for pos, lab in enumerate(labels, start=1):
            groups.setdefault(int(lab), []).append(pos)
        return cls.from_blocks(groups.values(), len(labels))

    @classmethod
    def parse(cls, text: str) -> "Partition":
        blocks = []
        for part in text.split("|"):
            part = part.strip().strip("{}")
            blocks.append([int(x) for x in part.split(",") if x.strip()])
        return cls.from_blocks(blocks)

    def __str__(self) -> str:
        return "|".join("{" + ",".join(map(str, b)) + "}" for b in self.blocks)

    @property
    def r(self) -> int:
        return len(self.blocks)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(b) for b in self.blocks)

    @property
    def labels(self) -> tuple[int, ...]:
        out = [0] * self.k
        for idx, b in enumerate(self.blocks):
            for a in b:
                out[a - 1] = idx
        return tuple(out)

    def block_index(self, a: int) -> int:
        """1-based index of the block containing element ``a``."""
        return self.labels[a - 1] + 1

    @property
    def singletons(self) -> tuple[int, ...]:
        """Elements a with {a} a block."""
        return tuple(b[0] for b in self.blocks if len(b) == 1)

    @property
    def singleton_blocks(self) -> tuple[int, ...]:
        return tuple(idx for idx, b in enumerate(self.blocks, start=1) if len(b) == 1)

    @property
    def has_singleton(self) -> bool:
        return any(len(b) == 1 for b in self.blocks)

    @property
    def is_one_block(self) -> bool:
        return len(self.blocks) == 1

    @property
    def is_discrete(self) -> bool:
        """All blocks are singletons."""
        return len(self.blocks) == self.k

    def restrict(self, elements: Sequence[int]) -> "Partition":
        """Induced partition on ``elements``, relabelled to 1..len(elements)."""
        lab = self.labels
        return Partition.from_labels([lab[a - 1] for a in elements])


def one_block(k: int) -> Partition:
    return Partition(k, (tuple(range(1, k + 1)),))


def all_singletons(k: int) -> Partition:
    return Partition(k, tuple((a,) for a in range(1, k + 1)))


def _restricted_growth(k: int) -> Iterator[tuple[int, ...]]:
    if k == 0:
        yield ()
        return

    def rec(prefix: list[int], top: int):
        if len(prefix) == k:
            yield tuple(prefix)
            return
        for lab in range(top + 2):
            prefix.append(lab)
            yield from rec(prefix, max(top, lab))
            prefix.pop()

    yield from rec([0], 0)


@lru_cache(maxsize=None)
def _set_partitions(k: int) -> tuple[Partition, ...]:
    return tuple(Partition.from_labels(rgs) for rgs in _restricted_growth(k))


def partitions(k: int, max_k: int = 6) -> list[Partition]:
    """All set partitions of [k] in restricted-growth order."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > max_k:
        raise BudgetExceededError(f"partitions of [{k}]: k exceeds max_k={max_k}")
    return list(_set_partitions(k))


def q_subset(k: int, max_k: int = 6) -> list[Partition]:
    """Partitions of [k] with at least one block of cardinality >= 2."""
    return [p for p in partitions(k, max_k) if not p.is_discrete]


# -- cyclic pairs and patterns -----------------------------------------------


def cyclic_pairs(vec: Sequence[int]) -> list[tuple[int, int]]:
    """The pairs (i_a, i_{a+1}), a = 1..k, with i_{k+1} = i_1."""
    k = len(vec)
    return [(vec[a], vec[(a + 1) % k]) for a in range(k)]


def pattern_of(vec: Sequence[int]) -> Partition:
    """Partition of [k] induced by equality of the cyclic pairs of ``vec``."""
    first: dict[tuple[int, int], int] = {}
    labels = [first.setdefault(p, len(first)) for p in cyclic_pairs(vec)]
    return Partition.from_labels(labels)


def cyclic_site_codes(tuples: np.ndarray, N: int, widths: Sequence[int] | None = None) -> np.ndarray:
    """Vectorized cyclic pairs: integer site code ``a * N + b`` for each pair.

    ``tuples`` has shape (M, K) with 0-based entries.  ``widths`` splits the K
    columns into consecutive sub-vectors (e.g. upper and lower sub-chains),
    each closed cyclically on its own.
    """
    tuples = np.asarray(tuples, dtype=np.int64)
    K = tuples.shape[1]
    widths = [K] if widths is None else list(widths)
    if sum(widths) != K:
        raise ValueError("widths must sum to the number of columns")
    out = np.empty_like(tuples)
    start = 0
    for w in widths:
        block = tuples[:, start:start + w]
        out[:, start:start + w] = block * N + np.roll(block, -1, axis=1)
        start += w
    return out


def canonical_labels(codes: np.ndarray) -> np.ndarray:
    """Restricted-growth labels of each row of ``codes`` (equal codes share a label)."""
    codes = np.asarray(codes)
    K = codes.shape[1]
    eq = codes[:, :, None] == codes[:, None, :]
    first = eq.argmax(axis=2)
    is_new = first == np.arange(K)
    rank = np.cumsum(is_new, axis=1) - 1
    return np.take_along_axis(rank, first, axis=1)


def _label_keys(labels: np.ndarray) -> np.ndarray:
    K = labels.shape[1]
    weights = np.array([K**a for a in range(K)], dtype=np.int64)
    return labels.astype(np.int64) @ weights


def _decode_key(key: int, K: int) -> Partition:
    labels = []
    for _ in range(K):
        key, lab = divmod(int(key), K)
        labels.append(lab)
    return Partition.from_labels(labels)


def iter_index_tuples(N: int, k: int, chunk: int = _CHUNK) -> Iterator[np.ndarray]:
    """All of [N]^k (0-based) in lexicographic order, as (M, k) int arrays."""
    total = N**k
    powers = N ** np.arange(k - 1, -1, -1, dtype=np.int64)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk), dtype=np.int64)
        yield (flat[:, None] // powers) % N


def _count_patterns(N: int, widths: Sequence[int], budget: int | None) -> dict[Partition, int]:
    K = sum(widths)
    check_budget(N**K, budget, f"[{N}]^{K} pattern enumeration")
    counts: Counter = Counter()
    for block in iter_index_tuples(N, K):
        keys = _label_keys(canonical_labels(cyclic_site_codes(block, N, widths)))
        uniq, cnt = np.unique(keys, return_counts=True)
        counts.update(dict(zip(uniq.tolist(), cnt.tolist())))
    return {_decode_key(key, K): int(c) for key, c in counts.items()}


@lru_cache(maxsize=256)
def _pattern_counts_cached(k: int, N: int, budget: int | None):
    return _count_patterns(N, [k], budget)


def pattern_counts(k: int, N: int, budget: int | None = None) -> dict[Partition, int]:
    """Brute-force |A_N(pi)| for every pattern pi of [k] realized in [N]^k."""
    return dict(_pattern_counts_cached(k, N, budget))


@lru_cache(maxsize=256)
def _joint_counts_cached(k1: int, k2: int, N: int, budget: int | None):
    return _count_patterns(N, [k1, k2], budget)


def joint_pattern_counts(k1: int, k2: int, N: int, budget: int | None = None) -> dict[Partition, int]:
    """Counts of (i, j) in [N]^k1 x [N]^k2 by the partition of their k1+k2 cyclic pairs."""
    return dict(_joint_counts_cached(k1, k2, N, budget))


# -- index-set enumeration ---------------------------------------------------


@lru_cache(maxsize=128)
def _enumerate_d(N: int, k: int) -> tuple[tuple[int, ...], ...]:
    out: list[tuple[int, ...]] = []
    vec = [0] * k
    used: set[tuple[int, int]] = set()

    def rec(a: int):
        # vec[0..a-1] assigned; pairs 0..a-2 are in `used`
        if a == k:
            closing = (vec[k - 1], vec[0])
            if closing not in used:
                out.append(tuple(vec))
            return
        for x in range(1, N + 1):
            vec[a] = x
            if a == 0:
                rec(1)
                continue
            pair = (vec[a - 1], x)
            if pair in used:
                continue
            used.add(pair)
            rec(a + 1)
            used.discard(pair)

    rec(0)
    return tuple(out)


def enumerate_d(N: int, k: int, budget: int | None = None) -> list[tuple[int, ...]]:
    """D_N^(k): vectors in [N]^k whose k cyclic pairs are pairwise distinct."""
    if k < 1:
        raise ValueError("k must be >= 1")
    check_budget(N**k, budget, f"D_{N}^({k}) backtracking")
    return list(_enumerate_d(N, k))


@lru_cache(maxsize=512)
def _enumerate_pattern(pi: Partition, N: int) -> tuple[tuple[int, ...], ...]:
    k = pi.k
    lab = pi.labels
    out: list[tuple[int, ...]] = []
    vec = [0] * k
    site: list[tuple[int, int] | None] = [None] * k

    def consistent(a: int) -> bool:
        # pair a (0-based) just became determined
        pa = site[a]
        for b in range(k):
            if b == a or site[b] is None:
                continue
            if (site[b] == pa) != (lab[b] == lab[a]):
                return False
        return True

    def rec(a: int):
        if a == k:
            out.append(tuple(vec))
            return
        for x in range(1, N + 1):
            vec[a] = x
            ok = True
            newly = []
            if a > 0:
                site[a - 1] = (vec[a - 1], x)
                newly.append(a - 1)
                ok = consistent(a - 1)
            if ok and a == k - 1:
                site[k - 1] = (x, vec[0])
                newly.append(k - 1)
                ok = consistent(k - 1)
            if ok:
                rec(a + 1)
            for b in newly:
                site[b] = None

    rec(0)
    return tuple(out)


def enumerate_pattern(pi: Partition, N: int, budget: int | None = None) -> list[tuple[int, ...]]:
    """A_N(pi) by backtracking with pair-consistency pruning."""
    check_budget(N**pi.k, budget, f"A_{N}({pi}) backtracking")
    return list(_enumerate_pattern(pi, N))


# -- chains ------------------------------------------------------------------


@dataclass(frozen=True)
class Chain:
    """A chain of length 2k: upper left-indices i and lower left-indices j."""

    upper: tuple[int, ...]
    lower: tuple[int, ...]
    N: int

    def __post_init__(self):
        if len(self.upper) != len(self.lower):
            raise ValueError("upper and lower sub-chains must have the same length")
        if any(not 1 <= x <= self.N for x in self.upper + self.lower):
            raise ValueError(f"chain indices must lie in [1, {self.N}]")

    @property
    def k(self) -> int:
        return len(self.upper)

    def pairs(self) -> list[tuple[int, int]]:
        return cyclic_pairs(self.upper) + cyclic_pairs(self.lower)

    def __str__(self) -> str:
        return "".join(f"({a},{b})" for a, b in self.pairs())


def _block_sites(vec: Sequence[int], pi: Partition) -> tuple[tuple[int, int], ...]:
    pairs = cyclic_pairs(vec)
    return tuple(pairs[b[0] - 1] for b in pi.blocks)


@dataclass(frozen=True)
class ClassSpec:
    """One of the chain classes C_pi, C_pi^{u,v} or C_pi^R.

    ``variant`` is ``"plain"``, ``"pinned"`` (needs ``u``, ``v``) or ``"mapped"``
    (needs ``R`` as a tuple of ``(u, R(u))`` pairs).  Block numbers are 1-based.
    """

    pi: Partition
    variant: str = "plain"
    u: int | None = None
    v: int | None = None
    R: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.variant not in ("plain", "pinned", "mapped"):
            raise ValueError(f"unknown class variant {self.variant!r}")
        if self.variant == "pinned" and (self.u is None or self.v is None):
            raise ValueError("pinned class needs u and v")
        if self.variant == "mapped" and not self.R:
            raise ValueError("mapped class needs a nonempty bijection R")

    @property
    def links(self) -> tuple[tuple[int, int], ...]:
        if self.variant == "pinned":
            return ((self.u, self.v),)
        if self.variant == "mapped":
            return self.R
        return ()

    def enumerate(self, N: int, budget: int | None = None) -> list[Chain]:
        return enumerate_class(self.pi, N, self.variant, self.u, self.v, self.R, budget=budget)

    def contains(self, chain: Chain) -> bool:
        return in_class(chain, self.pi, self.variant, self.u, self.v, self.R)


def _plain_condition(up: Sequence, low: Sequence, pi: Partition) -> bool:
    if not pi.has_singleton:
        return bool(set(up) & set(low))
    low_set, up_set = set(low), set(up)
    return all(up[u - 1] in low_set for u in pi.singleton_blocks) and all(
        low[v - 1] in up_set for v in pi.singleton_blocks
    )


def in_class(chain: Chain, pi: Partition, variant: str = "plain", u: int | None = None,
             v: int | None = None, R: Iterable[tuple[int, int]] = ()) -> bool:
    """Membership predicate evaluated from the chain's own pairs."""
    if chain.k != pi.k:
        return False
    if pattern_of(chain.upper) != pi or pattern_of(chain.lower) != pi:
        return False
    up = _block_sites(chain.upper, pi)
    low = _block_sites(chain.lower, pi)
    if not _plain_condition(up, low, pi):
        return False
    if variant == "pinned":
        return up[u - 1] == low[v - 1]
    if variant == "mapped":
        return all(up[a - 1] == low[b - 1] for a, b in R)
    return True


def enumerate_class(pi: Partition, N: int, variant: str = "plain", u: int | None = None,
                    v: int | None = None, R: Iterable[tuple[int, int]] = (),
                    budget: int | None = None) -> list[Chain]:
    """Enumerate a chain class by joining A_N(pi) with itself on block sites.

    Lower sub-chains are looked up through an index from block sites, so only
    candidates satisfying the correspondence constraints are examined.
    """
    spec = ClassSpec(pi, variant, u, v, tuple(R))
    check_budget(N**pi.k, budget, f"C_{pi}(2k,{N}) enumeration")
    vecs = enumerate_pattern(pi, N)
    sites = [_block_sites(x, pi) for x in vecs]
    by_site: dict[tuple[int, int], set[int]] = defaultdict(set)
    by_block_site: dict[tuple[int, tuple[int, int]], set[int]] = defaultdict(set)
    for idx, s in enumerate(sites):
        for b, site in enumerate(s, start=1):
            by_site[site].add(idx)
            by_block_site[(b, site)].add(idx)
    singles = pi.singleton_blocks
    out: list[Chain] = []
    for iu, up in enumerate(sites):
        cand: set[int] | None = None
        for a, b in spec.links:
            found = by_block_site.get((b, up[a - 1]), set())
            cand = set(found) if cand is None else cand & found
        if singles:
            for a in singles:
                found = by_site.get(up[a - 1], set())
                cand = set(found) if cand is None else cand & found
        elif cand is None:
            cand = set()
            for site in set(up):
                cand |= by_site.get(site, set())
        up_set = set(up)
        for il in sorted(cand):
            low = sites[il]
            if singles and not all(low[b - 1] in up_set for b in singles):
                continue
            out.append(Chain(vecs[iu], vecs[il], N))
    return out


@dataclass(frozen=True)
class FreedomCertificate:
    """Index sets D (upper) and E (lower), 1-based, with budget q = |D| + |E|."""

    D: frozenset[int]
    E: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "D", frozenset(self.D))
        object.__setattr__(self, "E", frozenset(self.E))
        if not self.D:
            raise ValueError("a freedom certificate needs |D| >= 1")

    @property
    def q(self) -> int:
        return len(self.D) + len(self.E)

    def key(self, chain: Chain) -> tuple:
        return (tuple(chain.upper[a - 1] for a in sorted(self.D)),
                tuple(chain.lower[b - 1] for b in sorted(self.E)))


def check_freedom(spec: ClassSpec, cert: FreedomCertificate, N_list: Iterable[int],
                  budget: int | None = None) -> bool:
    """True iff fixing (i_D, j_E) pins at most one class member at every N."""
    for N in N_list:
        members = spec.enumerate(N, budget)
        keys = Counter(cert.key(c) for c in members)
        if keys and max(keys.values()) > 1:
            return False
        if len(members) > N**cert.q:
            raise AssertionError("class larger than N^q despite certificate")
    return True


def admissible_bijections(pi: Partition) -> list[dict[int, int]]:
    """Bijections R: U -> V with U, V containing every singleton block and each
    pair (u, R(u)) involving at least one singleton block."""
    r = pi.r
    singles = set(pi.singleton_blocks)
    others = [b for b in range(1, r + 1) if b not in singles]
    out = []
    for nu in range(len(others) + 1):
        for extra_u in itertools.combinations(others, nu):
            U = sorted(singles | set(extra_u))
            for extra_v in itertools.combinations(others, nu):
                V = sorted(singles | set(extra_v))
                for image in itertools.permutations(V):
                    R = dict(zip(U, image))
                    if all(a in singles or b in singles for a, b in R.items()):
                        out.append(R)
    return out


def _theta(pi: Partition) -> int:
    if not pi.has_singleton:
        return pi.r**2
    return len(admissible_bijections(pi))


def cardinality_bound_check(k: int, N_list: Iterable[int], budget: int | None = None) -> list[dict]:
    """|C_pi(2k, N)| and |C_pi(2k, N)| / N^(k-1) for every pi in Q(k)."""
    rows = []
    for pi in q_subset(k, max_k=max(6, k)):
        theta = _theta(pi)
        for N in N_list:
            card = len(enumerate_class(pi, N, budget=budget))
            ratio = card / N ** (k - 1)
            rows.append({"partition": str(pi), "N": N, "cardinality": card, "ratio": ratio,
                         "theta": theta, "within_theta": card <= theta * N ** (k - 1)})
    return rows


# -- remainder variance ------------------------------------------------------


def _profile(vec: Sequence[int]) -> Counter:
    return Counter(cyclic_pairs(vec))


def _moment_product(mults: Iterable[int], dist: EntryDistribution) -> Fraction:
    out = Fraction(1)
    for m in mults:
        out *= dist.moment(m)
        if out == 0:
            break
    return out


def bracket(i: Sequence[int], j: Sequence[int], dist: EntryDistribution) -> Fraction:
    """E[X_i X_j] - E[X_i] E[X_j] for the cyclic products of i and j."""
    pi, pj = _profile(i), _profile(j)
    joint = pi + pj
    return _moment_product(joint.values(), dist) - (
        _moment_product(pi.values(), dist) * _moment_product(pj.values(), dist))


def g_set(pi: Partition, N: int, dist: EntryDistribution,
          budget: int | None = None) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """G_N(pi): pairs in A_N(pi) x A_N(pi) with a nonzero bracket."""
    check_budget(N ** (2 * pi.k), budget, f"G_{N}({pi})")
    vecs = enumerate_pattern(pi, N)
    return [(i, j) for i in vecs for j in vecs if bracket(i, j, dist) != 0]


def _grouped_profiles(vectors: Iterable[Sequence[int]]):
    groups: Counter = Counter()
    for v in vectors:
        groups[tuple(sorted(_profile(v).items()))] += 1
    return groups


def _bracket_sum(groups_a: Mapping, groups_b: Mapping, dist: EntryDistribution) -> Fraction:
    # pairs sharing no site are independent and contribute exactly 0
    index: dict[tuple[int, int], set] = defaultdict(set)
    for prof in groups_b:
        for site, _ in prof:
            index[site].add(prof)
    total = Fraction(0)
    for pa, ca in groups_a.items():
        da = dict(pa)
        ea = _moment_product(da.values(), dist)
        partners = set().union(*(index.get(site, set()) for site in da))
        for pb in partners:
            db = dict(pb)
            joint = Counter(da)
            joint.update(db)
            eb = _moment_product(db.values(), dist)
            br = _moment_product(joint.values(), dist) - ea * eb
            if br:
                total += ca * groups_b[pb] * br
    return total


def _non_d_vectors(N: int, k: int) -> list[tuple[int, ...]]:
    return [v for v in itertools.product(range(1, N + 1), repeat=k)
            if len(set(cyclic_pairs(v))) < k]


def remainder_variance_exact(N: int, k: int, dist: EntryDistribution,
                             budget: int | None = None) -> Fraction:
    """E[R_N(k)^2] exactly, over all pairs of vectors outside D_N^(k)."""
    if k == 1:
        return Fraction(0)
    check_budget(N ** (2 * k), budget, f"remainder variance N={N}, k={k}")
    groups = _grouped_profiles(_non_d_vectors(N, k))
    return _bracket_sum(groups, groups, dist) / Fraction(N) ** k


def remainder_variance_by_pattern(N: int, k: int, dist: EntryDistribution,
                                  budget: int | None = None) -> dict[Partition, Fraction]:
    """Per-pattern variances Var(N^{-k/2} sum_{i in A_N(pi)} [...]) for pi in Q(k)."""
    if k == 1:
        return {}
    check_budget(N ** (2 * k), budget, f"remainder variance N={N}, k={k}")
    out = {}
    for pi in q_subset(k, max_k=max(6, k)):
        groups = _grouped_profiles(enumerate_pattern(pi, N))
        out[pi] = _bracket_sum(groups, groups, dist) / Fraction(N) ** k
    return out



def chaos_remainder_cross_exact(N: int, k: int, dist: EntryDistribution,
                                budget: int | None = None) -> Fraction:
    """E[J_N(k) R_N(k)] exactly (vectors in D against vectors outside D)."""
    if k == 1:
        return Fraction(0)
    check_budget(N ** (2 * k), budget, f"chaos/remainder cross N={N}, k={k}")
    inside = _grouped_profiles(enumerate_d(N, k))
    outside = _grouped_profiles(_non_d_vectors(N, k))
    return _bracket_sum(inside, outside, dist) / Fraction(N) ** k
