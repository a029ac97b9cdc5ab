"""Entry laws and reproducible, nested i.i.d. random matrices.

Every entry ``X_ij`` of the infinite array is a pure function of
``(key, i, j)``: the array key selects a Philox-4x64 stream and the position
``(i, j)`` selects a fixed counter inside it.  Positions are laid out in
square shells (all entries with ``max(i, j) = n`` come after the ``(n-1)``
block), so the raw ``N x N`` block is the first ``N**2`` positions of the
stream and nesting across ``N`` holds by construction.

Child arrays for replication ``r`` of master seed ``s`` use the Philox key
``SeedSequence([s, r]).generate_state(2, uint64)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

__all__ = [
    "DistributionError",
    "MissingMomentError",
    "EntryDistribution",
    "MatrixArray",
    "FixedArray",
    "ScaledMatrix",
    "make_distribution",
    "parse_distribution",
    "entry",
    "sample_matrix",
    "child_array",
    "child_key",
]

_WORDS_PER_ENTRY = 2
_TWO_M53 = 2.0 ** -53


class DistributionError(ValueError):
    """Raised for entry laws that are not centered, unit-variance or normalized."""


class MissingMomentError(LookupError):
    """Raised when a moment beyond the declared maximum order is requested."""


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


@dataclass(frozen=True)
class EntryDistribution:
    """A centered, unit-variance entry law with exact moments.

    ``kind`` is one of ``"rademacher"``, ``"normal"`` or ``"discrete"``.
    Discrete laws carry their support and probabilities as exact rationals;
    ``moment(j)`` is exact (``Fraction``) for every law.
    """

    name: str
    kind: str
    max_order: int
    values: tuple[Fraction, ...] = ()
    probs: tuple[Fraction, ...] = ()
    moments: dict[int, Fraction] = field(default_factory=dict, compare=False, repr=False)

    def moment(self, j: int) -> Fraction:
        if j < 0:
            raise ValueError("moment order must be nonnegative")
        if j == 0:
            return Fraction(1)
        if j > self.max_order:
            raise MissingMomentError(
                f"{self.name}: moment of order {j} requested, only {self.max_order} declared"
            )
        return self.moments[j]

    @property
    def abs_third(self) -> float:
        """beta = E|X|^3."""
        if self.kind == "rademacher":
            return 1.0
        if self.kind == "normal":
            return 2.0 * math.sqrt(2.0 / math.pi)
        return float(sum(p * abs(v) ** 3 for v, p in zip(self.values, self.probs)))

    def with_max_order(self, max_order: int) -> "EntryDistribution":
        return make_distribution(self.spec, max_order=max_order)

    @property
    def spec(self) -> str:
        if self.kind != "discrete":
            return self.kind
        return "discrete:" + ";".join(f"{v},{p}" for v, p in zip(self.values, self.probs))

    def transform(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        """Map two independent uniform [0, 1) arrays to entries of this law."""
        if self.kind == "normal":
            # Box-Muller on (0, 1] x [0, 1)
            return np.sqrt(-2.0 * np.log1p(-u1)) * np.cos(2.0 * math.pi * u2)
        if self.kind == "rademacher":
            return np.where(u1 < 0.5, -1.0, 1.0)
        cdf = np.cumsum([float(p) for p in self.probs])
        cdf[-1] = np.inf
        support = np.array([float(v) for v in self.values])
        return support[np.searchsorted(cdf, u1, side="right")]


def _discrete_moments(values, probs, max_order):
    return {j: sum((p * v**j for v, p in zip(values, probs)), Fraction(0)) for j in range(1, max_order + 1)}


def make_distribution(spec: str | EntryDistribution, max_order: int = 8) -> EntryDistribution:
    """Build an entry law from a spec string.

    Grammar: ``rademacher``, ``normal`` (alias ``standard_normal``) or
    ``discrete:v1,p1;v2,p2;...`` with rational values/probabilities such as
    ``1/5``.  Moments are populated exactly up to ``max_order`` (at least 2).
    """
    if isinstance(spec, EntryDistribution):
        return spec if spec.max_order >= max_order else spec.with_max_order(max_order)
    max_order = max(int(max_order), 2)
    text = spec.strip()
    low = text.lower()
    if low == "rademacher":
        moments = {j: Fraction(1 - j % 2) for j in range(1, max_order + 1)}
        return EntryDistribution("rademacher", "rademacher", max_order,
                                 (Fraction(-1), Fraction(1)), (Fraction(1, 2), Fraction(1, 2)), moments)
    if low in ("normal", "standard_normal", "gaussian"):
        moments = {j: Fraction(0 if j % 2 else _double_factorial(j - 1)) for j in range(1, max_order + 1)}
        return EntryDistribution("normal", "normal", max_order, moments=moments)
    if low.startswith("discrete:"):
        values, probs = _parse_atoms(text.split(":", 1)[1])
        moments = _discrete_moments(values, probs, max_order)
        if moments[1] != 0:
            raise DistributionError(f"entry law must be centered, got mean {moments[1]}")
        if moments[2] != 1:
            raise DistributionError(f"entry law must have unit variance, got {moments[2]}")
        return EntryDistribution(text, "discrete", max_order, values, probs, moments)
    raise DistributionError(f"unknown distribution spec {spec!r}")


parse_distribution = make_distribution


def _parse_atoms(body: str):
    values: list[Fraction] = []
    probs: list[Fraction] = []
    for atom in filter(None, (a.strip() for a in body.split(";"))):
        try:
            v, p = atom.split(",")
            values.append(Fraction(v.strip()))
            probs.append(Fraction(p.strip()))
        except ValueError as exc:
            raise DistributionError(f"malformed atom {atom!r}; expected 'value,prob'") from exc
    if not values:
        raise DistributionError("discrete law needs at least one atom")
    if any(p < 0 for p in probs):
        raise DistributionError("negative probability")
    if sum(probs) != 1:
        raise DistributionError(f"probabilities sum to {sum(probs)}, not 1")
    kept = [(v, p) for v, p in zip(values, probs) if p > 0]
    return tuple(v for v, _ in kept), tuple(p for _, p in kept)


# -- counter-based array -----------------------------------------------------


def child_key(seed: int, replication: int | None = None) -> tuple[int, int]:
    """Philox key for the master seed (``replication=None``) or a child array."""
    entropy = [int(seed)] if replication is None else [int(seed), int(replication)]
    a, b = np.random.SeedSequence(entropy).generate_state(2, np.uint64)
    return int(a), int(b)


@dataclass(frozen=True)
class MatrixArray:
    """The infinite array ``{X_ij : i, j >= 1}`` for one key and entry law."""

    seed: int
    dist: EntryDistribution
    replication: int | None = None

    @property
    def key(self) -> tuple[int, int]:
        return child_key(self.seed, self.replication)

    def raw_block(self, n: int) -> np.ndarray:
        """Unscaled top-left ``n x n`` block (0-based array, entry [i-1, j-1])."""
        if n < 1:
            raise ValueError("block size must be >= 1")
        gen = np.random.Philox(key=np.array(self.key, dtype=np.uint64))
        words = gen.random_raw(_WORDS_PER_ENTRY * n * n).reshape(n * n, _WORDS_PER_ENTRY)
        u = (words >> np.uint64(11)).astype(np.float64) * _TWO_M53
        flat = self.dist.transform(u[:, 0], u[:, 1])
        return flat[_shell_positions(n)]

    def entry(self, i: int, j: int) -> float:
        if i < 1 or j < 1:
            raise ValueError("array indices start at 1")
        p = shell_position(i, j)
        first = _WORDS_PER_ENTRY * p
        counter, offset = divmod(first, 4)
        gen = np.random.Philox(key=np.array(self.key, dtype=np.uint64), counter=[counter, 0, 0, 0])
        words = gen.random_raw(4)[offset:offset + _WORDS_PER_ENTRY]
        u = (words >> np.uint64(11)).astype(np.float64) * _TWO_M53
        return float(self.dist.transform(u[:1], u[1:])[0])


@dataclass(frozen=True)
class FixedArray:
    """An explicit raw matrix used in place of a random array (tests, stubs)."""

    raw: np.ndarray
    dist: EntryDistribution | None = None

    def raw_block(self, n: int) -> np.ndarray:
        raw = np.asarray(self.raw, dtype=float)
        if n < 1 or n > raw.shape[0]:
            raise ValueError(f"block size {n} outside 1..{raw.shape[0]}")
        return raw[:n, :n].copy()

    def entry(self, i: int, j: int) -> float:
        return float(np.asarray(self.raw)[i - 1, j - 1])


def child_array(seed: int, replication: int, dist: EntryDistribution) -> MatrixArray:
    return MatrixArray(seed, dist, replication)


def shell_position(i: int, j: int) -> int:
    """0-based stream position of entry (i, j); shell n = max(i, j)."""
    n = max(i, j)
    base = (n - 1) ** 2
    if j == n and i < n:
        return base + (i - 1)
    return base + (n - 1) + (j - 1)


@lru_cache(maxsize=64)
def _shell_positions(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)[:, None]
    j = np.arange(1, n + 1)[None, :]
    m = np.maximum(i, j)
    pos = (m - 1) ** 2 + np.where((j == m) & (i < m), i - 1, (m - 1) + (j - 1))
    pos.setflags(write=False)
    return pos


def entry(array: MatrixArray, i: int, j: int) -> float:
    return array.entry(i, j)


@dataclass(frozen=True)
class ScaledMatrix:
    """``X_N = {X_ij / sqrt(N)}``; ``raw`` keeps the unscaled block."""

    N: int
    raw: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.raw / math.sqrt(self.N)

    @classmethod
    def from_raw(cls, raw) -> "ScaledMatrix":
        raw = np.asarray(raw, dtype=float)
        if raw.ndim != 2 or raw.shape[0] != raw.shape[1] or raw.shape[0] < 1:
            raise ValueError("raw block must be a nonempty square matrix")
        return cls(raw.shape[0], raw)


def sample_matrix(array: MatrixArray, N: int) -> ScaledMatrix:
    if N < 1:
        raise ValueError("N must be >= 1")
    return ScaledMatrix(N, array.raw_block(N))
