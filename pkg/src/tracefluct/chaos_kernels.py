"""Symmetric kernels on sites, homogeneous sums, contractions and influences.

A site is a matrix position ``(i, j)``.  A :class:`DenseKernel` of order k is
a symmetric function on k-tuples of sites that vanishes whenever two slots
coincide, so it is stored once per *set* of k distinct sites: ``coeffs`` maps
the sorted tuple to the common value taken by each of its k! orderings.

Norms follow the ordered-tuple convention: ``||f||^2`` sums ``f^2`` over all
ordered tuples, and ``Q_k(f, Y)`` sums ``f(a) Y_{a_1}...Y_{a_k}`` over all
ordered tuples.
"""

from __future__ import annotations

import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from .chain_combinatorics import cyclic_pairs, enumerate_d
from .errors import check_budget

__all__ = [
    "KernelError",
    "Site",
    "DenseKernel",
    "ContractionKernel",
    "q_sum",
    "kernel_variance",
    "contract",
    "contract_bruteforce",
    "contraction_norm",
    "influence",
    "influences",
    "max_influence",
    "trace_kernel",
    "normalized_kernel",
    "contraction_scaling",
    "dump_kernel",
    "load_kernel",
    "random_kernel",
]

Site = tuple[int, int]


class KernelError(ValueError):
    """Kernel that is not symmetric, does not vanish on diagonals, or has mismatched order."""


@dataclass(frozen=True)
class DenseKernel:
    k: int
    coeffs: Mapping[tuple[Site, ...], object] = field(default_factory=dict)

    def __post_init__(self):
        if self.k < 1:
            raise KernelError("kernel order must be >= 1")
        clean = {}
        for key, val in self.coeffs.items():
            key = tuple(tuple(s) for s in key)
            if len(key) != self.k:
                raise KernelError(f"tuple {key} has length {len(key)}, expected {self.k}")
            if any(key[a] >= key[a + 1] for a in range(self.k - 1)):
                raise KernelError(f"key {key} is not a strictly sorted tuple of distinct sites")
            if val:
                clean[key] = val
        object.__setattr__(self, "coeffs", clean)

    # construction from ordered data

    @classmethod
    def from_ordered(cls, k: int, values: Mapping[tuple[Site, ...], object]) -> "DenseKernel":
        """Validate a map on ordered tuples and store it canonically."""
        canon: dict = {}
        for key, val in values.items():
            if not val:
                continue
            if len(set(key)) != len(key):
                raise KernelError(f"nonzero value {val} on diagonal tuple {key}")
            canon.setdefault(tuple(sorted(key)), []).append((key, val))
        for skey, items in canon.items():
            vals = {v for _, v in items}
            if len(items) != math.factorial(k) or len(vals) != 1:
                raise KernelError(f"kernel is not symmetric on the orderings of {skey}")
        return cls(k, {skey: items[0][1] for skey, items in canon.items()})

    @classmethod
    def symmetrize(cls, k: int, values: Mapping[tuple[Site, ...], object]) -> "DenseKernel":
        """Average over slot permutations; diagonal tuples are dropped."""
        acc: dict = defaultdict(int)
        for key, val in values.items():
            if len(set(key)) == len(key):
                acc[tuple(sorted(key))] += val
        kf = math.factorial(k)
        return cls(k, {key: _div(v, kf) for key, v in acc.items()})

    def to_ordered(self) -> dict[tuple[Site, ...], object]:
        return {perm: v for key, v in self.coeffs.items() for perm in itertools.permutations(key)}

    # algebra

    def norm_sq(self):
        """||f||^2 over ordered tuples (exact for rational coefficients)."""
        return math.factorial(self.k) * sum((v * v for v in self.coeffs.values()), 0)

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def scale(self, c) -> "DenseKernel":
        return DenseKernel(self.k, {key: v * c for key, v in self.coeffs.items()})

    def __add__(self, other: "DenseKernel") -> "DenseKernel":
        if other.k != self.k:
            raise KernelError("order mismatch")
        out = dict(self.coeffs)
        for key, v in other.coeffs.items():
            out[key] = out.get(key, 0) + v
        return DenseKernel(self.k, out)

    def __sub__(self, other: "DenseKernel") -> "DenseKernel":
        return self + other.scale(-1)

    def sites(self) -> set[Site]:
        return {s for key in self.coeffs for s in key}

    def __len__(self) -> int:
        return len(self.coeffs)

    @property
    def is_empty(self) -> bool:
        return not self.coeffs

    def validate(self) -> None:
        """Re-derive symmetry and diagonal vanishing from the ordered form."""
        DenseKernel.from_ordered(self.k, self.to_ordered())


def _div(v, n):
    if isinstance(v, (int, Fraction)):
        return Fraction(v, n) if isinstance(v, int) else v / n
    return v / n


# -- homogeneous sums --------------------------------------------------------


def _site_value(values, site: Site):
    if isinstance(values, np.ndarray):
        i, j = site
        return values[i - 1, j - 1]
    try:
        return values[site]
    except KeyError:
        raise KeyError(f"no value supplied for site {site}") from None


def q_sum(f: DenseKernel, values) -> float:
    """Q_k(f, Y).  ``values`` is a site map or a raw matrix indexed by [i-1, j-1]."""
    if isinstance(values, np.ndarray) and f.coeffs:
        rows, cols, coef = _kernel_arrays(f)
        prods = np.prod(values[rows, cols], axis=1)
        return math.factorial(f.k) * math.fsum(prods * coef)
    total = [v * math.prod(_site_value(values, s) for s in key) for key, v in f.coeffs.items()]
    return math.factorial(f.k) * math.fsum(total)


_ARRAY_CACHE: dict[int, tuple] = {}


def _kernel_arrays(f: DenseKernel):
    hit = _ARRAY_CACHE.get(id(f))
    if hit is not None and hit[0] is f:
        return hit[1]
    keys = list(f.coeffs)
    idx = np.array(keys, dtype=np.int64).reshape(len(keys), f.k, 2) - 1
    arrays = (idx[:, :, 0], idx[:, :, 1], np.array([float(f.coeffs[key]) for key in keys]))
    if len(_ARRAY_CACHE) > 64:
        _ARRAY_CACHE.clear()
    _ARRAY_CACHE[id(f)] = (f, arrays)
    return arrays


def kernel_variance(f: DenseKernel):
    """E[Q_k(f, Y)^2] = k! ||f||^2 for independent unit-variance Y."""
    return math.factorial(f.k) * f.norm_sq()


# -- contractions ------------------------------------------------------------


@dataclass(frozen=True)
class ContractionKernel:
    """f *_r g on (2k - 2r)-tuples ``(a_1..a_{k-r}, b_1..b_{k-r})``.

    Not symmetric in general.  ``values`` is keyed by the sorted left and right
    site tuples; the function equals that value on every ordering of the left
    block combined with every ordering of the right block, and 0 elsewhere.
    """

    k: int
    r: int
    values: Mapping[tuple[tuple[Site, ...], tuple[Site, ...]], object]

    @property
    def order(self) -> int:
        return 2 * (self.k - self.r)

    def norm_sq(self):
        w = math.factorial(self.k - self.r) ** 2
        return w * sum((v * v for v in self.values.values()), 0)

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())

    def inner(self, other: "ContractionKernel"):
        if (other.k, other.r) != (self.k, self.r):
            raise KernelError("contraction shapes differ")
        w = math.factorial(self.k - self.r) ** 2
        small, big = sorted((self.values, other.values), key=len)
        return w * sum((v * big[key] for key, v in small.items() if key in big), 0)

    def to_ordered(self) -> dict[tuple[Site, ...], object]:
        out = {}
        for (left, right), v in self.values.items():
            for pl in itertools.permutations(left):
                for pr in itertools.permutations(right):
                    out[pl + pr] = v
        return out


def _check_pair(f: DenseKernel, g: DenseKernel, r: int):
    if f.k != g.k:
        raise KernelError(f"order mismatch: {f.k} vs {g.k}")
    if not 0 <= r <= f.k:
        raise KernelError(f"contraction index r={r} outside 0..{f.k}")


def _buckets(f: DenseKernel, r: int):
    out: dict[tuple[Site, ...], list] = defaultdict(list)
    k = f.k
    for key, v in f.coeffs.items():
        for pos in itertools.combinations(range(k), r):
            shared = tuple(key[p] for p in pos)
            rest = tuple(key[p] for p in range(k) if p not in pos)
            out[shared].append((rest, v))
    return out


def contract(f: DenseKernel, g: DenseKernel, r: int) -> ContractionKernel:
    """f *_r g by a hash join on the shared r-site projection.

    For left set A and right set B the value is r! * sum over r-sets X
    (disjoint from both) of f(A + X) g(B + X).
    """
    _check_pair(f, g, r)
    fb, gb = _buckets(f, r), _buckets(g, r)
    acc: dict = defaultdict(int)
    for shared, left in fb.items():
        right = gb.get(shared)
        if not right:
            continue
        for a, va in left:
            for b, vb in right:
                acc[(a, b)] += va * vb
    rf = math.factorial(r)
    return ContractionKernel(f.k, r, {key: v * rf for key, v in acc.items() if v})


def contract_bruteforce(f: DenseKernel, g: DenseKernel, r: int) -> dict[tuple[Site, ...], object]:
    """Quadratic reference: loops over all ordered support tuples of f and g."""
    _check_pair(f, g, r)
    k = f.k
    fo, go = f.to_ordered(), g.to_ordered()
    out: dict = defaultdict(int)
    for ta, va in fo.items():
        for tb, vb in go.items():
            if ta[k - r:] == tb[k - r:]:
                out[ta[:k - r] + tb[:k - r]] += va * vb
    return {key: v for key, v in out.items() if v}


def contraction_norm(f: DenseKernel, g: DenseKernel, r: int) -> float:
    return contract(f, g, r).norm()


# -- influences --------------------------------------------------------------


def influences(f: DenseKernel) -> dict[Site, object]:
    """Inf_a(f) = sum of f(T)^2 over the site sets T containing a."""
    out: dict = defaultdict(int)
    for key, v in f.coeffs.items():
        for s in key:
            out[s] += v * v
    return dict(out)


def influence(f: DenseKernel, a: Site):
    return influences(f).get(tuple(a), 0)


def max_influence(f: DenseKernel):
    infl = influences(f)
    return max(infl.values()) if infl else 0


# -- trace kernels -----------------------------------------------------------


@lru_cache(maxsize=64)
def _trace_kernel(k: int, N: int) -> DenseKernel:
    mult: dict = defaultdict(int)
    for vec in enumerate_d(N, k):
        mult[tuple(sorted(cyclic_pairs(vec)))] += 1
    scale = 1.0 / (math.factorial(k) * N ** (k / 2))
    return DenseKernel(k, {key: m * scale for key, m in mult.items()})


def trace_kernel(k: int, N: int, budget: int | None = None) -> DenseKernel:
    """The kernel whose homogeneous sum in the raw entries is J_N(k)."""
    if k < 2:
        raise ValueError("trace kernels need k >= 2")
    check_budget(N**k, budget, f"trace kernel k={k}, N={N}")
    return _trace_kernel(k, N)


def normalized_kernel(k: int, N: int, budget: int | None = None) -> DenseKernel:
    """Trace kernel rescaled to unit chaos variance."""
    f = trace_kernel(k, N, budget)
    var = kernel_variance(f)
    if var == 0:
        raise ValueError(f"D_{N}^({k}) is empty; the kernel cannot be normalized")
    return f.scale(1.0 / math.sqrt(var))


def contraction_scaling(k: int, N_list: Iterable[int], budget: int | None = None) -> list[dict]:
    """Norms of f_{k,N} *_r f_{k,N} for r = 1..k-1 with a sqrt(N) companion column."""
    rows = []
    for N in N_list:
        f = trace_kernel(k, N, budget)
        for r in range(1, k):
            nrm = contraction_norm(f, f, r)
            rows.append({"k": k, "N": N, "r": r, "norm": nrm, "sqrtN_norm": math.sqrt(N) * nrm})
    return rows


# -- text format -------------------------------------------------------------


def dump_kernel(f: DenseKernel) -> str:
    """One line per ordered support tuple: ``(i,j) (i,j) ... coefficient``."""
    lines = [f"# order {f.k}"]
    for tup, v in sorted(f.to_ordered().items()):
        lines.append(" ".join(f"({i},{j})" for i, j in tup) + f" {v}")
    return "\n".join(lines) + "\n"


def load_kernel(text: str) -> DenseKernel:
    k = None
    values = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            k = int(line.split()[-1])
            continue
        *sites, coef = line.split()
        tup = tuple(tuple(int(x) for x in s.strip("()").split(",")) for s in sites)
        values[tup] = Fraction(coef) if "/" in coef or coef.lstrip("-").isdigit() else float(coef)
    if k is None:
        raise KernelError("missing '# order k' header")
    return DenseKernel.from_ordered(k, values)


def random_kernel(rng, k: int, n_sites: int = 4, density: float = 0.6, max_num: int = 5,
                  max_den: int = 4) -> DenseKernel:
    """Random symmetric kernel with small rational coefficients on sites (1, 1)..(1, n_sites).

    ``rng`` is a ``numpy.random.Generator``.
    """
    sites = [(1, j) for j in range(1, n_sites + 1)]
    coeffs = {}
    for key in itertools.combinations(sites, k):
        if rng.random() < density:
            num = int(rng.integers(-max_num, max_num + 1))
            coeffs[key] = Fraction(num, int(rng.integers(1, max_den + 1)))
    return DenseKernel(k, coeffs)
