"""Explicit smooth-function bounds for vectors of homogeneous sums, the
fourth-moment diagnostic, and the Monte-Carlo rate experiment for traces."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chaos_kernels import DenseKernel, contraction_norm, influences, kernel_variance
from .ensemble import EntryDistribution, child_array
from .moment_oracle import exact_expected_trace, exact_fluct_covariance
from .trace_engine import trace_powers

__all__ = [
    "SQRT_8_OVER_PI",
    "GaussianTarget",
    "BoundInput",
    "delta_ij",
    "delta_from_norms",
    "universal_bound",
    "bound_terms",
    "FourthMomentGap",
    "fourth_moment_gap",
    "TestFunction",
    "make_test_function",
    "gaussian_expectation",
    "berry_rate_experiment",
]

SQRT_8_OVER_PI = math.sqrt(8.0 / math.pi)


@dataclass(frozen=True)
class GaussianTarget:
    """Centered Gaussian vector with diagonal covariance.

    ``scale="trace"`` gives variances k_j (the trace limit); ``"normalized"``
    gives the identity.
    """

    orders: tuple[int, ...]
    scale: str = "normalized"

    def __post_init__(self):
        if self.scale not in ("trace", "normalized"):
            raise ValueError(f"unknown Gaussian scale {self.scale!r}")

    @property
    def variances(self) -> tuple[float, ...]:
        if self.scale == "trace":
            return tuple(float(k) for k in self.orders)
        return tuple(1.0 for _ in self.orders)

    def char_function(self, t: Sequence[float]) -> float:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return math.exp(-0.5 * float(np.dot(self.variances, t * t)))


def _sum_max_influence(kernels: Sequence[DenseKernel]) -> float:
    per_site: dict = {}
    for f in kernels:
        for a, v in influences(f).items():
            per_site[a] = max(per_site.get(a, 0.0), float(v))
    return math.fsum(per_site.values())


def _max_max_influence(kernels: Sequence[DenseKernel]) -> float:
    return max((float(v) for f in kernels for v in influences(f).values()), default=0.0)


@dataclass(frozen=True)
class BoundInput:
    """Kernels with strictly increasing orders >= 2 and unit chaos variance.

    ``K=None`` selects sum_a max_j Inf_a, computed from the kernels.
    """

    kernels: tuple[DenseKernel, ...]
    beta: float
    phi_d2: float
    phi_d3: float
    K: float | None = None
    tol: float = 1e-10
    _K: float = field(init=False, repr=False, default=0.0)

    def __post_init__(self):
        object.__setattr__(self, "kernels", tuple(self.kernels))
        orders = [f.k for f in self.kernels]
        if any(k < 2 for k in orders) or any(a >= b for a, b in zip(orders, orders[1:])):
            raise ValueError(f"kernel orders must be >= 2 and strictly increasing, got {orders}")
        for f in self.kernels:
            if f.is_empty:
                continue
            var = float(kernel_variance(f))
            if abs(var - 1.0) > self.tol:
                raise ValueError(f"kernel of order {f.k} has variance {var}, expected 1")
        least = _sum_max_influence(self.kernels)
        if self.K is None:
            object.__setattr__(self, "_K", least)
        else:
            if self.K < least * (1 - 1e-12):
                raise ValueError(f"K={self.K} is below sum_a max_j Inf_a = {least}")
            object.__setattr__(self, "_K", float(self.K))

    @property
    def K_value(self) -> float:
        return self._K


def delta_from_norms(ki: int, kj: int, norm_i: Callable[[int], float], norm_j: Callable[[int], float]) -> float:
    """Delta_ij from contraction norms; ``norm_i(s)`` is ||f_i *_s f_i||.

    A term needing f_i *_s f_i with s outside 1..k_i-1 (this happens for
    r = k_i when k_i < k_j) keeps only its f_j part.
    """
    if ki > kj:
        raise ValueError("delta_ij needs k_i <= k_j")
    total = 0.0
    for r in range(1, kj):
        coef = (math.factorial(r - 1) * math.comb(ki - 1, r - 1) * math.comb(kj - 1, r - 1)
                * math.sqrt(math.factorial(ki + kj - 2 * r)))
        if coef == 0:
            continue
        s_i = ki - r
        part = norm_j(kj - r)
        if 1 <= s_i <= ki - 1:
            part += norm_i(s_i)
        total += coef * part
    total *= kj / math.sqrt(2.0)
    if ki < kj:
        total += math.sqrt(math.factorial(kj) * math.comb(kj, ki) * norm_j(kj - ki))
    return total


def delta_ij(fi: DenseKernel, fj: DenseKernel) -> float:
    if fi.k > fj.k:
        raise ValueError(f"orders must satisfy k_i <= k_j, got {fi.k} > {fj.k}")
    cache: dict = {}

    def norm_of(f):
        def inner(s):
            key = (id(f), s)
            if key not in cache:
                cache[key] = contraction_norm(f, f, s)
            return cache[key]
        return inner

    return delta_from_norms(fi.k, fj.k, norm_of(fi), norm_of(fj))


def bound_terms(inp: BoundInput) -> dict[str, float]:
    """The contraction part and the influence part of the bound."""
    ks = inp.kernels
    m = len(ks)
    contraction = sum(delta_ij(ks[i], ks[i]) for i in range(m))
    contraction += 2 * sum(delta_ij(ks[i], ks[j]) for i in range(m) for j in range(i + 1, m))
    beta = inp.beta
    bracket = sum((16 * math.sqrt(2) * beta) ** ((f.k - 1) / 3) * math.factorial(f.k) for f in ks)
    influence = (inp.K_value * inp.phi_d3 * (beta + SQRT_8_OVER_PI) * bracket**3
                 * math.sqrt(_max_max_influence(ks)))
    return {"contraction": inp.phi_d2 * contraction, "influence": influence}


def universal_bound(inp: BoundInput) -> float:
    t = bound_terms(inp)
    return t["contraction"] + t["influence"]


# -- fourth moment -----------------------------------------------------------


@dataclass(frozen=True)
class FourthMomentGap:
    m2: float
    m4: float
    gap: float
    stderr: float
    n: int


def fourth_moment_gap(samples, min_samples: int = 1000) -> FourthMomentGap:
    """Empirical m2, m4 and |m4 - 3 m2^2| with a delta-method standard error."""
    x = np.asarray(samples, dtype=float).ravel()
    if x.size < min_samples:
        raise ValueError(f"need at least {min_samples} samples, got {x.size}")
    x2 = x * x
    m2 = float(np.mean(x2))
    m4 = float(np.mean(x2 * x2))
    infl = x2 * x2 - 6.0 * m2 * x2
    se = float(np.std(infl, ddof=1) / math.sqrt(x.size))
    return FourthMomentGap(m2, m4, abs(m4 - 3.0 * m2 * m2), se, int(x.size))


# -- test functions ----------------------------------------------------------


def _multi_indices(m: int, order: int):
    for combo in itertools.combinations_with_replacement(range(m), order):
        alpha = [0] * m
        for c in combo:
            alpha[c] += 1
        yield tuple(alpha)


def _gauss_1d_sup(a: float, n: int) -> float:
    # sup_x |d^n/dx^n exp(-a x^2)| = a^{n/2} sup_y |H_n(y) e^{-y^2}|
    y = np.linspace(-8.0, 8.0, 160001)
    h = np.polynomial.hermite.hermval(y, [0] * n + [1]) * np.exp(-y * y)
    return a ** (n / 2) * float(np.max(np.abs(h)))


@dataclass(frozen=True)
class TestFunction:
    """A smooth test function on R^m with known derivative sup norms.

    ``d2`` and ``d3`` use max over |alpha| = n of sup |d^alpha phi| / alpha!.
    """

    phi_id: str
    m: int
    params: tuple[float, ...]
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    d2: float
    d3: float
    closed_form: Callable[[Sequence[float]], float] = field(repr=False, compare=False)

    __test__ = False  # not a pytest class

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            x = x[:, None] if self.m == 1 else x[None, :]
        return self.func(x)

    def gaussian_mean(self, variances: Sequence[float]) -> float:
        return self.closed_form(variances)


def make_test_function(phi_id: str, m: int, params: Sequence[float] | None = None) -> TestFunction:
    """Built-in family: ``const``, ``cos`` (prod cos(t_j x_j)) and ``gauss`` (prod exp(-a x_j^2))."""
    if m < 1:
        raise ValueError("dimension must be >= 1")
    if phi_id == "const":
        c = float(params[0]) if params else 1.0
        return TestFunction("const", m, (c,), lambda x: np.full(x.shape[0], c), 0.0, 0.0,
                            lambda v: c)
    if phi_id == "cos":
        t = tuple(float(p) for p in params) if params else (1.0,) * m
        if len(t) != m:
            raise ValueError(f"cos needs {m} frequencies")
        tv = np.array(t)

        def sup(order):
            return max(math.prod(tj**aj / math.factorial(aj) for tj, aj in zip(t, alpha))
                       for alpha in _multi_indices(m, order))

        return TestFunction("cos", m, t, lambda x: np.prod(np.cos(x * tv), axis=1), sup(2), sup(3),
                            lambda v: math.exp(-0.5 * sum(tj * tj * vj for tj, vj in zip(t, v))))
    if phi_id == "gauss":
        a = float(params[0]) if params else 0.5
        if a <= 0:
            raise ValueError("gauss width parameter must be positive")
        sups = [_gauss_1d_sup(a, n) for n in range(4)]

        def sup(order):
            return max(math.prod(sups[aj] / math.factorial(aj) for aj in alpha)
                       for alpha in _multi_indices(m, order))

        return TestFunction("gauss", m, (a,), lambda x: np.exp(-a * np.sum(x * x, axis=1)),
                            sup(2), sup(3),
                            lambda v: math.prod(1.0 / math.sqrt(1.0 + 2.0 * a * vj) for vj in v))
    raise ValueError(f"unknown test function {phi_id!r}")


def gaussian_expectation(phi: Callable[[np.ndarray], np.ndarray], variances: Sequence[float],
                         points: int = 64) -> float:
    """E phi(Z), Z ~ N(0, diag(variances)), by tensor Gauss-Hermite quadrature."""
    m = len(variances)
    if m > 3:
        raise ValueError("tensor quadrature is limited to m <= 3")
    x, w = np.polynomial.hermite_e.hermegauss(points)
    w = w / math.sqrt(2.0 * math.pi)
    grids = np.meshgrid(*([x] * m), indexing="ij")
    pts = np.stack([g.ravel() * math.sqrt(v) for g, v in zip(grids, variances)], axis=1)
    weights = np.ones(pts.shape[0])
    for wg in np.meshgrid(*([w] * m), indexing="ij"):
        weights = weights * wg.ravel()
    return float(np.sum(weights * phi(pts)))


# -- the Monte-Carlo rate experiment ----------------------------------------


def berry_rate_experiment(dist: EntryDistribution, orders: Sequence[int], N_list: Sequence[int],
                          replications: int, phi: TestFunction, seed: int = 0) -> list[dict]:
    """|mean phi(normalized traces) - E phi(Z)| per N, Z standard Gaussian.

    Each trace is centered and scaled by its exact mean and variance.  One
    array per replication serves every N (nested blocks).
    """
    orders = tuple(sorted(orders))
    if phi.m != len(orders):
        raise ValueError("test function dimension must equal the number of orders")
    N_list = sorted(N_list)
    dist = dist.with_max_order(2 * max(orders)) if dist.max_order < 2 * max(orders) else dist
    centers = {N: np.array([exact_expected_trace(N, k, dist).value for k in orders]) for N in N_list}
    scales = {N: np.array([math.sqrt(exact_fluct_covariance(N, k, k, dist).value) for k in orders])
              for N in N_list}
    values = {N: np.empty(replications) for N in N_list}
    nmax = N_list[-1]
    for r in range(replications):
        raw = child_array(seed, r, dist).raw_block(nmax)
        for N in N_list:
            tr = trace_powers(raw[:N, :N] / math.sqrt(N), orders)
            z = (np.array([tr[k] for k in orders]) - centers[N]) / scales[N]
            values[N][r] = phi(z[None, :])[0]
    target = gaussian_expectation(phi, [1.0] * len(orders))
    rows = []
    for N in N_list:
        v = values[N]
        mean = float(np.mean(v))
        se = float(np.std(v, ddof=1) / math.sqrt(replications)) if replications > 1 else float("nan")
        disc = abs(mean - target)
        rows.append({"N": N, "k_set": ",".join(map(str, orders)), "phi_id": phi.phi_id,
                     "mean": mean, "target": target, "discrepancy": disc, "stderr": se,
                     "scaled_discrepancy": N**0.25 * disc, "replications": replications,
                     "seed": seed})
    return rows
