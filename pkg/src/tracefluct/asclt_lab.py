"""Nested trace paths, logarithmic means and the Ibragimov-Lifshits statistic.

A path records, for n = 1..N, the exactly centered traces Tr(X_n^k) - E Tr(X_n^k)
of the top-left n x n blocks of one fixed array.  k = 1 is accepted (the
diagonal partial-sum analogue) but lies outside the range where the
almost-sure limit is proved for traces; paths carry a flag for it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .chain_combinatorics import cyclic_pairs, enumerate_d
from .ensemble import EntryDistribution, child_array, child_key
from .errors import check_budget
from .moment_oracle import exact_chaos_variance
from .trace_engine import chaos_component, decompose, expected_trace, trace_powers

__all__ = [
    "TracePath",
    "build_path",
    "build_paths",
    "harmonic",
    "log_mean",
    "gaussian_char",
    "il_statistic",
    "il_table",
    "il_summary",
    "CorrelationDecay",
    "correlation_decay",
    "correlation_decay_mc",
    "gaussian_control_paths",
    "remainder_transfer_check",
]

DEFAULT_HORIZON = 512


@dataclass(frozen=True)
class TracePath:
    orders: tuple[int, ...]
    centered: np.ndarray  # shape (N, m), row n-1 is record n
    centers: np.ndarray  # exact E Tr(X_n^k), same shape
    chaos: dict[int, np.ndarray] = field(default_factory=dict)
    remainder: dict[int, np.ndarray] = field(default_factory=dict)
    seed: int | None = None
    replication: int | None = None

    @property
    def N(self) -> int:
        return self.centered.shape[0]

    @property
    def includes_order_one(self) -> bool:
        return 1 in self.orders

    def record(self, n: int) -> np.ndarray:
        return self.centered[n - 1]

    def truncate(self, n: int) -> "TracePath":
        if not 1 <= n <= self.N:
            raise ValueError(f"cannot truncate a path of length {self.N} at {n}")
        return TracePath(self.orders, self.centered[:n].copy(), self.centers[:n].copy(),
                         {k: v[:n].copy() for k, v in self.chaos.items()},
                         {k: v[:n].copy() for k, v in self.remainder.items()},
                         self.seed, self.replication)

    def to_csv(self) -> str:
        """Rows (n, k, centered_value, chaos_part, remainder); blanks where not computed."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "k", "centered_value", "chaos_part", "remainder"])
        for n in range(1, self.N + 1):
            for col, k in enumerate(self.orders):
                ch = self.chaos.get(k)
                rm = self.remainder.get(k)
                w.writerow([n, k, repr(float(self.centered[n - 1, col])),
                            "" if ch is None or np.isnan(ch[n - 1]) else repr(float(ch[n - 1])),
                            "" if rm is None or np.isnan(rm[n - 1]) else repr(float(rm[n - 1]))])
        return buf.getvalue()


def build_path(array, orders: Sequence[int], N: int, decompose_upto: int = 0,
               dist: EntryDistribution | None = None, max_horizon: int = DEFAULT_HORIZON) -> TracePath:
    """Centered trace records for n = 1..N from one array.

    ``decompose_upto`` also stores chaos and remainder parts for n up to that
    size (enumeration cost grows like n^k).
    """
    orders = tuple(sorted(set(int(k) for k in orders)))
    if not orders or orders[0] < 1:
        raise ValueError("orders must be positive")
    if N < 1:
        raise ValueError("path horizon must be >= 1")
    if N > max_horizon:
        raise ValueError(f"horizon {N} exceeds the configured maximum {max_horizon}")
    dist = dist if dist is not None else array.dist
    raw = array.raw_block(N)
    m = len(orders)
    centered = np.empty((N, m))
    centers = np.empty((N, m))
    for n in range(1, N + 1):
        tr = trace_powers(raw[:n, :n] / math.sqrt(n), orders)
        for col, k in enumerate(orders):
            centers[n - 1, col] = expected_trace(n, k, dist)
            centered[n - 1, col] = tr[k] - centers[n - 1, col]
    chaos, rem = {}, {}
    upto = min(decompose_upto, N)
    if upto:
        for k in orders:
            ch = np.full(N, np.nan)
            rm = np.full(N, np.nan)
            for n in range(1, upto + 1):
                fl = decompose(array, n, k, dist)
                ch[n - 1], rm[n - 1] = fl.chaos_part, fl.remainder
            chaos[k], rem[k] = ch, rm
    return TracePath(orders, centered, centers, chaos, rem,
                     getattr(array, "seed", None), getattr(array, "replication", None))


def build_paths(seed: int, dist: EntryDistribution, orders: Sequence[int], N: int,
                replications: int) -> list[TracePath]:
    return [build_path(child_array(seed, r, dist), orders, N, dist=dist) for r in range(replications)]


def harmonic(N: int) -> float:
    return math.fsum(1.0 / n for n in range(1, N + 1))


def log_mean(path: TracePath, phi: Callable[[np.ndarray], np.ndarray], N: int | None = None) -> float:
    """(1/log N) sum_{n<=N} phi(record n) / n.

    ``phi`` maps an (n, m) array of records to n values.
    """
    N = path.N if N is None else N
    if N < 2:
        raise ValueError("logarithmic means need N >= 2")
    vals = np.asarray(phi(path.centered[:N]), dtype=float).reshape(N)
    weights = 1.0 / np.arange(1, N + 1)
    return math.fsum(vals * weights) / math.log(N)


def gaussian_char(orders: Sequence[int], t) -> float:
    """E exp(i <t, Z>) for independent Z_k with variance k."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    return math.exp(-0.5 * float(np.dot(np.asarray(orders, dtype=float), t * t)))


def _records(paths) -> tuple[np.ndarray, tuple[int, ...]]:
    if isinstance(paths, np.ndarray):
        if paths.ndim == 2:
            paths = paths[:, :, None]
        return paths, None
    orders = paths[0].orders
    return np.stack([p.centered for p in paths]), orders


def _delta(G: np.ndarray, t: np.ndarray, target: float, N: int) -> np.ndarray:
    phase = np.exp(1j * (G[:, :N, :] @ t))
    weights = 1.0 / np.arange(1, N + 1)
    return ((phase - target) @ weights) / math.log(N)


def il_statistic(paths, t, N: int, orders: Sequence[int] | None = None,
                 min_replications: int = 8) -> tuple[np.ndarray, float, float]:
    """Per-replication Delta_N(G, t), the mean of |Delta_N|^2 and its standard error.

    ``paths`` is a list of :class:`TracePath` or an array (R, N) / (R, N, m).
    """
    G, path_orders = _records(paths)
    orders = tuple(orders) if orders is not None else path_orders
    if orders is None:
        raise ValueError("orders are required when paths are given as an array")
    R = G.shape[0]
    if R < min_replications:
        raise ValueError(f"need at least {min_replications} replications, got {R}")
    if N < 2 or N > G.shape[1]:
        raise ValueError(f"N={N} outside 2..{G.shape[1]}")
    t = np.atleast_1d(np.asarray(t, dtype=float))
    delta = _delta(G, t, gaussian_char(orders, t), N)
    abs2 = np.abs(delta) ** 2
    return delta, float(np.mean(abs2)), float(np.std(abs2, ddof=1) / math.sqrt(R))


def il_table(paths, t_list, N_list, orders=None) -> list[dict]:
    """Rows (N, t, re, im, abs2, replication)."""
    rows = []
    for N in N_list:
        for t in t_list:
            delta, _, _ = il_statistic(paths, t, N, orders)
            tt = np.atleast_1d(t)
            for r, d in enumerate(delta):
                rows.append({"N": N, "t": ",".join(repr(float(x)) for x in tt), "re": float(d.real),
                             "im": float(d.imag), "abs2": float(abs(d) ** 2), "replication": r})
    return rows


def il_summary(paths, t_list, N_list, orders=None) -> list[dict]:
    """Rows (N, t, mean_abs2, stderr, scaled = mean_abs2 * log N)."""
    rows = []
    for t in t_list:
        for N in N_list:
            delta, mean, se = il_statistic(paths, t, N, orders)
            tt = np.atleast_1d(t)
            rows.append({"N": N, "t": ",".join(repr(float(x)) for x in tt), "mean_abs2": mean,
                         "stderr": se, "scaled": mean * math.log(N), "replications": len(delta)})
    return rows


# -- correlation decay -------------------------------------------------------


def _site_groups(N: int, k: int) -> dict[frozenset, int]:
    out: dict[frozenset, int] = {}
    for v in enumerate_d(N, k):
        key = frozenset(cyclic_pairs(v))
        out[key] = out.get(key, 0) + 1
    return out


@dataclass(frozen=True)
class CorrelationDecay:
    n: int
    p: int
    k: int
    matched_np: int  # pairs in D_n x D_p with equal site sets
    matched_nn: int
    var_n: float
    var_p: float

    @property
    def cross(self) -> float:
        """E[J_n J_p]."""
        return self.matched_np / (self.n * self.p) ** (self.k / 2)

    @property
    def predicted(self) -> float:
        """(n/p)^{k/2} E[J_n^2]."""
        return (self.n / self.p) ** (self.k / 2) * self.var_n

    @property
    def identity_holds(self) -> bool:
        # both sides share the factor (np)^{-k/2}; compare the integer counts
        return self.matched_np == self.matched_nn

    @property
    def correlation(self) -> float:
        """E[L_n L_p] with L = J / sqrt(E J^2)."""
        return self.cross / math.sqrt(self.var_n * self.var_p)


def correlation_decay(n: int, p: int, k: int, dist: EntryDistribution | None = None,
                      budget: int | None = None) -> CorrelationDecay:
    """Exact E[J_n J_p] by matching site sets of D_n against D_p (n <= p)."""
    if n > p:
        n, p = p, n
    check_budget(p**k, budget, f"D_{p}^({k})")
    gn, gp = _site_groups(n, k), _site_groups(p, k)
    matched_np = sum(c * gp.get(key, 0) for key, c in gn.items())
    matched_nn = sum(c * c for c in gn.values())
    return CorrelationDecay(n, p, k, matched_np, matched_nn,
                            float(exact_chaos_variance(n, k, dist)), float(exact_chaos_variance(p, k, dist)))


def correlation_decay_mc(n: int, p: int, k: int, dist: EntryDistribution, replications: int,
                         seed: int = 0) -> tuple[float, float]:
    """MC estimate of E[L_n L_p] on coupled blocks of one array; (mean, stderr)."""
    if n > p:
        n, p = p, n
    vn = float(exact_chaos_variance(n, k))
    vp = float(exact_chaos_variance(p, k))
    prods = np.empty(replications)
    for r in range(replications):
        arr = child_array(seed, r, dist)
        prods[r] = chaos_component(arr, n, k) * chaos_component(arr, p, k)
    prods /= math.sqrt(vn * vp)
    return float(np.mean(prods)), float(np.std(prods, ddof=1) / math.sqrt(replications))


def gaussian_control_paths(orders: Sequence[int], N: int, replications: int, seed: int = 0) -> np.ndarray:
    """Gaussian AR(1) paths with Var = k and corr(n, n+1) = (n/(n+1))^{k/2}.

    Shape (R, N, m).  They mimic the limiting covariance of nested chaos parts.
    """
    rng = np.random.Generator(np.random.Philox(key=np.array(child_key(seed), dtype=np.uint64)))
    orders = tuple(orders)
    out = np.empty((replications, N, len(orders)))
    for col, k in enumerate(orders):
        z = rng.standard_normal(replications)
        out[:, 0, col] = z
        for n in range(1, N):
            rho = (n / (n + 1)) ** (k / 2)
            z = rho * z + math.sqrt(1 - rho * rho) * rng.standard_normal(replications)
            out[:, n, col] = z
        out[:, :, col] *= math.sqrt(k)
    return out


def remainder_transfer_check(G: np.ndarray, R: np.ndarray, t, N: int, orders: Sequence[int]) -> dict:
    """Compare E|Delta(G + R)|^2 with 2 E|Delta(G)|^2 + 2 (H_N / log N)(|t|^2 / log N) sum E|R_n|^2 / n.

    ``G`` and ``R`` have shape (reps, N, m).  The inequality holds path by path
    (Lipschitz bound on exp(i x) and Cauchy-Schwarz), hence for the averages.
    """
    G = G if G.ndim == 3 else G[:, :, None]
    R = R if R.ndim == 3 else R[:, :, None]
    t = np.atleast_1d(np.asarray(t, dtype=float))
    target = gaussian_char(orders, t)
    perturbed = float(np.mean(np.abs(_delta(G + R, t, target, N)) ** 2))
    base = float(np.mean(np.abs(_delta(G, t, target, N)) ** 2))
    rn2 = np.mean(np.sum(R[:, :N, :] ** 2, axis=2), axis=0)
    weighted = math.fsum(rn2 / np.arange(1, N + 1))
    logN = math.log(N)
    bound = 2 * base + 2 * (harmonic(N) / logN) * (float(t @ t) / logN) * weighted
    return {"N": N, "perturbed": perturbed, "base": base, "bound": bound, "holds": perturbed <= bound}
