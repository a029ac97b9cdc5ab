"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``python3 -m pytest tests/test_acceptance.py -v`` (lines appear in the
terminal summary) or ``python3 tests/test_acceptance.py`` for a plain report.
"""

import math
import time
from fractions import Fraction

import numpy as np
import pytest

from tracefluct.asclt_lab import build_paths, correlation_decay, il_summary
from tracefluct.chain_combinatorics import (
    cardinality_bound_check,
    enumerate_class,
    one_block,
    pattern_counts,
    remainder_variance_exact,
)
from tracefluct.chaos_kernels import contract, contraction_scaling, max_influence, q_sum, random_kernel, trace_kernel
from tracefluct.ensemble import child_array, make_distribution
from tracefluct.moment_oracle import exact_chaos_variance, exact_fluct_covariance
from tracefluct.stein_bounds import berry_rate_experiment, fourth_moment_gap, make_test_function
from tracefluct.trace_engine import chaos_component, trace_powers

RESULTS: list[str] = []

RAD = make_distribution("rademacher", max_order=12)
NORMAL = make_distribution("normal", max_order=12)
KURTOTIC = make_distribution("discrete:-3,1/18;0,8/9;3,1/18", max_order=12)


def report(num: int, title: str, ok: bool, detail: str, start: float):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {num:2d}  {title}: {detail} ({time.perf_counter() - start:.1f}s)"
    RESULTS.append(line)
    print(line)
    assert ok, line


def fitted_bound_holds(Ns, vals):
    """Fit C = max N-scaled value over the smallest third of the grid; check it on the whole grid."""
    n_fit = max(1, len(Ns) // 3)
    C = max(vals[:n_fit])
    return C, all(v <= C * (1 + 1e-12) for v in vals)


def test_c01_chaos_variance():
    t0 = time.perf_counter()
    ok, parts = True, []
    for k in (2, 3):
        Ns = list(range(3, 9))
        vals = [exact_chaos_variance(N, k) for N in Ns]
        C, holds = fitted_bound_holds(Ns, [float(N * abs(v - k)) for N, v in zip(Ns, vals)])
        ok &= holds
        parts.append(f"C_{k}={C:.4g}")
        if k == 2:
            exact = all(v == 2 - Fraction(2, N) for N, v in zip(Ns, vals))
            ok &= exact
            parts.append(f"2-2/N exact={exact}")
    report(1, "exact chaos variance", ok, ", ".join(parts), t0)


def test_c02_distribution_free():
    t0 = time.perf_counter()
    same = True
    for k in (2, 3):
        for N in range(3, 9):
            a, b = exact_chaos_variance(N, k, RAD), exact_chaos_variance(N, k, NORMAL)
            same &= a == b and float(a).hex() == float(b).hex()
    report(2, "distribution-freeness", same, "rademacher and normal tables agree on k in {2,3}, N in 3..8", t0)


def test_c03_one_block_cardinality():
    t0 = time.perf_counter()
    bad = [(k, N) for k in (2, 3, 4) for N in range(2, 7) if len(enumerate_class(one_block(k), N)) != N]
    report(3, "one-block class cardinality", not bad, f"|class| = N on 15 cells, mismatches {bad}", t0)


def test_c04_class_cardinality_ratios():
    t0 = time.perf_counter()
    ok, worst, n_pi = True, 0.0, 0
    for k in (3, 4):
        rows = cardinality_bound_check(k, range(2, 9))
        by_pi: dict = {}
        for r in rows:
            by_pi.setdefault(r["partition"], []).append(r)
        for pi, rs in by_pi.items():
            n_pi += 1
            ratios = [r["ratio"] for r in rs]
            tail = [r["ratio"] for r in rs if r["N"] >= 4]
            ok &= all(math.isfinite(x) for x in ratios)
            ok &= all(b <= a * (1 + 1e-12) for a, b in zip(tail, tail[1:]))
            worst = max(worst, max(ratios))
    report(4, "class cardinality bound", ok, f"{n_pi} partitions, max ratio {worst:.4g}, non-increasing from N=4", t0)


def test_c05_remainder_decay():
    t0 = time.perf_counter()
    ok, parts = True, []
    Ns = list(range(2, 7))
    for dist in (RAD, NORMAL):
        for k in (2, 3):
            vals = [N * remainder_variance_exact(N, k, dist) for N in Ns]
            C, holds = fitted_bound_holds(Ns, [float(v) for v in vals])
            ok &= holds
            parts.append(f"{dist.name} k={k} max {float(max(vals)):.3g}")
            if k == 2 and dist is NORMAL:
                ok &= all(v == 2 for v in vals)
    report(5, "remainder decay", ok, "; ".join(parts) + "; normal k=2 equals 2", t0)


def test_c06_contraction_scaling():
    t0 = time.perf_counter()
    ok, parts = True, []
    for k in (2, 3):
        rows = contraction_scaling(k, [4, 8, 16, 32])
        for r in range(1, k):
            vals = [row["sqrtN_norm"] for row in rows if row["r"] == r]
            ok &= all(0 < v <= 2 * vals[0] for v in vals)
            parts.append(f"k={k} r={r} {vals[0]:.3f}->{vals[-1]:.3f}")
    report(6, "contraction scaling", ok, "sqrt(N)*norm <= 2x its N=4 value; " + ", ".join(parts), t0)


def test_c07_chaos_identity():
    t0 = time.perf_counter()
    worst = 0.0
    for k in (2, 3):
        for N in range(3, 9):
            f = trace_kernel(k, N)
            for s in range(100):
                arr = child_array(2024, s, RAD if s % 2 else NORMAL)
                a, b = q_sum(f, arr.raw_block(N)), chaos_component(arr, N, k)
                worst = max(worst, abs(a - b) / abs(b) if b else abs(a - b))
    report(7, "chaos identity", worst <= 1e-8, f"max relative error {worst:.2e} over 1200 matrices", t0)


def test_c08_oracle_vs_mc():
    t0 = time.perf_counter()
    R = 100_000
    pairs = [(2, 2), (2, 3), (3, 3)]
    ok, worst = True, 0.0
    for dist in (RAD, NORMAL):
        for N in (3, 4):
            t2, t3 = np.empty(R), np.empty(R)
            for r in range(R):
                tr = trace_powers(child_array(8, r, dist).raw_block(N) / math.sqrt(N), (2, 3))
                t2[r], t3[r] = tr[2], tr[3]
            s = {2: t2 - t2.mean(), 3: t3 - t3.mean()}
            for k1, k2 in pairs:
                prod = s[k1] * s[k2]
                se = prod.std(ddof=1) / math.sqrt(R)
                z = abs(prod.sum() / (R - 1) - exact_fluct_covariance(N, k1, k2, dist).value) / se
                worst = max(worst, z)
                ok &= z <= 4
    report(8, "oracle vs Monte Carlo covariance", ok, f"12 cells, worst |z| = {worst:.2f} (limit 4)", t0)


def test_c09_universality_rate():
    t0 = time.perf_counter()
    Ns = [16, 32, 64, 128]
    phi = make_test_function("cos", 2)
    res = {d.name: berry_rate_experiment(d, (2, 3), Ns, 10_000, phi, seed=9) for d in (RAD, NORMAL)}
    ok, parts = True, []
    for a, b in zip(res[RAD.name], res[NORMAL.name]):
        comb = math.sqrt(a["stderr"] ** 2 + b["stderr"] ** 2)
        ok &= abs(a["mean"] - b["mean"]) <= 3 * comb
    for name, rows in res.items():
        r0 = rows[0]
        C = max(r0["scaled_discrepancy"], 3 * r0["N"] ** 0.25 * r0["stderr"])
        ok &= all(r["scaled_discrepancy"] <= 2 * C + 3 * r["N"] ** 0.25 * r["stderr"] for r in rows)
        parts.append(f"{name} max N^1/4 disc {max(r['scaled_discrepancy'] for r in rows):.3f} (C={C:.3f})")
    report(9, "universality and rate shape", ok, "; ".join(parts), t0)


def test_c10_fourth_moment_trend():
    t0 = time.perf_counter()
    R = 10_000
    gaps = {}
    for N in (16, 256):
        gaps[N] = fourth_moment_gap([chaos_component(child_array(10, r, KURTOTIC), N, 2) for r in range(R)])
    ok = gaps[256].gap < gaps[16].gap and gaps[256].gap <= 5 * gaps[256].stderr
    report(10, "fourth-moment trend", ok,
           f"gap {gaps[16].gap:.3f}±{gaps[16].stderr:.3f} at N=16, {gaps[256].gap:.3f}±{gaps[256].stderr:.3f} at N=256", t0)


def test_c11_correlation_decay_identity():
    t0 = time.perf_counter()
    ok, parts = True, []
    for n, p, k in [(3, 5, 2), (4, 6, 2), (3, 5, 3)]:
        c = correlation_decay(n, p, k)
        V = [float(exact_chaos_variance(m, k)) for m in range(n, p + 1)]
        Ck = math.sqrt(max(V) / min(V))
        ok &= c.identity_holds and c.correlation <= Ck * math.sqrt(n / p)
        parts.append(f"({n},{p},{k}) corr {c.correlation:.4f} <= {Ck * math.sqrt(n / p):.4f}")
    report(11, "correlation-decay identity", ok, "; ".join(parts), t0)


def test_c12_il_criterion():
    t0 = time.perf_counter()
    paths = build_paths(12, RAD, (2,), 512, 50)
    rows = il_summary(paths, [0.0, 0.5, 1.0], [64, 128, 256, 512])
    ok, parts = True, []
    for t in ("0.0", "0.5", "1.0"):
        vals = [r["scaled"] for r in rows if r["t"] == t]
        if t == "0.0":
            ok &= all(v == 0.0 for v in vals)
        else:
            ok &= max(vals) <= 2 * min(vals)
        parts.append(f"t={t}: {min(vals):.3f}..{max(vals):.3f}")
    report(12, "Ibragimov-Lifshits criterion", ok, "E|Delta|^2 log N " + "; ".join(parts), t0)


def test_c13_property_suites():
    t0 = time.perf_counter()
    rng = np.random.default_rng(13)
    ok = True
    for i in range(100):
        k = 2 + i % 3
        f, g = random_kernel(rng, k, 6), random_kernel(rng, k, 6)
        ok &= (math.factorial(k - 1) * max_influence(f)) ** 2 <= contract(f, f, k - 1).norm_sq()
        for r in range(k + 1):
            ok &= contract(f, f, k - r).inner(contract(g, g, k - r)) == contract(f, g, r).norm_sq()
    complete = all(sum(pattern_counts(k, N).values()) == N**k for k in range(1, 5) for N in range(1, 7))
    report(13, "property suites", ok and complete,
           f"100 rational kernels, influence bound and identity {ok}; pattern completeness {complete}", t0)


if __name__ == "__main__":
    import sys

    failed = 0
    for name, fn in sorted(globals().items()):
        if name.startswith("test_c"):
            try:
                fn()
            except AssertionError:
                failed += 1
    print(f"{13 - failed}/13 criteria passed")
    sys.exit(1 if failed else 0)
