"""Command-line experiment driver.

Every command writes one table (CSV or JSON) plus a ``.manifest.json`` file
beside it.  Exit codes: 0 success, 1 a verification command found a failing
check, 2 invalid configuration, 3 an enumeration budget was exceeded.
Set ``TRACEFLUCT_OUTPUT_DIR`` to redirect output files (only the directory
changes; file names are kept).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import platform
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .asclt_lab import (
    build_paths,
    correlation_decay,
    gaussian_control_paths,
    il_summary,
    log_mean,
)
from .chain_combinatorics import cardinality_bound_check, pattern_counts, remainder_variance_exact
from .chaos_kernels import (
    contract,
    contraction_scaling,
    influences,
    normalized_kernel,
    q_sum,
    random_kernel,
    trace_kernel,
)
from .ensemble import DistributionError, child_array, make_distribution
from .errors import BudgetExceededError
from .io import Table, config_hash, emit
from .moment_oracle import exact_chaos_variance, exact_fluct_covariance
from .stein_bounds import (
    BoundInput,
    berry_rate_experiment,
    bound_terms,
    fourth_moment_gap,
    make_test_function,
)
from .trace_engine import chaos_component, expected_trace, trace_powers

OUTPUT_ENV = "TRACEFLUCT_OUTPUT_DIR"

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3

NOTES = {
    "asclt": ("The almost-sure limit of logarithmic means converges at logarithmic speed and is "
              "not reproducible at desk scale; log_mean values are descriptive only and carry no "
              "pass/fail tolerance. The tested surface is the Ibragimov-Lifshits criterion "
              "(il-criterion) and the exact correlation-decay identity (asclt --mode correlation)."),
    "order_one": "Order k = 1 is accepted in paths but lies outside the proved almost-sure range.",
    "matrix": "A_n is read as X_n, the scaled top-left n x n block of one fixed array.",
}


class ConfigError(ValueError):
    pass


# -- parsing helpers ---------------------------------------------------------


def parse_int_list(text) -> list[int]:
    """``"2,3"``, ``"2..6"`` or a mix such as ``"2..4,8"``."""
    if isinstance(text, (list, tuple)):
        return [int(x) for x in text]
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigError(f"empty integer list {text!r}")
    return out


def parse_t_list(text) -> list[tuple[float, ...]]:
    """Comma-separated t vectors with ``:`` between components, e.g. ``0,0.5,1`` or ``0.5:0.5``."""
    return [tuple(float(c) for c in part.split(":")) for part in str(text).split(",") if part.strip()]


def parse_triples(text) -> list[tuple[int, int, int]]:
    out = []
    for part in str(text).split(","):
        a = [int(x) for x in part.split(":")]
        if len(a) != 3:
            raise ConfigError(f"triple {part!r} must look like n:p:k")
        out.append(tuple(a))
    return out


def read_config_file(path: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    cfg = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, val = line.split("=", 1)
        cfg[key.strip().replace("-", "_")] = val.strip()
    return cfg


COMMANDS = ["clt", "universality", "contraction-scaling", "combinatorics", "remainder", "bounds",
            "asclt", "il-criterion", "oracle-check"]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tracefluct", description="Trace-fluctuation experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key=value file; command-line flags take precedence")
        sp.add_argument("--dist", help="entry law, e.g. rademacher, normal, discrete:-1,1/2;1,1/2")
        sp.add_argument("--dists", help="comma-separated laws for comparison commands")
        sp.add_argument("--orders", "--k", dest="orders", help="orders k, e.g. 2,3 or 2..4")
        sp.add_argument("--N", dest="N", help="sizes, e.g. 16,32 or 2..6")
        sp.add_argument("--reps", type=int)
        sp.add_argument("--seed", type=int)
        sp.add_argument("--phi", help="test function: const, cos, gauss, indicator")
        sp.add_argument("--phi-params", dest="phi_params", help="comma-separated parameters")
        sp.add_argument("--t", help="t grid, e.g. 0,0.5,1 (components joined by ':')")
        sp.add_argument("--mode", help="command-specific mode")
        sp.add_argument("--statistic", help="oracle-check statistic")
        sp.add_argument("--triples", help="n:p:k list for asclt --mode correlation")
        sp.add_argument("--control", action="store_true", default=None,
                        help="il-criterion: use Gaussian control paths")
        sp.add_argument("--budget", type=int, help="enumeration budget")
        sp.add_argument("--out", help="output file")
        sp.add_argument("--format", choices=["csv", "json"])
    return p


DEFAULTS = {
    "dist": "rademacher", "dists": "rademacher,normal", "orders": "2", "N": "4,8,16",
    "reps": 1000, "seed": 0, "phi": "cos", "phi_params": "", "t": "0,0.5,1.0", "mode": "",
    "statistic": "covariance", "triples": "3:5:2,4:6:2,3:5:3", "control": False,
    "budget": 10**8, "out": "", "format": "csv",
}


def resolve_config(args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS)
    if args.config:
        cfg.update(read_config_file(args.config))
    for key, val in vars(args).items():
        if key in ("config",) or val is None:
            continue
        cfg[key] = val
    cfg["reps"] = int(cfg["reps"])
    cfg["seed"] = int(cfg["seed"])
    cfg["budget"] = int(cfg["budget"])
    cfg["control"] = str(cfg["control"]).lower() in ("1", "true", "yes")
    if cfg["reps"] < 1 or cfg["budget"] < 1:
        raise ConfigError("reps and budget must be positive")
    orders = parse_int_list(cfg["orders"])
    if any(b <= a for a, b in zip(orders, orders[1:])):
        raise ConfigError(f"orders must be strictly increasing, got {orders}")
    if orders[0] < 1:
        raise ConfigError("orders must be >= 1")
    cfg["orders"] = orders
    cfg["N"] = parse_int_list(cfg["N"])
    if min(cfg["N"]) < 1:
        raise ConfigError("sizes N must be >= 1")
    return cfg


def _dist(cfg, spec=None):
    spec = spec or cfg["dist"]
    need = 2 * max(cfg["orders"]) + 2
    return make_distribution(spec, max_order=max(8, need))


def _phi(cfg, m):
    params = [float(x) for x in str(cfg["phi_params"]).split(",") if x.strip()] or None
    return make_test_function(cfg["phi"], m, params)


# -- commands ----------------------------------------------------------------


def cmd_clt(cfg):
    dist = _dist(cfg)
    orders, Ns, R = cfg["orders"], sorted(cfg["N"]), cfg["reps"]
    vals = {(N, k): np.empty(R) for N in Ns for k in orders}
    for r in range(R):
        raw = child_array(cfg["seed"], r, dist).raw_block(Ns[-1])
        for N in Ns:
            tr = trace_powers(raw[:N, :N] / math.sqrt(N), orders)
            for k in orders:
                vals[(N, k)][r] = tr[k] - expected_trace(N, k, dist)
    rows = []
    for N in Ns:
        for k in orders:
            v = vals[(N, k)]
            var = float(np.var(v, ddof=1))
            se = float(np.std(v * v, ddof=1) / math.sqrt(R))
            rows.append({"N": N, "k": k, "dist": dist.name, "mean": float(np.mean(v)),
                         "variance": var, "variance_stderr": se,
                         "exact_variance": exact_fluct_covariance(N, k, k, dist).value,
                         "limit_variance": k, "replications": R})
    return rows, None


def cmd_universality(cfg):
    orders = cfg["orders"]
    phi = _phi(cfg, len(orders))
    by_dist = {}
    for spec in cfg["dists"].split(","):
        dist = _dist(cfg, spec.strip())
        by_dist[dist.name] = berry_rate_experiment(dist, orders, cfg["N"], cfg["reps"], phi, cfg["seed"])
    names = list(by_dist)
    rows = []
    ok = True
    for idx, N in enumerate(sorted(cfg["N"])):
        base = by_dist[names[0]][idx]
        for name in names:
            row = dict(by_dist[name][idx])
            row["dist"] = name
            diff = row["mean"] - base["mean"]
            comb = math.sqrt(row["stderr"] ** 2 + base["stderr"] ** 2)
            row["diff_vs_first"] = diff
            row["combined_stderr"] = comb
            row["agree_3se"] = abs(diff) <= 3 * comb
            ok &= row["agree_3se"]
            rows.append(row)
    return rows, ok


def cmd_contraction_scaling(cfg):
    rows = []
    for k in cfg["orders"]:
        if k < 2:
            raise ConfigError("contraction scaling needs k >= 2")
        rows.extend(contraction_scaling(k, cfg["N"], cfg["budget"]))
    return rows, None


def cmd_combinatorics(cfg):
    rows = []
    for k in cfg["orders"]:
        for row in cardinality_bound_check(k, cfg["N"], cfg["budget"]):
            rows.append({"k": k, **row})
    return rows, None


def cmd_remainder(cfg):
    dist = _dist(cfg)
    rows = []
    for k in cfg["orders"]:
        for N in cfg["N"]:
            v = remainder_variance_exact(N, k, dist, cfg["budget"])
            rows.append({"k": k, "N": N, "dist": dist.name, "variance": str(v),
                         "variance_float": float(v), "N_times_variance": float(N * v)})
    return rows, None


def cmd_bounds(cfg):
    dist = _dist(cfg)
    if cfg["mode"] == "fourth-moment":
        rows = []
        for k in cfg["orders"]:
            for N in cfg["N"]:
                samples = [chaos_component(child_array(cfg["seed"], r, dist), N, k, cfg["budget"])
                           for r in range(cfg["reps"])]
                g = fourth_moment_gap(samples)
                rows.append({"k": k, "N": N, "dist": dist.name, "m2": g.m2, "m4": g.m4,
                             "gap": g.gap, "gap_stderr": g.stderr, "replications": g.n})
        return rows, None
    orders = [k for k in cfg["orders"] if k >= 2]
    if not orders:
        raise ConfigError("bounds need orders >= 2")
    phi = _phi(cfg, len(orders))
    rows = []
    for N in cfg["N"]:
        kernels = tuple(normalized_kernel(k, N, cfg["budget"]) for k in orders)
        inp = BoundInput(kernels, dist.abs_third, phi.d2, phi.d3)
        terms = bound_terms(inp)
        rows.append({"N": N, "k_set": ",".join(map(str, orders)), "dist": dist.name,
                     "beta": dist.abs_third, "K": inp.K_value, "contraction_part": terms["contraction"],
                     "influence_part": terms["influence"],
                     "bound": terms["contraction"] + terms["influence"],
                     "sqrtN_contraction_part": math.sqrt(N) * terms["contraction"]})
    return rows, None


def _indicator(q):
    return lambda x: (x[:, 0] <= q).astype(float)


def cmd_asclt(cfg):
    if cfg["mode"] == "correlation":
        rows = []
        ok = True
        for n, p, k in parse_triples(cfg["triples"]):
            c = correlation_decay(n, p, k, budget=cfg["budget"])
            ok &= c.identity_holds
            rows.append({"n": c.n, "p": c.p, "k": k, "matched_np": c.matched_np,
                         "matched_nn": c.matched_nn, "cross": c.cross, "predicted": c.predicted,
                         "identity_holds": c.identity_holds, "correlation": c.correlation,
                         "sqrt_n_over_p": math.sqrt(c.n / c.p)})
        return rows, ok
    dist = _dist(cfg)
    horizon = max(cfg["N"])
    paths = build_paths(cfg["seed"], dist, cfg["orders"], horizon, cfg["reps"])
    rows = []
    params = [float(x) for x in str(cfg["phi_params"]).split(",") if x.strip()]
    for col, k in enumerate(cfg["orders"]):
        if cfg["phi"] == "indicator":
            q = params[0] if params else 0.0
            phi = _indicator(q)
            target = 0.5 * (1 + math.erf(q / math.sqrt(2 * k)))
        else:
            f = make_test_function(cfg["phi"], 1, params or None)
            phi = f
            target = f.gaussian_mean([k])
        for N in sorted(cfg["N"]):
            if N < 2:
                continue
            vals = [log_mean(p, lambda x: phi(x[:, col:col + 1]), N) for p in paths]
            rows.append({"k": k, "N": N, "phi_id": cfg["phi"], "log_mean": float(np.mean(vals)),
                         "log_mean_sd": float(np.std(vals, ddof=1)) if len(vals) > 1 else float("nan"),
                         "limit_value": target, "replications": len(vals), "descriptive_only": True,
                         "order_one_flag": k == 1})
    return rows, None


def cmd_il(cfg):
    orders = cfg["orders"]
    horizon = max(cfg["N"])
    if cfg["control"]:
        paths = gaussian_control_paths(orders, horizon, cfg["reps"], cfg["seed"])
    else:
        paths = build_paths(cfg["seed"], _dist(cfg), orders, horizon, cfg["reps"])
    t_list = [t if len(t) == len(orders) else t * len(orders) for t in parse_t_list(cfg["t"])]
    rows = il_summary(paths, t_list, sorted(cfg["N"]), orders)
    for r in rows:
        r["source"] = "gaussian-control" if cfg["control"] else "trace-paths"
    return rows, None


def _random_rows_kernel_properties(cfg):
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    ok = True
    for idx in range(cfg["reps"]):
        k = int(rng.integers(2, 4))
        f = random_kernel(rng, k, n_sites=5)
        g = random_kernel(rng, k, n_sites=5)
        infl = influences(f)
        lhs = math.factorial(k - 1) * max(infl.values(), default=Fraction(0))
        c = contract(f, f, k - 1).norm_sq()
        bound_ok = lhs * lhs <= c
        identity_ok = True
        for r in range(0, k + 1):
            fr = contract(f, f, k - r)
            gr = contract(g, g, k - r)
            identity_ok &= fr.inner(gr) == contract(f, g, r).norm_sq()
        ok &= bound_ok and identity_ok
        rows.append({"kernel": idx, "k": k, "support": len(f), "influence_bound": bound_ok,
                     "inner_product_identity": identity_ok})
    return rows, ok


def cmd_oracle_check(cfg):
    stat = cfg["statistic"]
    dist = _dist(cfg)
    orders = cfg["orders"]
    rows = []
    ok = True
    if stat == "covariance":
        R = cfg["reps"]
        pairs = [(a, b) for i, a in enumerate(orders) for b in orders[i:]]
        for N in cfg["N"]:
            samples = {k: np.empty(R) for k in orders}
            for r in range(R):
                raw = child_array(cfg["seed"], r, dist).raw_block(N) / math.sqrt(N)
                tr = trace_powers(raw, orders)
                for k in orders:
                    samples[k][r] = tr[k]
            for k1, k2 in pairs:
                x = samples[k1] - samples[k1].mean()
                y = samples[k2] - samples[k2].mean()
                prod = x * y
                mc = float(prod.sum() / (R - 1))
                se = float(np.std(prod, ddof=1) / math.sqrt(R))
                exact = exact_fluct_covariance(N, k1, k2, dist).value
                passed = abs(mc - exact) <= 4 * se if se > 0 else abs(mc - exact) < 1e-12
                ok &= passed
                rows.append({"N": N, "k1": k1, "k2": k2, "dist": dist.name, "exact": exact,
                             "mc": mc, "stderr": se, "within_4se": passed, "replications": R})
    elif stat == "chaos-variance":
        dists = [_dist(cfg, s.strip()) for s in cfg["dists"].split(",")]
        for k in orders:
            for N in cfg["N"]:
                vals = [exact_chaos_variance(N, k, d, cfg["budget"]) for d in dists]
                same = all(v == vals[0] for v in vals)
                ok &= same
                row = {"k": k, "N": N, "value": str(vals[0]), "value_float": float(vals[0]),
                       "N_times_gap": float(N * abs(vals[0] - k)), "distribution_free": same}
                if k == 2:
                    row["closed_form_match"] = vals[0] == 2 - Fraction(2, N)
                    ok &= row["closed_form_match"]
                rows.append(row)
    elif stat == "chaos-identity":
        for k in orders:
            for N in cfg["N"]:
                f = trace_kernel(k, N, cfg["budget"])
                worst = 0.0
                for r in range(cfg["reps"]):
                    arr = child_array(cfg["seed"], r, dist)
                    a = q_sum(f, arr.raw_block(N))
                    b = chaos_component(arr, N, k, cfg["budget"])
                    worst = max(worst, abs(a - b) / abs(b) if b else abs(a - b))
                passed = worst <= 1e-8
                ok &= passed
                rows.append({"k": k, "N": N, "max_relative_error": worst, "passed": passed,
                             "replications": cfg["reps"]})
    elif stat == "pattern-completeness":
        for k in orders:
            for N in cfg["N"]:
                total = sum(pattern_counts(k, N, cfg["budget"]).values())
                passed = total == N**k
                ok &= passed
                rows.append({"k": k, "N": N, "pattern_total": total, "cube": N**k, "passed": passed})
    elif stat == "kernel-properties":
        rows, ok = _random_rows_kernel_properties(cfg)
    else:
        raise ConfigError(f"unknown statistic {stat!r}")
    return rows, ok


HANDLERS = {
    "clt": cmd_clt,
    "universality": cmd_universality,
    "contraction-scaling": cmd_contraction_scaling,
    "combinatorics": cmd_combinatorics,
    "remainder": cmd_remainder,
    "bounds": cmd_bounds,
    "asclt": cmd_asclt,
    "il-criterion": cmd_il,
    "oracle-check": cmd_oracle_check,
}


def output_path(cfg: dict) -> Path:
    name = cfg["out"] or f"{cfg['command']}.{cfg['format']}"
    path = Path(name)
    env = os.environ.get(OUTPUT_ENV)
    if env:
        path = Path(env) / path.name
    return path


def _manifest(cfg, chash, elapsed, ok, rows_written):
    orders = cfg["orders"]
    notes = [NOTES["matrix"],
             f"entry moments are enforced up to order {2 * max(orders)} (twice the largest power)"]
    if cfg["command"] in ("asclt", "il-criterion"):
        notes.append(NOTES["asclt"])
        if 1 in orders:
            notes.append(NOTES["order_one"])
    return {"command": cfg["command"], "config": {k: v for k, v in sorted(cfg.items())},
            "config_hash": chash, "seed": cfg["seed"], "version": __version__,
            "python": platform.python_version(), "numpy": np.__version__,
            "wall_clock_seconds": elapsed, "rows": rows_written, "checks_passed": ok,
            "notes": notes}


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = resolve_config(args)
        start = time.perf_counter()
        rows, ok = HANDLERS[cfg["command"]](cfg)
        elapsed = time.perf_counter() - start
        hashed = {k: v for k, v in cfg.items() if k not in ("out", "format")}
        chash = config_hash(hashed)
        path = output_path(cfg)
        emit(Table(rows, seed=cfg["seed"], config_hash=chash), path, cfg["format"])
        manifest = path.with_name(path.name + ".manifest.json")
        manifest.write_text(json.dumps(_manifest(cfg, chash, elapsed, ok, len(rows)), indent=1,
                                       default=str) + "\n")
    except BudgetExceededError as exc:
        print(f"tracefluct: budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except (ConfigError, DistributionError, ValueError) as exc:
        print(f"tracefluct: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{cfg['command']}: wrote {len(rows)} rows to {path}")
    if ok is False:
        print(f"{cfg['command']}: one or more checks failed", file=sys.stderr)
        return EXIT_CHECK_FAILED
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
