import math

import numpy as np
import pytest

from tracefluct.chaos_kernels import DenseKernel, contraction_norm, normalized_kernel, trace_kernel
from tracefluct.ensemble import make_distribution
from tracefluct.stein_bounds import (
    SQRT_8_OVER_PI,
    BoundInput,
    GaussianTarget,
    berry_rate_experiment,
    bound_terms,
    delta_from_norms,
    delta_ij,
    fourth_moment_gap,
    gaussian_expectation,
    make_test_function,
    universal_bound,
)


def test_coefficient_constant():
    assert SQRT_8_OVER_PI == pytest.approx(1.5957691216, abs=1e-10)


def test_equal_order_two_delta():
    s = 0.37
    assert delta_from_norms(2, 2, lambda r: s, lambda r: s) == pytest.approx(4 * s)


def test_empty_kernels():
    e2 = DenseKernel(2)
    assert delta_ij(e2, e2) == 0
    inp = BoundInput((e2, DenseKernel(3)), beta=1, phi_d2=1, phi_d3=1)
    assert universal_bound(inp) == 0


def test_mixed_order_delta_term_by_term():
    fi, fj = trace_kernel(2, 4), trace_kernel(3, 4)
    a1 = contraction_norm(fi, fi, 1)
    b1, b2 = contraction_norm(fj, fj, 1), contraction_norm(fj, fj, 2)
    # r = 1: 0! C(1,0) C(2,0) sqrt(3!) (a1 + b2); r = 2: 1! C(1,1) C(2,1) sqrt(1!) b1
    expect = 3 / math.sqrt(2) * (math.sqrt(6) * (a1 + b2) + 2 * b1) + math.sqrt(6 * 3 * b1)
    assert delta_ij(fi, fj) == pytest.approx(expect, rel=1e-12)
    with pytest.raises(ValueError):
        delta_ij(fj, fi)


def test_delta_symmetric_for_equal_orders():
    f, g = normalized_kernel(3, 4), normalized_kernel(3, 5)
    assert delta_ij(f, g) == pytest.approx(delta_ij(g, f), rel=1e-14)


def test_bound_input_validation():
    with pytest.raises(ValueError, match="variance"):
        BoundInput((trace_kernel(2, 4),), beta=1, phi_d2=1, phi_d3=1)
    with pytest.raises(ValueError, match="increasing"):
        BoundInput((normalized_kernel(3, 4), normalized_kernel(2, 4)), beta=1, phi_d2=1, phi_d3=1)
    g = normalized_kernel(2, 4)
    inp = BoundInput((g,), beta=1, phi_d2=1, phi_d3=1)
    with pytest.raises(ValueError, match="below"):
        BoundInput((g,), beta=1, phi_d2=1, phi_d3=1, K=inp.K_value / 2)


def test_bound_is_monotone_in_each_input():
    g2, g3 = normalized_kernel(2, 5), normalized_kernel(3, 5)
    base = dict(kernels=(g2, g3), beta=1.0, phi_d2=1.0, phi_d3=0.5)
    b0 = universal_bound(BoundInput(**base))
    K0 = BoundInput(**base).K_value
    for key, val in (("beta", 1.5), ("phi_d2", 2.0), ("phi_d3", 1.0), ("K", 2 * K0)):
        assert universal_bound(BoundInput(**{**base, key: val})) > b0
    # contraction norms enter linearly with positive weights
    lo = delta_from_norms(2, 3, lambda s: 0.1, lambda s: 0.1)
    hi = delta_from_norms(2, 3, lambda s: 0.1, lambda s: 0.2)
    assert hi > lo


def test_bound_decreases_with_N():
    vals, contr = [], []
    for N in (4, 8, 16, 32):
        t = bound_terms(BoundInput((normalized_kernel(2, N),), beta=1, phi_d2=1, phi_d3=1))
        vals.append(t["contraction"] + t["influence"])
        contr.append(math.sqrt(N) * t["contraction"])
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert max(contr) <= 2 * contr[0]


def test_fourth_moment_gaussian_control():
    x = np.random.default_rng(0).standard_normal(100_000)
    g = fourth_moment_gap(x)
    assert g.gap <= 5 * g.stderr
    assert g.n == 100_000


def test_fourth_moment_constant_samples():
    c = 1.5
    g = fourth_moment_gap(np.full(2000, c))
    assert g.gap == pytest.approx(2 * c**4)
    assert g.stderr == 0


def test_fourth_moment_needs_samples():
    with pytest.raises(ValueError):
        fourth_moment_gap(np.zeros(999))


def test_gaussian_target():
    assert GaussianTarget((2, 3), "trace").variances == (2.0, 3.0)
    assert GaussianTarget((2, 3)).char_function([1, 1]) == pytest.approx(math.exp(-1))
    with pytest.raises(ValueError):
        GaussianTarget((2,), "other")


def test_test_functions():
    phi = make_test_function("cos", 1)
    assert phi.gaussian_mean([1.0]) == pytest.approx(0.60653066, abs=1e-8)
    phi2 = make_test_function("cos", 2)
    assert (phi2.d2, phi2.d3) == (1.0, 0.5)
    assert gaussian_expectation(phi2, [1, 1]) == pytest.approx(math.exp(-1), rel=1e-12)
    gb = make_test_function("gauss", 2, [0.3])
    assert gaussian_expectation(gb, [1, 2]) == pytest.approx(gb.gaussian_mean([1, 2]), rel=1e-10)
    with pytest.raises(ValueError):
        make_test_function("bump", 1)


def test_constant_phi_discrepancy_zero(rademacher):
    rows = berry_rate_experiment(rademacher, (2,), [4, 8], 50, make_test_function("const", 1), seed=1)
    assert [r["discrepancy"] for r in rows] == [0.0, 0.0]


def test_rate_experiment_columns(normal):
    rows = berry_rate_experiment(normal, (2, 3), [4, 6], 200, make_test_function("cos", 2), seed=2)
    assert [r["N"] for r in rows] == [4, 6]
    for r in rows:
        assert r["scaled_discrepancy"] == pytest.approx(r["N"] ** 0.25 * r["discrepancy"])
    with pytest.raises(ValueError):
        berry_rate_experiment(normal, (2, 3), [4], 10, make_test_function("cos", 1))
