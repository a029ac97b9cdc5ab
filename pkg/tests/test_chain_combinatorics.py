import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tracefluct.chain_combinatorics import (
    Chain,
    ClassSpec,
    FreedomCertificate,
    Partition,
    admissible_bijections,
    all_singletons,
    bracket,
    canonical_labels,
    cardinality_bound_check,
    chaos_remainder_cross_exact,
    check_freedom,
    cyclic_pairs,
    enumerate_class,
    enumerate_d,
    enumerate_pattern,
    g_set,
    in_class,
    one_block,
    partitions,
    pattern_counts,
    pattern_of,
    q_subset,
    remainder_variance_by_pattern,
    remainder_variance_exact,
)
from tracefluct.errors import BudgetExceededError

BELL = {1: 1, 2: 2, 3: 5, 4: 15, 5: 52, 6: 203}


@pytest.mark.parametrize("k", range(1, 7))
def test_partition_counts(k):
    ps = partitions(k)
    assert len(ps) == BELL[k] == len(set(ps))
    assert len(q_subset(k)) == BELL[k] - 1


def test_small_partition_lists():
    assert q_subset(2) == [one_block(2)]
    assert q_subset(1) == []
    assert all_singletons(3) not in q_subset(3)
    with pytest.raises(BudgetExceededError):
        partitions(7)


def test_partition_string_roundtrip():
    p = Partition.parse("{1,4,5}|{2}|{3}")
    assert str(p) == "{1,4,5}|{2}|{3}"
    assert p.r == 3 and p.singletons == (2, 3) and p.singleton_blocks == (2, 3)
    assert Partition.from_blocks([[3], [5, 1, 4], [2]]) == p
    with pytest.raises(ValueError):
        Partition(3, ((1, 2), (2, 3)))


def test_cyclic_pairs_wrap():
    assert cyclic_pairs((1, 2, 3)) == [(1, 2), (2, 3), (3, 1)]


def test_pattern_of_examples():
    assert pattern_of((5, 5, 5, 5)) == one_block(4)
    assert pattern_of((1, 2, 1, 2)) == Partition.parse("{1,3}|{2,4}")
    for v in enumerate_d(4, 3):
        assert pattern_of(v) == all_singletons(3)


def test_enumerate_d_examples():
    assert len(enumerate_d(3, 2)) == 6
    assert len(enumerate_d(2, 3)) == 6
    assert enumerate_d(1, 2) == [] and enumerate_d(1, 5) == []


@pytest.mark.parametrize("N,k", [(3, 2), (3, 3), (4, 3), (3, 4), (2, 5)])
def test_enumerate_d_against_filter(N, k):
    brute = [v for v in itertools.product(range(1, N + 1), repeat=k) if len(set(cyclic_pairs(v))) == k]
    assert enumerate_d(N, k) == brute


def test_vectorized_labels_match_scalar():
    rng = np.random.default_rng(0)
    codes = rng.integers(0, 4, size=(200, 6))
    labels = canonical_labels(codes)
    for row, lab in zip(codes, labels):
        first = {}
        expect = [first.setdefault(c, len(first)) for c in row]
        assert list(lab) == expect


@pytest.mark.parametrize("N", range(1, 7))
@pytest.mark.parametrize("k", range(1, 5))
def test_patterns_partition_the_cube(N, k):
    counts = pattern_counts(k, N)
    assert sum(counts.values()) == N**k
    assert counts.get(all_singletons(k), 0) == len(enumerate_d(N, k))
    for pi, c in counts.items():
        assert len(enumerate_pattern(pi, N)) == c


def test_one_block_chains():
    chains = enumerate_class(one_block(2), 3)
    assert len(chains) == 3
    assert all(set(c.upper) == set(c.lower) and len(set(c.upper)) == 1 for c in chains)


def test_pinned_membership_example():
    c = Chain((3, 3), (3, 3), 3)
    assert in_class(c, one_block(2), "pinned", 1, 1)
    assert str(c) == "(3,3)(3,3)(3,3)(3,3)"


def test_singleton_chain_examples():
    # a chain built from [5] with partition {1,2,3}|{4}|{5}|{6}
    c = Chain((1, 1, 1, 1, 2, 5), (2, 2, 2, 2, 5, 1), 5)
    assert in_class(c, Partition.parse("{1,2,3}|{4}|{5}|{6}"))
    c = Chain((1, 1, 1, 2, 5), (2, 2, 2, 5, 1), 5)
    pi = Partition.parse("{1,2}|{3}|{4}|{5}")
    assert in_class(c, pi, "mapped", R=((2, 4), (3, 2), (4, 3)))
    assert not in_class(c, pi, "mapped", R=((2, 2),))


THREE_BLOCK = Partition.parse("{1,2}|{3,5}|{4,6}")


def test_three_block_class_has_three_degrees_of_freedom():
    spec = ClassSpec(THREE_BLOCK, "pinned", 1, 1)
    for N in (2, 3):
        assert len(spec.enumerate(N)) <= N**3
    assert check_freedom(spec, FreedomCertificate({1, 4}, {4}), [2, 3])


def test_undersized_certificate_fails():
    spec = ClassSpec(THREE_BLOCK, "pinned", 1, 1)
    assert not check_freedom(spec, FreedomCertificate({1}), [2, 3])


def test_one_block_freedom():
    spec = ClassSpec(one_block(3))
    assert check_freedom(spec, FreedomCertificate({1}), [2, 3, 4])
    assert [len(spec.enumerate(N)) for N in (2, 3, 4)] == [2, 3, 4]


@pytest.mark.parametrize("k", [2, 3, 4])
def test_enumerate_class_equals_generate_then_filter(k):
    for pi in q_subset(k):
        for variant in ("plain", "pinned"):
            u = v = 1 if variant == "pinned" else None
            for N in (2, 3):
                vecs = enumerate_pattern(pi, N)
                filtered = {(i, j) for i in vecs for j in vecs
                            if in_class(Chain(i, j, N), pi, variant, u, v)}
                fast = {(c.upper, c.lower) for c in enumerate_class(pi, N, variant, u, v)}
                assert fast == filtered


def test_cardinality_table_columns():
    rows = cardinality_bound_check(2, [5])
    assert rows == [{"partition": "{1,2}", "N": 5, "cardinality": 5, "ratio": 1.0, "theta": 1,
                     "within_theta": True}]


def test_admissible_bijections_count():
    # with all blocks singletons every bijection of [r] qualifies
    assert len(admissible_bijections(all_singletons(3))) == 6
    pi = Partition.parse("{1,2}|{3}")
    maps = admissible_bijections(pi)
    # block 2 is the only singleton; {1: 1, 2: 2} pairs block 1 with itself
    assert sorted(map(sorted, (m.items() for m in maps))) == [[(1, 2), (2, 1)], [(2, 2)]]


def test_remainder_variance_examples(normal, rademacher):
    assert remainder_variance_exact(5, 2, normal) == Fraction(2, 5)
    for N in range(1, 6):
        assert remainder_variance_exact(N, 2, rademacher) == 0
    assert remainder_variance_exact(4, 1, normal) == 0
    diag = remainder_variance_by_pattern(5, 2, normal)
    assert diag == {one_block(2): Fraction(2, 5)}


def test_scaled_remainder_variance_is_bounded(rademacher):
    vals = [N * remainder_variance_exact(N, 3, rademacher) for N in range(2, 7)]
    assert max(vals) <= 1


def test_remainder_variance_against_direct_double_sum(kurtotic):
    N, k = 3, 3
    outside = [v for v in itertools.product(range(1, N + 1), repeat=k) if len(set(cyclic_pairs(v))) < k]
    direct = sum((bracket(i, j, kurtotic) for i in outside for j in outside), Fraction(0)) / N**k
    assert remainder_variance_exact(N, k, kurtotic) == direct


@pytest.mark.parametrize("k,N", [(2, 3), (3, 3), (3, 4)])
def test_nonvanishing_pairs_sit_in_chain_classes(normal, kurtotic, k, N):
    for dist in (normal, kurtotic):
        for pi in q_subset(k):
            for i, j in g_set(pi, N, dist):
                assert in_class(Chain(i, j, N), pi)


def test_cross_term_vanishes_for_symmetric_laws(rademacher, normal):
    # odd-moment-free laws: E[J R] involves a site seen an odd number of times
    for N in (2, 3, 4):
        assert chaos_remainder_cross_exact(N, 2, normal) == 0
        assert chaos_remainder_cross_exact(N, 3, rademacher) == 0


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=7))
def test_pattern_of_is_consistent_with_pairs(vec):
    pi = pattern_of(vec)
    pairs = cyclic_pairs(vec)
    lab = pi.labels
    for a in range(len(vec)):
        for b in range(len(vec)):
            assert (pairs[a] == pairs[b]) == (lab[a] == lab[b])
