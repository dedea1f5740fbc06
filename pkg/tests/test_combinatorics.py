import itertools
import math

import pytest

from ellipchain.combinatorics import (
    color_map,
    nonzero_permutations,
    s0,
    s0_weight,
    segment,
    weight,
)
from ellipchain.errors import InvalidM, TooLarge
from oracles import all_weights_sympy


@pytest.mark.parametrize("M,c", [(2, (1,)), (3, (1, 1, 2)), (4, (1, 1, 1, 2, 2, 3))])
def test_small_color_maps(M, c):
    cm = color_map(M)
    assert cm.c == c
    assert cm.m == M * (M - 1) // 2


@pytest.mark.parametrize("M", range(2, 6))
def test_color_map_invariants(M):
    cm = color_map(M)
    assert list(cm.c) == sorted(cm.c)
    for j in range(1, M):
        assert cm.c.count(j) == M - j
        seg = segment(j, M)
        assert all(cm.c[i - 1] == j for i in seg)
    assert segment(1, M).start == 1
    assert segment(M - 1, M).stop - 1 == cm.m


def test_degenerate_m():
    cm = color_map(1)
    assert cm.m == 0
    assert weight((), cm) == 1
    assert [w.weight for w in nonzero_permutations(cm)] == [1]
    with pytest.raises(InvalidM):
        color_map(0)


def test_two_magnon_weight():
    cm = color_map(2)
    assert weight((1,), cm) == 2
    perms = nonzero_permutations(cm)
    assert [(w.s, w.weight) for w in perms] == [((1,), 2)]


@pytest.mark.parametrize("M", range(2, 6))
def test_s0_weight(M):
    cm = color_map(M)
    assert s0(cm) == tuple(range(cm.m, 0, -1))
    expected = math.prod(math.factorial(k) for k in range(2, M + 1))
    assert s0_weight(M) == expected
    assert weight(s0(cm), cm) == expected


def test_three_magnon_weights():
    cm = color_map(3)
    got = {w.s: w.weight for w in nonzero_permutations(cm)}
    assert got == {(1, 3, 2): 6, (2, 3, 1): 6, (3, 1, 2): 12, (3, 2, 1): 12}


@pytest.mark.parametrize("M", (2, 3, 4))
def test_weights_match_polynomial_expansion(M):
    cm = color_map(M)
    oracle = all_weights_sympy(cm.c, M)
    for s, w in oracle.items():
        assert weight(s, cm) == w
    pruned = {w.s: w.weight for w in nonzero_permutations(cm)}
    assert pruned == {s: w for s, w in oracle.items() if w != 0}


def test_five_magnons_pruned_enumeration_agrees_with_weight():
    cm = color_map(5)
    perms = nonzero_permutations(cm)
    assert all(w.weight == weight(w.s, cm) != 0 for w in perms)
    assert len({w.s for w in perms}) == len(perms)
    assert perms[-1].s == s0(cm)


def test_zero_weight_examples():
    cm = color_map(3)
    # acting with D_2 first on x_1^3 kills the monomial
    assert weight((1, 2, 3), cm) == 0
    assert sum(1 for s in itertools.permutations(range(1, 4)) if weight(s, cm)) == 4


def test_cap():
    with pytest.raises(TooLarge):
        nonzero_permutations(color_map(5), cap=9)
