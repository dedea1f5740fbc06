"""Colour function and permutation weights of the multi-magnon chi-function."""
from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidM, TooLarge

MAX_M = 5


@dataclass(frozen=True)
class ColorMap:
    M: int
    c: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.c)

    def fiber(self, k: int) -> list[int]:
        """0-based indices l with c(l) == k."""
        return [i for i, ck in enumerate(self.c) if ck == k]


@dataclass(frozen=True)
class WeightedPermutation:
    s: tuple[int, ...]  # 1-based images s(1), ..., s(m)
    weight: int


def segment(k: int, M: int) -> range:
    """1-based index range of the segment S_k."""
    lo = (k - 1) * (2 * M - k) // 2 + 1
    hi = k * (2 * M - k - 1) // 2
    return range(lo, hi + 1)


def color_map(M: int) -> ColorMap:
    if M == 1:
        return ColorMap(1, ())
    if M < 2:
        raise InvalidM(f"colour map needs M >= 1, got {M}")
    c = []
    for k in range(1, M):
        c.extend([k] * len(segment(k, M)))
    return ColorMap(M, tuple(c))


def weight(s, cm: ColorMap) -> int:
    """Coefficient of x_1...x_M in D_{c(s(1))} ... D_{c(s(m))} x_1^M, D_c = x_{c+1} d/dx_c.

    The rightmost operator acts first.  Only one monomial ever survives, so
    the coefficient is tracked alongside its exponent vector.
    """
    M = cm.M
    if cm.m == 0:
        return 1
    exps = [0] * (M + 1)
    exps[1] = M
    coef = 1
    for j in reversed(s):
        col = cm.c[j - 1]
        e = exps[col]
        if e == 0:
            return 0
        coef *= e
        exps[col] = e - 1
        exps[col + 1] += 1
    return coef if all(e == 1 for e in exps[1:]) else 0


def s0(cm: ColorMap) -> tuple[int, ...]:
    m = cm.m
    return tuple(m + 1 - j for j in range(1, m + 1))


def s0_weight(M: int) -> int:
    return math.prod(math.factorial(k) for k in range(2, M + 1))


def nonzero_permutations(cm: ColorMap, cap: int = 10) -> list[WeightedPermutation]:
    """All permutations of {1..m} with non-zero weight, in lexicographic order.

    Built right to left (the order in which operators act) so dead branches
    are cut as soon as an exponent would go negative.
    """
    m, M = cm.m, cm.M
    if m > cap:
        raise TooLarge(f"m = {m} exceeds enumeration cap {cap}")
    if m == 0:
        return [WeightedPermutation((), 1)]
    out = []
    tail: list[int] = []
    used = [False] * (m + 1)
    exps = [0] * (M + 1)
    exps[1] = M

    def rec(coef):
        if len(tail) == m:
            out.append(WeightedPermutation(tuple(reversed(tail)), coef))
            return
        for j in range(1, m + 1):
            if used[j]:
                continue
            col = cm.c[j - 1]
            e = exps[col]
            if e == 0:
                continue
            used[j] = True
            tail.append(j)
            exps[col] -= 1
            exps[col + 1] += 1
            rec(coef * e)
            exps[col + 1] -= 1
            exps[col] += 1
            tail.pop()
            used[j] = False

    rec(1)
    # every full sequence ends with exponent vector (1,...,1): m moves from x_1^M
    out.sort(key=lambda wp: wp.s)
    return out
