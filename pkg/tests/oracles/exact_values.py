"""Independent exact computations whose outputs are frozen in frozen.json.

Written from the definitions with Fractions and brute-force enumeration;
shares no code with the package.  Regenerate with
``python3 tests/oracles/exact_values.py > tests/oracles/frozen.json``.
"""

import itertools
import json
from fractions import Fraction as F
from math import comb


def H(n):
    return sum(F(1, j) for j in range(1, n + 1))


def moulin_exhaustive(v):
    # largest S with min over S of v >= 1/|S|
    n = len(v)
    for k in range(n, 0, -1):
        for S in itertools.combinations(range(n), k):
            if all(v[i] >= F(1, k) for i in S):
                return set(S), [F(1, k) if i in S else F(0) for i in range(n)]
    return set(), [F(0)] * n


def potential_single(n, holders):
    # sum over nonempty I of c(union of I's goods) / (|I| binom(n, |I|)), 0-1 cost
    total = F(0)
    for k in range(1, n + 1):
        for I in itertools.combinations(range(n), k):
            if set(I) & holders:
                total += F(1, k * comb(n, k))
    return total


def potential_argmax_and_vcg(v):
    n = len(v)
    subsets = [set(S) for k in range(n + 1) for S in itertools.combinations(range(n), k)]

    def obj(S, skip=None):
        return sum(v[i] for i in S if i != skip) - potential_single(n, S)

    best = max(subsets, key=lambda S: (obj(S), len(S)))
    pay = []
    for i in range(n):
        if i not in best:
            pay.append(F(0))
            continue
        without = max(obj(S, i) for S in subsets if i not in S)
        pay.append(without - obj(best, i))
    return best, pay


def main():
    out = {}
    S, p = moulin_exhaustive([F(6, 10), F(6, 10), F(1, 10)])
    out["moulin_066_01"] = {"served": sorted(S), "pay": [float(x) for x in p]}
    v = [F(2, 10), F(4, 10), F(6, 10)]
    S, p = moulin_exhaustive(v)
    excluded = sum(v[i] for i in range(3) if i not in S)
    out["moulin_02_04_06"] = {"served": sorted(S), "dwl": float(max(excluded + sum(p) - 1, F(0)))}
    # social cost minimum over all 8 allocations of one good
    sc = min((1 if T else 0) + sum(v[i] for i in range(3) if i not in T)
             for k in range(4) for T in map(set, itertools.combinations(range(3), k)))
    realized = (1 if S else 0) + excluded
    out["moulin_02_04_06"]["sc_ratio"] = float(realized / sc)
    out["proportional_05_07"] = [float(F(5, 10) / F(12, 10)), float(F(7, 10) / F(12, 10))]
    best, pay = potential_argmax_and_vcg([F(9, 10), F(8, 10)])
    out["potential_09_08"] = {"served": sorted(best), "pay": [float(x) for x in pay],
                              "P_one": float(potential_single(2, {0})), "P_both": float(potential_single(2, {0, 1}))}
    out["potential_n3_one_holder"] = float(potential_single(3, {0}))
    for n, eps in [(2, F(1, 1000)), (5, F(1, 1000)), (5, F(1, 10000))]:
        v = [F(1)] + [F(1, j) - eps for j in range(2, n + 1)]
        S, p = moulin_exhaustive(v)
        excluded = sum(v[i] for i in range(n) if i not in S)
        out[f"harmonic_dwl_n{n}_eps{eps.denominator}"] = float(max(excluded + sum(p) - 1, F(0)))
    out["harmonic_numbers"] = {n: float(H(n)) for n in range(1, 7)}
    # item coverage min(cap, sum of covered weights)
    out["coverage_06_06_all"] = float(min(F(1), F(6, 10) + F(6, 10)))
    out["coverage_04_03_item2"] = float(min(F(1), F(3, 10)))
    print(json.dumps(out, indent=2, sort_keys=True))


if __name__ == "__main__":
    main()
