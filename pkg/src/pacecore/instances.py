"""Ready-made instances: lower-bound families, DWL witnesses, smoke tests."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .mechanisms import harmonic_profile
from .model import (Atom, Box, ConfigError, DistributionSpec, Instance, PermutedAtom,
                    ZeroOneSingleGood, single_good_instance)

VARIANTS = ("main", "smoothed")
MAIN_PERTURBATION = 1e-6


@dataclass
class LowerBoundSpec:
    n: int
    eps: float = 0.01
    alpha_prime: float = 0.5
    variant: str = "main"
    T: int = 10_000
    seed: int = 0


def make_lower_bound(spec: LowerBoundSpec) -> Instance:
    """Instance on which paced Moulin leaves every shared round unserved.

    ``main``: shares 1/(2n); a shared round with probability 1/2 where the
    agents hold the values 1/j - eps in random order, and one selfish round
    per agent (value 1 for that agent, 0 elsewhere).  Atoms get a tiny
    perturbation so spend is continuous.

    ``smoothed``: every value is scaled by (1 - eps) and blurred by uniform
    noise of width eps, shared rounds have probability ``alpha_prime`` and
    the shares equal the exact expected spend at beta = 1 - eps.
    """
    n, eps = int(spec.n), float(spec.eps)
    if n < 1:
        raise ConfigError("need n >= 1")
    if spec.variant not in VARIANTS:
        raise ConfigError(f"unknown variant {spec.variant!r}; pick one of {VARIANTS}")
    cost = ZeroOneSingleGood(n, 1)
    if spec.variant == "main":
        if not 0 < eps < 1.0 / n:
            raise ConfigError(f"eps must lie in (0, 1/n) for n={n}, got {eps}")
        base = (1.0 / np.arange(1, n + 1) - eps).reshape(n, 1)
        comps = [(0.5, PermutedAtom(base, cost))]
        comps += [(0.5 / n, Atom(np.eye(n)[:, [i]], cost)) for i in range(n)]
        dist = DistributionSpec(comps, MAIN_PERTURBATION)
        return Instance(n, 1, spec.T, np.full(n, 0.5 / n), dist, spec.seed)

    a = float(spec.alpha_prime)
    if not 0 < a < 0.5:
        raise ConfigError(f"alpha_prime must lie in (0, 1/2), got {a}")
    if not 0 < eps < 1.0 / (2 * n * n):
        raise ConfigError(f"eps must lie in (0, 1/(2n^2)) for n={n}, got {eps}")
    selfish = a / (n * (1 - n * eps))
    rest = 1.0 - a - n * selfish
    if rest < 0:
        raise ConfigError(f"alpha_prime={a} and eps={eps} leave negative probability mass")
    shrink = 1.0 - eps
    top = harmonic_profile(n, eps)
    comps = []
    perms = list(itertools.permutations(range(n)))
    for p in perms:
        hi = shrink * top[list(p)]
        comps.append((a / len(perms), Box((hi - shrink * eps).reshape(n, 1), hi.reshape(n, 1), cost)))
    for i in range(n):
        lo = np.full(n, 0.0)
        hi = np.full(n, shrink * eps)
        lo[i], hi[i] = shrink, 1.0
        comps.append((selfish, Box(lo.reshape(n, 1), hi.reshape(n, 1), cost)))
    if rest > 0:
        comps.append((rest, Box(np.zeros((n, 1)), np.full((n, 1), shrink * eps), cost)))
    # absorb float rounding so the mixture sums to one
    total = sum(p for p, _ in comps)
    comps[-1] = (comps[-1][0] + 1.0 - total, comps[-1][1])
    dist = DistributionSpec(comps, 0.0)
    return Instance(n, 1, spec.T, np.full(n, selfish), dist, spec.seed)


def lower_bound_ratio(n: int, eps: float) -> float:
    """Per-agent utility ratio the grand coalition gets from the shared rounds."""
    return sum(1.0 / j for j in range(1, n + 1)) - n * eps


def make_harmonic_dwl_witness(n: int, eps: float) -> np.ndarray:
    if n < 1:
        raise ConfigError("need n >= 1")
    if not 0 <= eps < 1.0 / (2 * n * n):
        raise ConfigError(f"eps must lie in [0, 1/(2n^2)) for n={n}, got {eps}")
    return harmonic_profile(n, eps)


def uniform_single_agent(share: float = 0.5, T: int = 10_000, seed: int = 0) -> Instance:
    return single_good_instance([0.0], [1.0], [share], T=T, seed=seed)


def symmetric_pair(share: float = 0.25, T: int = 10_000, seed: int = 0) -> Instance:
    return single_good_instance([0.0, 0.0], [1.0, 1.0], [share, share], T=T, seed=seed)


def correlated_pair(T: int = 10_000, seed: int = 0, shares=(0.3, 0.2)) -> Instance:
    """Two agents whose values move together: both high, one high, or both low."""
    cost = ZeroOneSingleGood(2, 1)

    def box(lo, hi):
        return Box(np.asarray(lo, float).reshape(2, 1), np.asarray(hi, float).reshape(2, 1), cost)

    comps = [
        (0.35, box([0.5, 0.5], [1.0, 1.0])),
        (0.25, box([0.5, 0.0], [1.0, 0.4])),
        (0.2, box([0.0, 0.5], [0.4, 1.0])),
        (0.2, box([0.0, 0.0], [0.3, 0.3])),
    ]
    return Instance(2, 1, T, np.asarray(shares, float), DistributionSpec(comps), seed)


def expected_blocking_utility(instance: Instance) -> float:
    """Mean per-agent value in the shared rounds of a ``main`` lower-bound instance."""
    n = instance.n
    return 0.5 * (sum(1.0 / j for j in range(1, n + 1)) - n * _main_eps(instance)) / n


def _main_eps(instance: Instance) -> float:
    _, comp = instance.dist.components[0]
    if not isinstance(comp, PermutedAtom):
        raise ConfigError("not a main-variant lower-bound instance")
    return float(1.0 - comp.base.max())


__all__ = ["LowerBoundSpec", "make_lower_bound", "lower_bound_ratio", "make_harmonic_dwl_witness",
           "uniform_single_agent", "symmetric_pair", "correlated_pair", "expected_blocking_utility",
           "VARIANTS"]
