"""Generators shared by the audit tests."""

import numpy as np

from pacecore.mechanisms import run_mechanism
from pacecore.model import Atom, DistributionSpec, Instance, ZeroOneSingleGood

KINDS = ("proportional", "moulin", "potential")


def atom_instance(probs, vals, shares, seed=0, T=1000):
    vals = np.asarray(vals, float)
    n = vals.shape[1]
    cost = ZeroOneSingleGood(n, 1)
    dist = DistributionSpec([(float(p), Atom(v.reshape(n, 1), cost)) for p, v in zip(probs, vals)], 0.0)
    return Instance(n, 1, T, np.asarray(shares, float), dist, seed)


def tiny_case(rng, kind, balanced):
    """Random instance with n <= 3 agents and <= 6 atoms plus a pacing profile.

    With ``balanced`` the shares are set to the exact expected spend of the
    profile, so every agent spends its share.  Otherwise shares are random.
    """
    while True:
        n, K = int(rng.integers(1, 4)), int(rng.integers(2, 7))
        probs = rng.dirichlet(np.ones(K))
        vals = np.round(rng.uniform(0, 1, size=(K, n)), 2)
        beta = np.round(rng.uniform(0.2, 1.2, size=n), 2)
        if not balanced:
            shares = rng.dirichlet(np.ones(n + 1))[:n] * rng.uniform(0.3, 1.0)
            return atom_instance(probs, vals, shares, int(rng.integers(1 << 30))), beta
        cost = ZeroOneSingleGood(n, 1)
        spend = sum(p * run_mechanism(kind, (v / beta).reshape(n, 1), cost).payments for p, v in zip(probs, vals))
        if np.all(spend > 1e-3) and spend.sum() < 1:
            return atom_instance(probs, vals, spend, int(rng.integers(1 << 30))), beta
