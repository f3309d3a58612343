"""Expected spend of pacing profiles and the fixed point that balances it.

A pacing profile ``beta`` makes agent i report ``V_i / beta_i`` every round.
Its expected per-round spend is estimated by Monte Carlo without budget
dynamics; the solver searches for the profile whose spend matches each
agent's share (or sets ``beta_i = 0`` when even unbounded reports underspend).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .mechanisms import get_mechanism
from .model import Instance, rng_stream, sample_values
from .reduction import replication_seeds, simulate_summary
from .strategies import pacing_profile

Z99 = 2.5758293035489004
MIN_SAMPLES = 1000
TINY_BETA = 1e-9


class NonConvergence(RuntimeError):
    """The solver ran out of sweeps; carries the last iterate for diagnosis."""

    def __init__(self, profile: "PacingProfile"):
        super().__init__(f"pacing solver did not converge after {profile.iterations} sweeps; "
                         f"residuals {np.round(profile.residuals, 6).tolist()}")
        self.profile = profile


@dataclass
class SpendEstimate:
    mean: np.ndarray
    half_width: np.ndarray  # 99% normal-approximation half-width
    samples: int


@dataclass
class PacingProfile:
    beta: np.ndarray
    residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    iterations: int = 0
    samples: int = 0
    converged: bool = True

    def to_dict(self) -> dict:
        return {"beta": self.beta.tolist(), "residuals": self.residuals.tolist(),
                "iterations": self.iterations, "samples": self.samples, "converged": self.converged}

    @classmethod
    def from_dict(cls, d: dict) -> "PacingProfile":
        return cls(np.asarray(d["beta"], float), np.asarray(d.get("residuals", []), float),
                   int(d.get("iterations", 0)), int(d.get("samples", 0)), bool(d.get("converged", True)))


def load_profile(path) -> PacingProfile:
    from pathlib import Path

    from .model import ConfigError

    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"beta file not found: {p}")
    return PacingProfile.from_dict(json.loads(p.read_text(encoding="utf-8")))


class _SpendSampler:
    """Fixed sample of rounds; evaluates per-agent payments for any profile."""

    def __init__(self, instance: Instance, kind, samples: int, rng: np.random.Generator, stratified=True):
        self.mech = get_mechanism(kind)
        self.costs = instance.dist.costs()
        self.V, self.comp = sample_values(instance.dist, rng, samples, stratified=stratified)

    def payments(self, beta: np.ndarray) -> np.ndarray:
        beta = np.asarray(beta, dtype=float)
        zero = beta == 0
        scale = np.where(zero, 1.0, beta)
        reports = self.V / scale[None, :, None]
        unb = np.broadcast_to(zero[None, :, None], self.V.shape)
        unb = unb & np.ones(self.V.shape, bool)
        reports = np.where(unb, 0.0, reports)
        _, pay = self.mech.run_batch(reports, unb if zero.any() else None, self.costs, self.comp)
        return pay

    def spend(self, beta) -> np.ndarray:
        return self.payments(beta).mean(axis=0)


def estimate_spend(instance: Instance, kind, beta, samples: int = 100_000,
                   rng: np.random.Generator | None = None, stratified: bool = True) -> SpendEstimate:
    """Mean per-round payment of every agent under the pacing profile ``beta``."""
    if samples < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {samples}")
    rng = rng_stream(instance.seed, "spend") if rng is None else rng
    pay = _SpendSampler(instance, kind, samples, rng, stratified).payments(beta)
    hw = Z99 * pay.std(axis=0, ddof=1) / math.sqrt(samples)
    return SpendEstimate(pay.mean(axis=0), hw, samples)


def _bisect_coordinate(spend_i, target: float, hi: float, width: float = 1e-8) -> float:
    """Smallest beta in [0, hi] whose spend is at most ``target`` (spend is non-increasing)."""
    lo = 0.0
    while hi - lo > width:
        mid = 0.5 * (lo + hi)
        if spend_i(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def solve_pacing(instance: Instance, kind, tol: float = 1e-3, max_iters: int = 50,
                 schedule: tuple[int, ...] = (10_000, 100_000), seed: int | None = None,
                 beta0=None, average: int = 8) -> PacingProfile:
    """Damped Gauss-Seidel over agents with a bisection per coordinate.

    Each coordinate update draws one sample and reuses it for every
    bisection step, so the empirical spend is monotone in that coordinate.
    Sweeps escalate through ``schedule`` once residuals are small.  At the
    last sample size, after the first in-tolerance sweep, ``average``
    iterates are averaged and the mean must pass a residual check on a
    fresh sample ``average`` times larger.
    """
    n, m = instance.n, instance.m
    alpha = instance.shares
    seed = instance.seed if seed is None else seed
    beta = np.ones(n) if beta0 is None else np.asarray(beta0, dtype=float).copy()
    stage = 0
    damping = 1.0
    prev_sign = np.zeros(n)
    residuals = np.full(n, np.inf)
    kept: list[np.ndarray] = []
    for it in range(1, max_iters + 1):
        N = schedule[stage]
        for i in range(n):
            sampler = _SpendSampler(instance, kind, N, rng_stream(seed, "solver", it, i))

            def spend_i(b, i=i, sampler=sampler):
                trial = beta.copy()
                trial[i] = b
                return sampler.payments(trial)[:, i].mean()

            if spend_i(TINY_BETA) < alpha[i] - tol:
                target_beta = 0.0
            else:
                target_beta = _bisect_coordinate(spend_i, alpha[i], m / alpha[i])
            beta[i] = beta[i] + damping * (target_beta - beta[i])
        if stage == len(schedule) - 1 and kept:
            # averaging phase: collect iterates, then test their mean once
            kept.append(beta.copy())
            if len(kept) >= average:
                mean_beta = np.mean(kept, axis=0)
                final = _SpendSampler(instance, kind, N * average, rng_stream(seed, "final", it)).spend(mean_beta)
                residuals = np.where(mean_beta > 0, np.abs(final - alpha), np.maximum(final - alpha, 0.0))
                if np.all(residuals <= tol):
                    return PacingProfile(mean_beta, residuals, it, N * average, True)
                kept.clear()
            continue
        check = _SpendSampler(instance, kind, N, rng_stream(seed, "residual", it)).spend(beta)
        residuals = np.where(beta > 0, np.abs(check - alpha), np.maximum(check - alpha, 0.0))
        sign = np.sign(check - alpha)
        if damping == 1.0 and np.any((sign * prev_sign < 0) & (residuals > tol)):
            damping = 0.5
        prev_sign = sign
        if np.all(residuals <= tol):
            if stage < len(schedule) - 1:
                stage += 1
            else:
                kept.append(beta.copy())
                if average <= 1:
                    return PacingProfile(beta, residuals, it, N, True)
        elif stage < len(schedule) - 1 and np.all(residuals <= 5 * tol):
            stage += 1
    raise NonConvergence(PacingProfile(beta, residuals, max_iters, schedule[stage], False))


@dataclass
class FocalReport:
    runs: int
    T: int
    early_fraction: float
    cutoff: float
    spend_ratio: np.ndarray  # mean realized spend / (share * T), per agent
    utilities: np.ndarray
    min_depletion: np.ndarray  # per run

    def to_dict(self) -> dict:
        return {"runs": self.runs, "T": self.T, "early_fraction": self.early_fraction,
                "cutoff": self.cutoff, "spend_ratio": self.spend_ratio.tolist(),
                "utilities": self.utilities.tolist()}


def early_cutoff(T: int) -> float:
    return T - 2.0 * math.sqrt(T) * math.log(T)


def verify_focal(instance: Instance, kind, beta, runs: int = 200, T: int | None = None,
                 seed: int | None = None) -> FocalReport:
    """Run full simulations at ``beta`` and measure early depletion and realized spend."""
    T = instance.T if T is None else int(T)
    seed = instance.seed if seed is None else seed
    b = beta.beta if isinstance(beta, PacingProfile) else np.asarray(beta, dtype=float)
    seeds = replication_seeds(seed, runs)
    s = simulate_summary(instance, kind, pacing_profile(b), seeds, T=T)
    tau_min = s["depletion_times"].min(axis=1)
    cut = early_cutoff(T)
    return FocalReport(runs, T, float(np.mean(tau_min < cut)), cut,
                       s["spend"].mean(axis=0) / (instance.shares * T), s["utilities"].mean(axis=0), tau_min)
