"""Bidding policies for the repeated mechanism.

Time-independent policies expose ``report_batch`` so the engine can compute
a whole horizon of reports at once.  Adaptive policies see only the public
history: earlier reports and allocations of every agent.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import ConfigError


@dataclass
class PublicHistory:
    reports: np.ndarray  # (t, n, m) reports after zeroing
    allocations: np.ndarray  # (t, n, m) bool

    @property
    def t(self) -> int:
        return len(self.reports)


class Strategy:
    time_independent = True
    kind = "abstract"

    def report(self, value: np.ndarray, history: PublicHistory | None = None):
        """Report for one round.  Returns ``(report, unbounded_flags)``."""
        r, u = self.report_batch(np.asarray(value, dtype=float)[None])
        return r[0], u[0]

    def report_batch(self, values: np.ndarray):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind}


class Truthful(Strategy):
    kind = "truthful"

    def report_batch(self, values):
        return values.copy(), np.zeros(values.shape, dtype=bool)

    def __repr__(self):
        return "Truthful()"


class ValueScaling(Strategy):
    """Report value / beta; beta = 0 is the unbounded report."""

    kind = "value_scaling"

    def __init__(self, beta: float):
        if not np.isfinite(beta) or beta < 0:
            raise ConfigError(f"beta must be finite and >= 0, got {beta}")
        self.beta = float(beta)

    def report_batch(self, values):
        if self.beta == 0:
            return np.zeros(values.shape), np.ones(values.shape, dtype=bool)
        return values / self.beta, np.zeros(values.shape, dtype=bool)

    def to_dict(self):
        return {"kind": self.kind, "beta": self.beta}

    def __repr__(self):
        return f"ValueScaling({self.beta!r})"


class TimeIndependentMap(Strategy):
    """Apply a fixed value-to-report map, given as a callable or a lookup table.

    With a table ``(xs, ys)`` the report is linearly interpolated.
    """

    kind = "map"

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray] | None = None,
                 xs=None, ys=None):
        if fn is None:
            if xs is None or ys is None:
                raise ConfigError("map strategy needs a callable or a lookup table")
            xs, ys = np.asarray(xs, float), np.asarray(ys, float)
            fn = lambda v: np.interp(v, xs, ys)  # noqa: E731
            self.table = (xs.tolist(), ys.tolist())
        else:
            self.table = None
        self.fn = fn

    def report_batch(self, values):
        return np.asarray(self.fn(values), dtype=float), np.zeros(values.shape, dtype=bool)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.table is not None:
            d["xs"], d["ys"] = self.table
        return d


class Adaptive(Strategy):
    """Report computed from the current value and the public history."""

    time_independent = False
    kind = "adaptive"

    def __init__(self, fn: Callable[[np.ndarray, PublicHistory], np.ndarray]):
        self.fn = fn

    def report(self, value, history=None):
        r = np.asarray(self.fn(np.asarray(value, float), history), dtype=float).reshape(np.shape(value))
        return r, np.zeros(r.shape, dtype=bool)

    def report_batch(self, values):
        raise TypeError("adaptive strategies cannot report without history")


def strategy_from_dict(d: dict) -> Strategy:
    kind = d.get("kind")
    if kind == "truthful":
        return Truthful()
    if kind == "value_scaling":
        return ValueScaling(float(d["beta"]))
    if kind == "map":
        return TimeIndependentMap(xs=d["xs"], ys=d["ys"])
    raise ConfigError(f"unsupported strategy kind {kind!r}")


def strategies_from_specs(specs: list[dict], n: int) -> list[Strategy]:
    out: list[Strategy | None] = [None] * n
    for d in specs:
        a = int(d["agent"])
        if not 0 <= a < n:
            raise ConfigError(f"strategy for unknown agent {a}")
        out[a] = strategy_from_dict(d)
    if any(s is None for s in out):
        raise ConfigError("every agent needs a strategy")
    return out  # type: ignore[return-value]


def pacing_profile(beta) -> list[Strategy]:
    return [ValueScaling(float(b)) for b in np.asarray(beta, dtype=float)]


@dataclass
class DeviationGain:
    mean: float  # per-round gain of the deviator, averaged over replications
    ci: tuple[float, float]  # 99% normal interval
    replications: int
    T: int

    @property
    def upper(self) -> float:
        return self.ci[1]

    def to_dict(self) -> dict:
        return {"mean": self.mean, "ci": list(self.ci), "replications": self.replications, "T": self.T}


# utilities of the most recent baseline, reused across deviations
_BASELINE_CACHE: dict = {}


def deviation_gain(instance, kind, baseline, deviator: int, alt: Strategy, replications: int = 200,
                   T: int | None = None, seed: int | None = None) -> DeviationGain:
    """Paired estimate of U_i(alt, others at baseline) - U_i(baseline).

    Both arms replay the same value draws (same seeds), so the difference is
    taken run by run.
    """
    from .reduction import replication_seeds, simulate_summary

    beta = np.asarray(getattr(baseline, "beta", baseline), dtype=float)
    if not 0 <= deviator < len(beta):
        raise ConfigError(f"no agent {deviator}")
    T = instance.T if T is None else int(T)
    seeds = replication_seeds(instance.seed if seed is None else seed, replications)
    base = pacing_profile(beta)
    dev = list(base)
    dev[deviator] = alt
    key = (id(instance), str(kind), tuple(beta.tolist()), tuple(seeds), T)
    if key not in _BASELINE_CACHE:
        _BASELINE_CACHE.clear()
        # the instance rides along so its id cannot be recycled while cached
        _BASELINE_CACHE[key] = (instance, simulate_summary(instance, kind, base, seeds, T=T)["utilities"])
    u0 = _BASELINE_CACHE[key][1][:, deviator]
    u1 = simulate_summary(instance, kind, dev, seeds, T=T)["utilities"][:, deviator]
    diff = u1 - u0
    mean = float(diff.mean())
    hw = 2.5758293035489004 * float(diff.std(ddof=1)) / np.sqrt(replications) if replications > 1 else 0.0
    return DeviationGain(mean, (mean - hw, mean + hw), replications, T)
