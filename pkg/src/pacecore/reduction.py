"""Repeated allocation with an artificial-currency budget ledger.

Every agent starts with ``share * T`` units of currency.  Each round the
engine samples values, collects reports, zeroes the reports of agents whose
balance is below the mechanism's largest possible payment, runs the one-shot
mechanism and debits the payments.

Balances are kept as integers in units of 1e-9 so the ledger identities
hold exactly.  Payments are rounded up to a whole unit, which keeps cost
coverage true in integer arithmetic as well.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .mechanisms import Mechanism, get_mechanism
from .model import ConfigError, Instance, rng_stream, sample_values
from .strategies import PublicHistory, Strategy

UNIT = 10**9
TRACE_SCHEMA = "pacecore-trace-v1"


class StrategyError(RuntimeError):
    def __init__(self, agent: int, round_: int, detail: str):
        super().__init__(f"agent {agent} returned an invalid report in round {round_}: {detail}")
        self.agent = agent
        self.round = round_


def to_units(x) -> np.ndarray:
    return np.rint(np.asarray(x, dtype=float) * UNIT).astype(np.int64)


def payment_units(p: np.ndarray, pmax_units: int) -> np.ndarray:
    u = np.ceil(np.asarray(p) * UNIT - 1e-6).astype(np.int64)
    return np.clip(u, 0, pmax_units)


@dataclass
class RoundRecord:
    t: int
    values: np.ndarray
    reports: np.ndarray
    unbounded: np.ndarray
    allocation: np.ndarray
    payments: np.ndarray  # currency units
    budgets_after: np.ndarray  # currency units
    depleted: np.ndarray  # flags in force during the round

    def to_dict(self) -> dict:
        return {
            "schema": TRACE_SCHEMA,
            "t": self.t,
            "values": self.values.tolist(),
            "reports": np.where(self.unbounded, -1.0, self.reports).tolist(),
            "unbounded": self.unbounded.tolist(),
            "allocation": self.allocation.astype(int).tolist(),
            "payments_units": self.payments.tolist(),
            "budgets_units": self.budgets_after.tolist(),
            "depleted": self.depleted.tolist(),
        }


@dataclass
class SimulationResult:
    """Full trace of one run.  Arrays are indexed by round first."""

    n: int
    m: int
    T: int
    shares: np.ndarray
    mechanism: str
    pmax_units: int
    values: np.ndarray  # (T, n, m)
    comp: np.ndarray  # (T,)
    reports: np.ndarray  # (T, n, m)
    unbounded: np.ndarray  # (T, n, m)
    allocation: np.ndarray  # (T, n, m) bool
    payments: np.ndarray  # (T, n) int64 units
    budgets: np.ndarray  # (T + 1, n) int64 units, row 0 is the initial balance
    costs: np.ndarray  # (T,) float
    depleted: np.ndarray  # (T, n) bool, flag in force during round t
    thinned: bool = False

    @property
    def utilities(self) -> np.ndarray:
        return (self.values * self.allocation).sum(axis=(0, 2)) / self.T

    @property
    def spend(self) -> np.ndarray:
        return self.payments.sum(axis=0) / UNIT

    @property
    def total_cost(self) -> float:
        return float(self.costs.sum())

    @property
    def depletion_times(self) -> np.ndarray:
        """First round (1-based) after which the balance is below p_max; T + 1 if never."""
        low = self.budgets[1:] < self.pmax_units
        first = np.where(low.any(axis=0), low.argmax(axis=0) + 1, self.T + 1)
        return first.astype(int)

    @property
    def records(self) -> list[RoundRecord]:
        return [self.record(t) for t in range(self.T)]

    def record(self, t: int) -> RoundRecord:
        return RoundRecord(t + 1, self.values[t], self.reports[t], self.unbounded[t], self.allocation[t],
                           self.payments[t], self.budgets[t + 1], self.depleted[t])

    def summary_rows(self) -> list[dict]:
        tau = self.depletion_times
        return [{"agent": i, "share": float(self.shares[i]), "utility": float(self.utilities[i]),
                 "spend": float(self.spend[i]), "depletion_time": int(tau[i])} for i in range(self.n)]


def _strategy_reports(strategies: Sequence[Strategy], V: np.ndarray):
    # V: (R, T, n, m) -> reports and flags for time-independent strategies
    reports = np.zeros(V.shape)
    unb = np.zeros(V.shape, dtype=bool)
    for i, s in enumerate(strategies):
        if s.time_independent:
            reports[:, :, i], unb[:, :, i] = s.report_batch(V[:, :, i])
    return reports, unb


def _validate_reports(rep: np.ndarray, unb: np.ndarray, t0: int):
    bad = ~unb & ~(np.isfinite(rep) & (rep >= 0))
    if bad.any():
        idx = np.argwhere(bad)[0]
        r, t, i = int(idx[0]), int(idx[1]), int(idx[2])
        raise StrategyError(i, t0 + t + 1, f"report {rep[tuple(idx)]!r}")


def _round_costs(alloc: np.ndarray, comp: np.ndarray, costs) -> np.ndarray:
    R, n, m = alloc.shape
    flat = alloc.reshape(R, n * m).astype(np.int64)
    masks = (flat << np.arange(n * m, dtype=np.int64)).sum(axis=1)
    out = np.zeros(R)
    for j, c in enumerate(costs):
        sel = comp == j
        if sel.any():
            out[sel] = c.evaluate(masks[sel])
    return out


def run_replications(instance: Instance, kind, strategies: Sequence[Strategy], seeds: Sequence[int],
                     T: int | None = None, keep_trace: bool = True):
    """Simulate one run per seed, stepping all runs in lockstep.

    A run with seed ``s`` is identical to ``simulate(instance.with_seed(s))``.
    With ``keep_trace=False`` only the summary arrays are returned.
    """
    mech: Mechanism = get_mechanism(kind)
    n, m = instance.n, instance.m
    T = instance.T if T is None else int(T)
    if len(strategies) != n:
        raise ConfigError(f"need {n} strategies, got {len(strategies)}")
    R = len(seeds)
    costs = instance.dist.costs()
    pmax_units = int(math.ceil(mech.p_max(n) * UNIT - 1e-6))
    V = np.zeros((R, T, n, m))
    comp = np.zeros((R, T), dtype=np.int64)
    for r, s in enumerate(seeds):
        V[r], comp[r] = sample_values(instance.dist, rng_stream(s, "sampling"), T)
    reports, unb = _strategy_reports(strategies, V)
    _validate_reports(reports, unb, 0)
    adaptive = [i for i, s in enumerate(strategies) if not s.time_independent]

    budget = np.tile(to_units(instance.shares * T), (R, 1))
    alloc_all = np.zeros((R, T, n, m), dtype=bool)
    pay_all = np.zeros((R, T, n), dtype=np.int64)
    dep_all = np.zeros((R, T, n), dtype=bool)
    budgets = np.zeros((R, T + 1, n), dtype=np.int64)
    budgets[:, 0] = budget
    costs_all = np.zeros((R, T))
    for t in range(T):
        if adaptive:
            for r in range(R):
                hist = PublicHistory(reports[r, :t] * 1.0, alloc_all[r, :t])
                for i in adaptive:
                    rep, flag = strategies[i].report(V[r, t, i], hist)
                    if not (np.all(np.isfinite(rep)) and np.all(rep >= 0)):
                        raise StrategyError(i, t + 1, f"report {rep!r}")
                    reports[r, t, i], unb[r, t, i] = rep, flag
        active = budget >= pmax_units
        dep_all[:, t] = ~active
        rep_t = np.where(active[:, :, None], reports[:, t], 0.0)
        unb_t = unb[:, t] & active[:, :, None]
        reports[:, t] = rep_t
        unb[:, t] = unb_t
        alloc, pay = mech.run_batch(rep_t, unb_t, costs, comp[:, t])
        pu = payment_units(pay, pmax_units)
        if np.any(pu[~active] != 0):
            raise AssertionError("a depleted agent was charged")
        budget = budget - pu
        alloc_all[:, t] = alloc
        pay_all[:, t] = pu
        budgets[:, t + 1] = budget
        costs_all[:, t] = _round_costs(alloc, comp[:, t], costs)
    _ledger_check(budgets, pay_all, costs_all, to_units(instance.shares * T))
    if not keep_trace:
        util = (V * alloc_all).sum(axis=(1, 3)) / T
        low = budgets[:, 1:] < pmax_units
        tau = np.where(low.any(axis=1), low.argmax(axis=1) + 1, T + 1)
        return {"utilities": util, "spend": pay_all.sum(axis=1) / UNIT, "depletion_times": tau,
                "total_cost": costs_all.sum(axis=1), "final_budgets": budget}
    return [SimulationResult(n, m, T, instance.shares.copy(), mech.name, pmax_units, V[r], comp[r],
                             reports[r], unb[r], alloc_all[r], pay_all[r], budgets[r], costs_all[r], dep_all[r])
            for r in range(R)]


# Running tally of every ledger check performed in this process.
LEDGER_TALLY = {"runs": 0, "violations": 0}


def _ledger_check(budgets: np.ndarray, pay: np.ndarray, costs: np.ndarray, init: np.ndarray) -> None:
    ok = (np.array_equal(budgets[:, 1:], budgets[:, :-1] - pay)
          & np.all(budgets >= 0)
          & np.all(pay.sum(axis=2) >= to_units(costs))
          & np.all(to_units(costs).sum(axis=1) <= int(init.sum())))
    LEDGER_TALLY["runs"] += budgets.shape[0]
    if not ok:
        LEDGER_TALLY["violations"] += 1
        raise AssertionError("budget ledger or feasibility bound violated")


def simulate(instance: Instance, kind, strategies: Sequence[Strategy], seed: int | None = None,
             T: int | None = None) -> SimulationResult:
    seed = instance.seed if seed is None else seed
    return run_replications(instance, kind, strategies, [seed], T=T)[0]


def replication_seeds(seed: int, runs: int) -> list[int]:
    g = rng_stream(seed, "replications")
    return [int(x) for x in g.integers(0, 2**63 - 1, size=runs)]


def simulate_summary(instance: Instance, kind, strategies, seeds, T=None, chunk: int = 64) -> dict:
    """Summary arrays for many runs, processed in chunks to bound memory."""
    parts = [run_replications(instance, kind, strategies, seeds[i:i + chunk], T=T, keep_trace=False)
             for i in range(0, len(seeds), chunk)]
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


# ---------------------------------------------------------------- audits


def feasibility_audit(result: SimulationResult, instance: Instance | None = None) -> bool:
    """Independent replay of the ledger and the feasibility bound."""
    shares = result.shares if instance is None else instance.shares
    init = to_units(shares * result.T)
    if not np.array_equal(result.budgets[0], init):
        return False
    if not np.array_equal(result.budgets[1:], result.budgets[:-1] - result.payments):
        return False
    if np.any(result.budgets < 0) or np.any(result.payments < 0):
        return False
    if np.any(result.payments[result.depleted] != 0):
        return False
    if np.any(result.depleted != (result.budgets[:-1] < result.pmax_units)):
        return False
    if instance is not None:
        recomputed = _round_costs(result.allocation, result.comp, instance.dist.costs())
        if not np.array_equal(recomputed, result.costs):
            return False
    cost_units = to_units(result.costs)
    if np.any(result.payments.sum(axis=1) < cost_units):
        return False
    return int(cost_units.sum()) <= int(init.sum())


# ---------------------------------------------------------------- output


def write_trace(result: SimulationResult, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        header = {"schema": TRACE_SCHEMA, "header": True, "n": result.n, "m": result.m, "T": result.T,
                  "shares": result.shares.tolist(), "mechanism": result.mechanism,
                  "pmax_units": result.pmax_units}
        fh.write(json.dumps(header) + "\n")
        for t in range(result.T):
            d = result.record(t).to_dict()
            d["comp"] = int(result.comp[t])
            d["cost"] = float(result.costs[t])
            fh.write(json.dumps(d) + "\n")


def read_trace(path: str | Path) -> SimulationResult:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"trace file not found: {p}")
    lines = p.read_text(encoding="utf-8").splitlines()
    head = json.loads(lines[0])
    if head.get("schema") != TRACE_SCHEMA or not head.get("header"):
        raise ConfigError(f"{p} is not a {TRACE_SCHEMA} trace")
    rows = [json.loads(x) for x in lines[1:]]
    n, m, T = head["n"], head["m"], head["T"]
    if len(rows) != T:
        raise ConfigError(f"trace {p} is thinned or truncated ({len(rows)} of {T} rounds)")
    arr = lambda k, dt=float: np.array([r[k] for r in rows], dtype=dt)  # noqa: E731
    unb = arr("unbounded", bool)
    budgets = np.vstack([to_units(np.asarray(head["shares"]) * T)[None], arr("budgets_units", np.int64)])
    return SimulationResult(n, m, T, np.asarray(head["shares"]), head["mechanism"], head["pmax_units"],
                            arr("values"), arr("comp", np.int64), np.where(unb, 0.0, arr("reports")), unb,
                            arr("allocation", bool), arr("payments_units", np.int64), budgets, arr("cost"),
                            arr("depleted", bool))


def summary_csv(result: SimulationResult) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["agent", "share", "utility", "spend", "depletion_time"],
                       lineterminator="\n")
    w.writeheader()
    for row in result.summary_rows():
        w.writerow(row)
    return buf.getvalue()
