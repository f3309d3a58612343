"""One-shot monetary cost-sharing mechanisms and their analyzers.

Three mechanisms share one interface: ``run(reports, cost, unbounded)``
returns a :class:`MechanismOutcome`.  ``unbounded`` is an optional boolean
mask marking reports that should beat every threshold; those entries are
never used as numbers.

Besides the mechanisms this module holds the dead-weight-loss and social
cost analyzers and the randomized regularity probes.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .model import (
    ConcaveCardinality,
    ConfigError,
    CostFunction,
    ItemCoverage,
    ZeroOneSingleGood,
    harmonic,
    popcount,
)

MAX_POTENTIAL_PAIRS = 20
TIE_TOL = 1e-12


class SizeError(ConfigError):
    """Exhaustive enumeration requested beyond the supported size."""


class KindMismatch(ConfigError):
    """Mechanism used with a cost family or shape it does not support."""


@dataclass
class MechanismOutcome:
    allocation: np.ndarray  # bool, n x m
    payments: np.ndarray  # n

    @property
    def allocated_agents(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.allocation.any(axis=1))]

    @property
    def mask(self) -> int:
        bits = np.flatnonzero(self.allocation.reshape(-1))
        return int(sum(1 << int(b) for b in bits))


def _as_reports(reports, unbounded=None):
    r = np.asarray(reports, dtype=float)
    if r.ndim == 1:
        r = r[:, None]
    unb = np.zeros(r.shape, dtype=bool) if unbounded is None else np.asarray(unbounded, bool).reshape(r.shape)
    finite = np.where(unb, 0.0, r)
    if not np.all(np.isfinite(finite)) or np.any(finite < 0):
        raise ValueError("reports must be finite and nonnegative (use the unbounded flag instead of inf)")
    return finite, unb


def check_ir_cc(outcome: MechanismOutcome, reports, unbounded, cost: CostFunction, tol: float = 1e-9):
    """Raise if the outcome breaks individual rationality or cost covering."""
    r, unb = _as_reports(reports, unbounded)
    A, p = outcome.allocation, outcome.payments
    for i in range(r.shape[0]):
        if not A[i].any():
            if p[i] != 0:
                raise AssertionError(f"IR: agent {i} pays {p[i]} without receiving anything")
        elif not (unb[i] & A[i]).any() and p[i] > r[i][A[i]].sum() + tol:
            raise AssertionError(f"IR: agent {i} pays {p[i]} above its report")
    c = cost(outcome.mask)
    if p.sum() < c - tol:
        raise AssertionError(f"CC: payments {p.sum()} below cost {c}")


class Mechanism:
    name = "abstract"
    single_good = True

    def p_max(self, n: int) -> float:
        return 1.0

    def _check(self, r, cost):
        if self.single_good and (r.shape[1] != 1 or not isinstance(cost, ZeroOneSingleGood)):
            raise KindMismatch(f"{self.name} needs m = 1 and the zero-one cost")

    def run(self, reports, cost: CostFunction, unbounded=None) -> MechanismOutcome:
        r, unb = _as_reports(reports, unbounded)
        self._check(r, cost)
        out = self._run(r, unb, cost)
        check_ir_cc(out, r, unb, cost)
        return out

    def _run(self, r, unb, cost) -> MechanismOutcome:
        raise NotImplementedError

    def run_batch(self, reports: np.ndarray, unbounded: np.ndarray | None, costs: list[CostFunction],
                  comp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Many independent rounds at once.

        ``reports`` has shape (R, n, m); ``comp[r]`` selects ``costs[comp[r]]``.
        Returns boolean allocations (R, n, m) and payments (R, n).  The
        default loops over ``run``.
        """
        R, n, m = reports.shape
        alloc = np.zeros((R, n, m), dtype=bool)
        pay = np.zeros((R, n))
        for j in range(R):
            out = self.run(reports[j], costs[int(comp[j])], None if unbounded is None else unbounded[j])
            alloc[j], pay[j] = out.allocation, out.payments
        return alloc, pay


class Proportional(Mechanism):
    """Allocate to everyone iff the reports sum to at least 1; pay in proportion."""

    name = "proportional"

    def _run(self, r, unb, cost):
        n = r.shape[0]
        alloc, pay = self._decide(r[:, 0][None], unb[:, 0][None])
        return MechanismOutcome(alloc[0][:, None].copy(), pay[0])

    @staticmethod
    def _decide(v, unb):
        # v, unb: (R, n).  Agents flagged unbounded split the whole cost equally,
        # the limit of proportional shares as their reports grow without bound.
        k = unb.sum(axis=1)
        total = v.sum(axis=1)
        go = (k > 0) | (total >= 1.0)
        pay = np.zeros_like(v)
        with np.errstate(invalid="ignore", divide="ignore"):
            prop = v / total[:, None]
        fin = go & (k == 0)
        pay[fin] = prop[fin]
        inf_rows = k > 0
        pay[inf_rows] = unb[inf_rows] / k[inf_rows, None]
        alloc = np.repeat(go[:, None], v.shape[1], axis=1)
        return alloc, pay

    def run_batch(self, reports, unbounded, costs, comp):
        R, n, m = reports.shape
        if m != 1 or not all(isinstance(c, ZeroOneSingleGood) for c in costs):
            raise KindMismatch("proportional needs m = 1 and the zero-one cost")
        unb = np.zeros((R, n), bool) if unbounded is None else unbounded[:, :, 0]
        alloc, pay = self._decide(np.where(unb, 0.0, reports[:, :, 0]), unb)
        return alloc[:, :, None], pay


class Moulin(Mechanism):
    """Serve the largest group willing to split the cost equally."""

    name = "moulin"

    def _run(self, r, unb, cost):
        n = r.shape[0]
        v, u = r[:, 0], unb[:, 0]
        S = list(range(n))
        while S:
            share = 1.0 / len(S)
            keep = [i for i in S if u[i] or v[i] >= share]
            if len(keep) == len(S):
                break
            S = keep
        alloc = np.zeros((n, 1), dtype=bool)
        pay = np.zeros(n)
        if S:
            alloc[S, 0] = True
            pay[S] = 1.0 / len(S)
        return MechanismOutcome(alloc, pay)

    @staticmethod
    def _decide(v, unb):
        # Largest k such that at least k agents report 1/k or more; the
        # served set is then every agent reporting at least 1/k.
        R, n = v.shape
        shares = 1.0 / np.arange(1, n + 1)
        willing = unb[:, :, None] | (v[:, :, None] >= shares[None, None, :])
        ok = willing.sum(axis=1) >= np.arange(1, n + 1)
        kstar = np.where(ok.any(axis=1), n - np.argmax(ok[:, ::-1], axis=1), 0)
        served = kstar > 0
        idx = np.maximum(kstar, 1) - 1
        alloc = willing[np.arange(R), :, idx] & served[:, None]
        pay = np.where(alloc, shares[idx][:, None], 0.0)
        return alloc, pay

    def run_batch(self, reports, unbounded, costs, comp):
        R, n, m = reports.shape
        if m != 1 or not all(isinstance(c, ZeroOneSingleGood) for c in costs):
            raise KindMismatch("moulin needs m = 1 and the zero-one cost")
        unb = np.zeros((R, n), bool) if unbounded is None else unbounded[:, :, 0]
        alloc, pay = self._decide(np.where(unb, 0.0, reports[:, :, 0]), unb)
        return alloc[:, :, None], pay


class _PotentialCache:
    """Per-cost tables: membership bits of every mask and its potential."""

    def __init__(self, cost: CostFunction):
        n, m = cost.n, cost.m
        nm = n * m
        if nm > MAX_POTENTIAL_PAIRS:
            raise SizeError(f"potential enumeration limited to n*m <= {MAX_POTENTIAL_PAIRS}, got {nm}")
        masks = np.arange(1 << nm, dtype=np.int64)
        self.masks = masks
        self.bits = ((masks[:, None] >> np.arange(nm)) & 1).astype(float)
        self.card = popcount(masks)
        self.P = potential_table(cost)
        row = (1 << m) - 1
        self.agent_empty = [((masks >> (i * m)) & row) == 0 for i in range(n)]
        # scan order for the tie-break: most pairs first, then smallest mask
        self.order = np.lexsort((masks, -self.card))


def potential_table(cost: CostFunction) -> np.ndarray:
    """Potential of every allocation mask.

    The cost of a coalition's part of the allocation is averaged with the
    weights 1 / (|I| * binom(n, |I|)) over all nonempty agent sets I.
    """
    n, m = cost.n, cost.m
    masks = np.arange(1 << (n * m), dtype=np.int64)
    row = (1 << m) - 1
    ctab = cost.table()
    P = np.zeros(masks.size)
    for I in range(1, 1 << n):
        members = [i for i in range(n) if (I >> i) & 1]
        keep = 0
        for i in members:
            keep |= row << (i * m)
        w = 1.0 / (len(members) * math.comb(n, len(members)))
        P += w * ctab[masks & keep]
    return P


def potential_value(cost: CostFunction, alloc: Any) -> float:
    from .model import to_mask

    return float(_potential_cache(cost).P[to_mask(alloc, cost.m)])


_CACHE: dict[int, tuple[CostFunction, _PotentialCache]] = {}


def _potential_cache(cost: CostFunction) -> _PotentialCache:
    hit = _CACHE.get(id(cost))
    if hit is not None and hit[0] is cost:
        return hit[1]
    pc = _PotentialCache(cost)
    if len(_CACHE) > 256:
        _CACHE.clear()
    _CACHE[id(cost)] = (cost, pc)
    return pc


def _best_mask(obj: np.ndarray, card: np.ndarray, allowed: np.ndarray | None = None) -> int:
    # maximizers within TIE_TOL, then greatest cardinality, then smallest mask
    if allowed is not None:
        obj = np.where(allowed, obj, -np.inf)
    best = obj.max()
    cand = np.flatnonzero(obj >= best - TIE_TOL)
    top = card[cand].max()
    return int(cand[card[cand] == top][0])


class Potential(Mechanism):
    """VCG on welfare minus the averaged-cost potential; any submodular cost."""

    name = "potential"
    single_good = False

    def p_max(self, n: int) -> float:
        return harmonic(n)

    def _run(self, r, unb, cost):
        n, m = r.shape
        if (cost.n, cost.m) != (n, m):
            raise KindMismatch(f"cost is for n={cost.n}, m={cost.m}, reports are {n}x{m}")
        pc = _potential_cache(cost)
        # A flagged entry carries a stand-in value above every marginal
        # potential (each is at most H_n), so it is always served.
        vals = np.where(unb, harmonic(n) + 1.0, r).reshape(-1)
        welfare = pc.bits @ vals
        star = _best_mask(welfare - pc.P, pc.card)
        pay = np.zeros(n)
        for i in range(n):
            v_i = vals.reshape(n, m).copy()
            v_i[i] = 0.0
            w_others = pc.bits @ v_i.reshape(-1)
            obj = w_others - pc.P
            h = obj[pc.agent_empty[i]].max()
            pay[i] = max(0.0, h - obj[star])
        alloc = pc.bits[star].astype(bool).reshape(n, m)
        pay[~alloc.any(axis=1)] = 0.0
        return MechanismOutcome(alloc, pay)

    def run_batch(self, reports, unbounded, costs, comp):
        R, n, m = reports.shape
        vals = reports if unbounded is None else np.where(unbounded, harmonic(n) + 1.0, reports)
        vals = vals.reshape(R, n * m)
        alloc = np.zeros((R, n * m), dtype=bool)
        pay = np.zeros((R, n))
        for j, cost in enumerate(costs):
            idx = np.flatnonzero(comp == j)
            if idx.size == 0:
                continue
            if (cost.n, cost.m) != (n, m):
                raise KindMismatch(f"cost is for n={cost.n}, m={cost.m}, reports are {n}x{m}")
            pc = _potential_cache(cost)
            chunk = max(1, 4_000_000 // pc.masks.size)
            for s in range(0, idx.size, chunk):
                rows = idx[s:s + chunk]
                x = vals[rows]
                obj = x @ pc.bits.T - pc.P
                best = obj.max(axis=1, keepdims=True)
                star = pc.order[np.argmax((obj >= best - TIE_TOL)[:, pc.order], axis=1)]
                got = pc.bits[star].astype(bool)
                obj_star = obj[np.arange(len(rows)), star]
                for i in range(n):
                    own = (x[:, i * m:(i + 1) * m] * got[:, i * m:(i + 1) * m]).sum(axis=1)
                    h = obj[:, pc.agent_empty[i]].max(axis=1)
                    p_i = np.maximum(0.0, h - (obj_star - own))
                    pay[rows, i] = np.where(got[:, i * m:(i + 1) * m].any(axis=1), p_i, 0.0)
                alloc[rows] = got
        return alloc.reshape(R, n, m), pay


MECHANISMS = {"proportional": Proportional, "moulin": Moulin, "potential": Potential}


def get_mechanism(kind: str | Mechanism) -> Mechanism:
    if isinstance(kind, Mechanism):
        return kind
    try:
        return MECHANISMS[kind.lower()]()
    except KeyError:
        raise ConfigError(f"unknown mechanism {kind!r}; choose from {sorted(MECHANISMS)}") from None


def run_mechanism(kind, reports, cost: CostFunction, unbounded=None) -> MechanismOutcome:
    return get_mechanism(kind).run(reports, cost, unbounded)


# ------------------------------------------------------------------ DWL


def dwl_single_forms(reports, outcome: MechanismOutcome) -> tuple[float, float]:
    """The two algebraic single-good expressions; they coincide for IR + CC outcomes."""
    v = np.asarray(reports, dtype=float).reshape(-1)
    inA = outcome.allocation.reshape(-1)
    p = outcome.payments
    first = max(v.sum() - 1.0, 0.0) - float((v[inA] - p[inA]).sum())
    second = max(float(v[~inA].sum() + p.sum() - 1.0), 0.0)
    return first, second


def dwl_single_batch(kind, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Both single-good forms for a batch of profiles ``v`` of shape (R, n)."""
    mech = get_mechanism(kind)
    R, n = v.shape
    alloc, pay = mech.run_batch(v[:, :, None], None, [ZeroOneSingleGood(n, 1)], np.zeros(R, int))
    inA = alloc[:, :, 0]
    first = np.maximum(v.sum(axis=1) - 1.0, 0.0) - np.where(inA, v - pay, 0.0).sum(axis=1)
    second = np.maximum(np.where(inA, 0.0, v).sum(axis=1) + pay.sum(axis=1) - 1.0, 0.0)
    return first, second


def dwl(kind, reports, cost: CostFunction) -> float:
    """Largest cost-normalized welfare gap over every nonempty alternative allocation."""
    mech = get_mechanism(kind)
    r, _ = _as_reports(reports)
    n, m = r.shape
    if n * m > MAX_POTENTIAL_PAIRS:
        raise SizeError(f"DWL enumeration limited to n*m <= {MAX_POTENTIAL_PAIRS}")
    out = mech.run(r, cost)
    masks = np.arange(1, 1 << (n * m), dtype=np.int64)
    bits = ((masks[:, None] >> np.arange(n * m)) & 1).astype(float)
    welfare = bits @ r.reshape(-1)
    c = cost.table()[masks]
    realized = float(r[out.allocation].sum() - out.payments.sum())
    gap = (np.maximum(welfare - c, 0.0) - realized) / c
    return float(max(gap.max(), 0.0))


def harmonic_profile(n: int, eps: float) -> np.ndarray:
    return np.array([1.0] + [1.0 / j - eps for j in range(2, n + 1)])


@dataclass
class ScanResult:
    mechanism: str
    n: int
    sup: float
    witness: list[float]
    profiles: int
    max_identity_gap: float = 0.0

    def to_dict(self) -> dict:
        return {"mechanism": self.mechanism, "n": self.n, "sup": self.sup, "witness": self.witness,
                "profiles": self.profiles, "max_identity_gap": self.max_identity_gap}


def dwl_sup_scan(kind, n: int, samples: int = 100_000, rng: np.random.Generator | None = None,
                 vmax: float = 1.5, witness_eps: float = 1e-4) -> ScanResult:
    """Lower estimate of the worst single-good DWL.

    Random profiles on [0, vmax]^n plus structured candidates (the harmonic
    staircase and its permutations, grid points on the 1/k thresholds).  For
    each profile the value is also cross-checked against payments plus
    excluded value minus one, whose supremum differs from the DWL's by exactly 1.
    """
    mech = get_mechanism(kind)
    rng = np.random.default_rng(0) if rng is None else rng
    parts = [vmax * rng.random((samples, n))]
    # threshold-hugging candidates: each agent sits just below or above some 1/k
    ks = rng.integers(1, n + 1, size=(max(samples // 10, 1), n))
    jitter = witness_eps * rng.choice([-1.0, 0.0, 1.0], size=ks.shape)
    parts.append(np.clip(1.0 / ks + jitter, 0.0, None))
    base = harmonic_profile(n, witness_eps)
    parts.append(np.array([base[list(p)] for p in itertools.islice(itertools.permutations(range(n)), 720)]))
    V = np.vstack(parts)
    vals, _ = dwl_single_batch(mech, V)
    alloc, pay = mech.run_batch(V[:, :, None], None, [ZeroOneSingleGood(n, 1)], np.zeros(len(V), int))
    excluded = np.where(alloc[:, :, 0], 0.0, V).sum(axis=1)
    identity = np.maximum(excluded + pay.sum(axis=1) - 1.0, 0.0)
    gap = float(np.max(np.abs(identity - vals))) if len(V) else 0.0
    j = int(np.argmax(vals))
    return ScanResult(mech.name, n, float(vals[j]), V[j].tolist(), len(V), gap)


# ------------------------------------------------------------ social cost


def social_cost(values, cost: CostFunction, served) -> float:
    """Cost of serving ``served`` plus the value of everyone left out (one good)."""
    v = np.asarray(values, dtype=float).reshape(-1)
    s = np.zeros(v.size, dtype=bool)
    s[list(served)] = True
    mask = int(sum(1 << int(i) for i in np.flatnonzero(s)))
    return float(cost(mask) + v[~s].sum())


def optimal_social_cost(values, cost: CostFunction) -> float:
    v = np.asarray(values, dtype=float).reshape(-1)
    best = math.inf
    for mask in range(1 << v.size):
        served = [i for i in range(v.size) if (mask >> i) & 1]
        best = min(best, social_cost(v, cost, served))
    return best


# ------------------------------------------------------------ regularity


COST_POOL = 48
AXIOMS = ("IR", "CC", "MT1", "MT2", "MT3", "MT4", "MT5", "CS", "PS", "BP", "ET", "SA", "IC")


@dataclass
class ProbeReport:
    mechanism: str
    axiom: str
    trials: int
    status: str
    witness: dict | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        d = {"mechanism": self.mechanism, "axiom": self.axiom, "trials": self.trials, "status": self.status}
        if self.witness is not None:
            d["witness"] = self.witness
        return d


def _random_cost(rng, n, m) -> CostFunction:
    if m == 1 and rng.random() < 0.6:
        return ZeroOneSingleGood(n, m)
    if rng.random() < 0.5:
        w = rng.uniform(0.1, 0.8, size=m)
        return ItemCoverage(n, m, w, cap=float(rng.uniform(0.5, 1.0)))
    inc = np.sort(rng.uniform(0.02, 0.5, size=n * m))[::-1]
    g = np.concatenate([[0.0], np.cumsum(inc)])
    g = g / max(g[-1], 1.0)
    return ConcaveCardinality(n, m, g)


def _random_reports(rng, n, m) -> np.ndarray:
    mode = rng.integers(4)
    if mode == 0:
        return rng.uniform(0.0, 1.5, size=(n, m))
    if mode == 1:
        k = rng.integers(1, n + 1, size=(n, m))
        return np.clip(1.0 / k + rng.choice([-1e-3, 0.0, 1e-3], size=(n, m)), 0.0, None)
    if mode == 2:
        v = rng.uniform(0.0, 1.0, size=(n, m))
        v[rng.integers(n)] = v[rng.integers(n)]
        return v
    return np.round(rng.uniform(0.0, 1.2, size=(n, m)), 1)


def _utility(v_true_i, out, i):
    return float(v_true_i[out.allocation[i]].sum() - out.payments[i])


def _same(a: MechanismOutcome, b: MechanismOutcome) -> bool:
    return bool(np.array_equal(a.allocation, b.allocation))


def regularity_probe(kind, axiom: str, trials: int = 10_000, rng: np.random.Generator | None = None,
                     n_range: tuple[int, int] = (2, 5), m: int = 1, tol: float = 1e-12) -> ProbeReport:
    """Random search for a violation of one regularity condition.

    Comparison profiles satisfy ``V' <= V`` entrywise; the conditions that
    concern a unilateral change only replace agent i's row.
    """
    mech = get_mechanism(kind)
    axiom = axiom.upper()
    if axiom not in AXIOMS:
        raise ConfigError(f"unknown axiom {axiom!r}")
    rng = np.random.default_rng(0) if rng is None else rng
    mm = m if not mech.single_good else 1
    # a fixed pool of random costs per n keeps the potential tables cached
    pool: dict[int, list[CostFunction]] = {}
    for t in range(trials):
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        if not mech.single_good and n * mm > 8:
            n = max(1, 8 // mm)
        if mech.single_good:
            cost = ZeroOneSingleGood(n, 1)
        else:
            if n not in pool:
                pool[n] = [_random_cost(rng, n, mm) for _ in range(COST_POOL)]
            cost = pool[n][int(rng.integers(COST_POOL))]
        V = _random_reports(rng, n, mm)
        i = int(rng.integers(n))
        lower = V * rng.choice([0.0, 0.5, 1.0], size=V.shape) * rng.uniform(0.0, 1.0, size=V.shape)
        lower = np.where(rng.random(V.shape) < 0.3, V, lower)
        Vi = V.copy()
        Vi[i] = lower[i]
        out = mech.run(V, cost)
        bad: str | None = None
        if axiom == "IR":
            for j in range(n):
                if out.payments[j] > V[j][out.allocation[j]].sum() + tol:
                    bad = f"agent {j} pays above report"
                if not out.allocation[j].any() and out.payments[j] != 0:
                    bad = f"agent {j} pays without service"
        elif axiom == "CC":
            if out.payments.sum() < cost(out.mask) - tol:
                bad = "payments below cost"
        elif axiom == "BP":
            if out.payments.max() > mech.p_max(n) + tol:
                bad = "payment above p_max"
        elif axiom == "MT1":
            low = mech.run(lower, cost)
            if np.any(low.allocation & ~out.allocation):
                bad = "lower reports served an extra pair"
        elif axiom in ("MT2", "MT4", "MT5"):
            uni = mech.run(Vi, cost)
            if axiom == "MT2" and out.payments[i] < uni.payments[i] - tol:
                bad = "payment rose after lowering own report"
            if axiom == "MT4" and abs(out.payments[i] - uni.payments[i]) <= tol and not _same(out, uni):
                bad = "equal payment but different allocation"
            if axiom == "MT5" and np.array_equal(out.allocation[i], uni.allocation[i]) and not _same(out, uni):
                bad = "own allocation unchanged but others' changed"
        elif axiom == "MT3":
            low = mech.run(lower, cost)
            for j in range(n):
                if _utility(V[j], out, j) < _utility(lower[j], low, j) - tol:
                    bad = f"agent {j} reported utility rose when all reports fell"
                    break
        elif axiom == "PS":
            # lower true report vs higher report, both scored at the lower one
            uni = mech.run(Vi, cost)
            if _utility(Vi[i], uni, i) < _utility(Vi[i], out, i) - tol:
                bad = "over-reporting raised utility"
        elif axiom == "IC":
            mis = V.copy()
            choice = rng.integers(3)
            if choice == 0:
                mis[i] = rng.uniform(0.0, 1.5, size=mm)
            elif choice == 1:
                mis[i] = V[i] * rng.uniform(0.0, 2.0)
            else:
                mis[i] = lower[i]
            dev = mech.run(mis, cost)
            if _utility(V[i], dev, i) > _utility(V[i], out, i) + tol:
                bad = "misreport raised quasi-linear utility"
                Vi = mis
        elif axiom == "CS":
            k = int(rng.integers(mm))
            unb = np.zeros_like(V, dtype=bool)
            unb[i, k] = True
            cs = mech.run(V, cost, unb)
            if not cs.allocation[i, k]:
                bad = "unbounded report not served"
        elif axiom in ("ET", "SA"):
            if mm != 1 or not isinstance(cost, ZeroOneSingleGood):
                cost = ZeroOneSingleGood(n, 1)
                V = V[:, :1]
            if axiom == "ET":
                j = int(rng.integers(n))
                V = V.copy()
                V[j] = V[i]
                out = mech.run(V, cost)
                if abs(out.payments[i] - out.payments[j]) > tol or out.allocation[i, 0] != out.allocation[j, 0]:
                    bad = "equal reports treated differently"
            else:
                V = V.copy()
                V[i, 0] = 1.0 + float(rng.uniform(0.0, 0.5)) * rng.integers(2)
                out = mech.run(V, cost)
                if not out.allocation[i, 0]:
                    bad = "stand-alone agent not served"
        if bad is not None:
            witness = {"trial": t, "agent": i, "reason": bad, "reports": V.tolist(),
                       "other": (lower if axiom in ("MT1", "MT3") else Vi).tolist(),
                       "cost": cost.to_dict()}
            return ProbeReport(mech.name, axiom, t + 1, "fail", witness)
    return ProbeReport(mech.name, axiom, trials, "pass")
