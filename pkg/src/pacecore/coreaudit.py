"""Approximate-core audits.

Three procedures live here:

* ``certify_ex_ante`` works on the allocation policy induced by a pacing
  profile.  For every coalition it builds the weighted-threshold policy
  whose expected cost just reaches the coalition's budget and compares
  weighted values by Monte Carlo.
* ``audit_ex_post`` works on a finished trace and searches for blocking
  allocations among threshold policies over the realized rounds.
* ``brute_force_core_oracle`` decides core membership exactly for tiny
  atom distributions with a linear program per coalition.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .mechanisms import SizeError, get_mechanism
from .model import Atom, ConfigError, Instance, ZeroOneSingleGood, popcount, rng_stream, sample_values
from .reduction import SimulationResult

CERT_SCHEMA = "pacecore-cert-v1"
EXACT_COALITIONS = 12
SAMPLED_COALITIONS = 256
SIGMAS = 3.0
TINY_BETA = 1e-9
TIE_TOL = 1e-12


class AuditError(ConfigError):
    pass


@dataclass
class CoalitionResult:
    members: tuple[int, ...]
    status: str  # certified | tie | refuted | inconclusive
    weights: np.ndarray
    z: float
    measure: float  # estimated cost of the threshold policy (per round)
    slack: float
    stderr: float
    utilities: np.ndarray = field(default_factory=lambda: np.zeros(0))  # current, per member
    alternative: np.ndarray = field(default_factory=lambda: np.zeros(0))  # under the witness policy
    tie: bool = False

    @property
    def ratios(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.utilities > 0, self.alternative / self.utilities, np.inf)

    def to_dict(self) -> dict:
        return {"S": list(self.members), "status": self.status, "slack": self.slack, "stderr": self.stderr,
                "tie": self.tie,
                "witness": {"weights": self.weights.tolist(), "z": self.z, "measure": self.measure,
                            "utilities": self.utilities.tolist(), "alternative": self.alternative.tolist(),
                            "ratios": [float(r) if np.isfinite(r) else None for r in self.ratios]}}


@dataclass
class CoreCertificate:
    status: str  # Certified | Refuted | Inconclusive
    gamma: float
    coalitions: list[CoalitionResult]
    delta: float | None = None
    blocking: CoalitionResult | None = None
    offending: tuple[int, ...] | None = None
    sampled: bool = False
    delta_star: float | None = None
    frontier: list[tuple[float, float]] = field(default_factory=list)
    note: str = ""

    def coalition(self, members) -> CoalitionResult:
        key = tuple(sorted(members))
        for c in self.coalitions:
            if c.members == key:
                return c
        raise KeyError(key)

    def to_dict(self) -> dict:
        d = {"schema": CERT_SCHEMA, "status": self.status, "gamma": self.gamma,
             "coalitions": [c.to_dict() for c in self.coalitions], "sampled": self.sampled}
        if self.delta is not None:
            d["delta"] = self.delta
        if self.delta_star is not None:
            d["delta_star"] = self.delta_star
        if self.frontier:
            d["frontier"] = [{"gamma": g, "delta": dl} for g, dl in self.frontier]
        if self.blocking is not None:
            d["blocking"] = self.blocking.to_dict()
        if self.offending is not None:
            d["offending"] = list(self.offending)
        if self.note:
            d["note"] = self.note
        return d


def save_certificate(cert: CoreCertificate, path) -> None:
    Path(path).write_text(json.dumps(cert.to_dict(), indent=2), encoding="utf-8")


def coalitions(n: int, rng: np.random.Generator | None = None) -> tuple[list[tuple[int, ...]], bool]:
    """Every nonempty coalition for small n; otherwise singletons, [n] and a random sample."""
    if n <= EXACT_COALITIONS:
        out = [tuple(i for i in range(n) if (s >> i) & 1) for s in range(1, 1 << n)]
        return out, False
    rng = rng_stream(0, "coalitions") if rng is None else rng
    seen = {(i,) for i in range(n)} | {tuple(range(n))}
    while len(seen) < n + 1 + SAMPLED_COALITIONS:
        size = int(rng.integers(2, n))
        seen.add(tuple(sorted(rng.choice(n, size, replace=False).tolist())))
    return sorted(seen, key=lambda s: (len(s), s)), True


def _weights(beta: np.ndarray, S) -> np.ndarray:
    b = np.asarray(beta, dtype=float)[list(S)]
    return 1.0 / np.maximum(b, TINY_BETA)


# ------------------------------------------------------ threshold policies


class _ThresholdPolicy:
    """Per-round argmax of weighted coalition value minus z times cost.

    Only members of the coalition can receive goods.  Ties go to the
    allocation with the most pairs, then the smallest mask.
    """

    def __init__(self, V: np.ndarray, comp: np.ndarray, costs, S):
        self.V, self.comp, self.S = V, comp, list(S)
        N, n, m = V.shape
        self.n, self.m = n, m
        self.single = m == 1 and all(isinstance(c, ZeroOneSingleGood) for c in costs)
        self.VS = V[:, self.S, :]  # (N, s, m)
        if self.single:
            return
        pairs = [i * m + k for i in self.S for k in range(m)]
        if len(pairs) > 16:
            raise SizeError(f"threshold policy over {len(pairs)} pairs is too large")
        sub = np.array([sum(1 << pairs[j] for j in range(len(pairs)) if (b >> j) & 1)
                        for b in range(1 << len(pairs))], dtype=np.int64)
        self.sub_bits = ((np.arange(sub.size)[:, None] >> np.arange(len(pairs))) & 1).astype(bool)
        self.card = popcount(sub)
        ctab = np.stack([c.evaluate(sub) for c in costs])  # (components, K)
        self.cost_rows = ctab[comp]  # (N, K)
        self.positive = ctab[ctab > 0].min() if np.any(ctab > 0) else 1.0
        # scan order: most pairs first, then smallest mask, so argmax applies the tie-break
        self.order = np.lexsort((np.arange(sub.size), -self.card))

    def zmax(self, w: np.ndarray) -> float:
        top = float(w.sum() * self.m)
        return top if self.single else top / self.positive

    def allocate(self, w: np.ndarray, z: float) -> tuple[np.ndarray, np.ndarray]:
        """Returns (served pairs of the coalition (N, s, m) bool, cost per round (N,))."""
        if self.single:
            score = self.VS[:, :, 0] @ w
            served = score >= z if z > 0 else np.ones(score.shape, bool)
            return np.repeat(served[:, None, None], len(self.S), axis=1), served.astype(float)
        vals = (self.VS * w[None, :, None]).reshape(len(self.V), -1) @ self.sub_bits.T.astype(float)
        obj = vals - z * self.cost_rows
        obj = obj[:, self.order]
        best = obj.max(axis=1, keepdims=True)
        pick = self.order[np.argmax(obj >= best - TIE_TOL, axis=1)]
        served = self.sub_bits[pick].reshape(len(self.V), len(self.S), self.m)
        return served, self.cost_rows[np.arange(len(self.V)), pick]

    def bracket(self, w: np.ndarray, target: float, width: float = 1e-9):
        """(z_lo, z_hi): mean cost at z_lo is >= target, at z_hi below it."""
        lo, hi = 0.0, self.zmax(w) * (1 + 1e-9) + 1e-9
        if self.allocate(w, lo)[1].mean() < target:
            return lo, lo
        if self.single:
            # mean cost is a tail fraction of the scores, so the bracket is an order statistic
            score = np.sort(self.VS[:, :, 0] @ w)[::-1]
            k = int(np.ceil(target * len(score) - 1e-12))
            k = max(k, 1)
            z_lo = float(score[k - 1])
            return z_lo, float(np.nextafter(z_lo, np.inf))
        while hi - lo > width:
            mid = 0.5 * (lo + hi)
            if self.allocate(w, mid)[1].mean() >= target:
                lo = mid
            else:
                hi = mid
        return lo, hi


# ------------------------------------------------------------- ex ante


def _induced(instance: Instance, kind, beta, V, comp):
    mech = get_mechanism(kind)
    beta = np.asarray(beta, dtype=float)
    zero = beta == 0
    reports = V / np.where(zero, 1.0, beta)[None, :, None]
    unb = np.broadcast_to(zero[None, :, None], V.shape) & np.ones(V.shape, bool)
    reports = np.where(unb, 0.0, reports)
    alloc, _ = mech.run_batch(reports, unb if zero.any() else None, instance.dist.costs(), comp)
    return alloc


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    return float(x.mean()), float(x.std(ddof=1) / np.sqrt(len(x))) if len(x) > 1 else 0.0


def certify_ex_ante(instance: Instance, kind, beta, gamma: float = 0.0, samples: int = 100_000,
                    seed: int | None = None, directions: int = 32) -> CoreCertificate:
    """Certify or refute gamma-core membership of the policy induced by ``beta``.

    Per coalition: weights 1/beta on the members, z set so the threshold
    policy costs the coalition budget, then

    * certified when (1+gamma) * weighted value of the induced policy beats
      the threshold policy's weighted value by 3 standard errors,
    * tie when the induced policy already is that threshold policy,
    * refuted when some threshold policy of cost below the budget gives
      every member more than (1+gamma) times its current value,
    * inconclusive otherwise.
    """
    b = np.asarray(getattr(beta, "beta", beta), dtype=float)
    seed = instance.seed if seed is None else seed
    V, comp = sample_values(instance.dist, rng_stream(seed, "audit", "ex-ante"), samples, stratified=True)
    costs = instance.dist.costs()
    alloc = _induced(instance, kind, b, V, comp)
    N = samples
    cov = V * alloc  # realized value per pair
    member_util = cov.sum(axis=2)  # (N, n)
    coal, sampled = coalitions(instance.n, rng_stream(seed, "audit", "coalitions"))
    dir_rng = rng_stream(seed, "audit", "directions")
    results = []
    for S in coal:
        aS = float(instance.shares[list(S)].sum())
        band = SIGMAS * np.sqrt(max(aS * (1 - aS), 0.0) / N)
        pol = _ThresholdPolicy(V, comp, costs, S)
        w = _weights(b, S)
        u_now = member_util[:, list(S)]
        lhs = (1 + gamma) * (u_now @ w)
        # certification: a threshold policy of cost confidently above the budget
        z_c, _ = pol.bracket(w, aS + band)
        served, cst = pol.allocate(w, z_c)
        rhs = ((pol.VS * served).sum(axis=2)) @ w
        slack, se = _mean_se(lhs - rhs)
        res = CoalitionResult(S, "inconclusive", w, z_c, float(cst.mean()), slack, se,
                              u_now.mean(axis=0), (pol.VS * served).sum(axis=2).mean(axis=0))
        if slack > SIGMAS * se and slack > 0:
            res.status = "certified"
        elif _is_tie(pol, w, alloc, S, aS, band):
            res.status, res.tie = "certified", True
        else:
            hit = _refute_ex_ante(pol, w, u_now, gamma, aS - band, dir_rng, directions)
            if hit is not None:
                res = CoalitionResult(S, "refuted", hit[0], hit[1], hit[2], hit[3], hit[4], u_now.mean(axis=0),
                                      hit[5])
        results.append(res)
    return _summarize(results, gamma, None, sampled, instance, alloc, comp, costs, N)


def _is_tie(pol: _ThresholdPolicy, w, alloc, S, aS: float, band: float) -> bool:
    # the induced policy, restricted to S, coincides with a threshold policy of the budget's cost
    mine = alloc[:, list(S), :]
    if not pol.single:
        return False
    served = mine.any(axis=(1, 2))
    if np.any(mine.any(axis=2) != served[:, None]):
        return False
    if abs(served.mean() - aS) > band:
        return False
    score = pol.VS[:, :, 0] @ w
    if not served.any() or served.all():
        return False
    z = float(score[served].min())
    return bool(np.all(score[~served] < z))


def _refute_ex_ante(pol, w_eq, u_now, gamma, budget, rng, directions):
    s = len(pol.S)
    cand = [w_eq] + [rng.dirichlet(np.ones(s)) * w_eq.sum() for _ in range(directions * s if s > 1 else 0)]
    best = None
    for w in cand:
        if budget <= 0:
            break
        _, z_hi = pol.bracket(w, budget)
        served, cst = pol.allocate(w, z_hi)
        if cst.mean() > budget:
            continue
        alt = (pol.VS * served).sum(axis=2)
        diff = alt - (1 + gamma) * u_now
        means = diff.mean(axis=0)
        ses = diff.std(axis=0, ddof=1) / np.sqrt(len(diff))
        margin = means - SIGMAS * ses
        if np.all(margin > 0):
            k = int(np.argmin(margin))
            cand_res = (w, z_hi, float(cst.mean()), float(means[k]), float(ses[k]), alt.mean(axis=0))
            if best is None or cand_res[3] > best[3]:
                best = cand_res
            if w is w_eq:
                break  # the equilibrium direction already blocks
    return best


def _summarize(results, gamma, delta, sampled, instance, alloc, comp, costs, N) -> CoreCertificate:
    refuted = [r for r in results if r.status == "refuted"]
    if refuted:
        top = max(refuted, key=lambda r: (r.slack, len(r.members)))
        return CoreCertificate("Refuted", gamma, results, delta, blocking=top, sampled=sampled)
    open_ = [r for r in results if r.status == "inconclusive"]
    if open_:
        return CoreCertificate("Inconclusive", gamma, results, delta, offending=open_[0].members, sampled=sampled)
    # feasibility of the induced policy itself
    masks = (alloc.reshape(N, -1) * (1 << np.arange(alloc.shape[1] * alloc.shape[2]))).sum(axis=1)
    spent = np.zeros(N)
    for j, c in enumerate(costs):
        sel = comp == j
        if sel.any():
            spent[sel] = c.evaluate(masks[sel].astype(np.int64))
    m, se = _mean_se(spent)
    if m > instance.alpha + SIGMAS * se + 1e-12:
        return CoreCertificate("Inconclusive", gamma, results, delta, sampled=sampled,
                               note=f"induced policy costs {m:.6f} > {instance.alpha:.6f}")
    return CoreCertificate("Certified", gamma, results, delta, sampled=sampled)


# ------------------------------------------------------------- ex post


def audit_ex_post(result: SimulationResult, instance: Instance, gamma: float = 0.0, delta: float = 0.0,
                  beta=None, directions: int = 32, gamma_grid=None, seed: int | None = None) -> CoreCertificate:
    """Search the realized rounds for (gamma, delta)-blocking coalitions.

    Candidate allocations are threshold policies over the trace: weights on
    the coalition's values (the equilibrium direction 1/beta plus random
    simplex directions), with z chosen so the realized cost fits the
    coalition's budget.  ``delta_star`` is the largest guaranteed gain any
    candidate offers every member at ``gamma``; blocking means it exceeds
    ``delta``.
    """
    if getattr(result, "thinned", False):
        raise AuditError("trace is thinned; the ex-post audit needs every round")
    T, n = result.T, result.n
    b = np.ones(n) if beta is None else np.asarray(getattr(beta, "beta", beta), dtype=float)
    seed = instance.seed if seed is None else seed
    rng = rng_stream(seed, "audit", "ex-post")
    costs = instance.dist.costs()
    V = result.values
    u_now = (V * result.allocation).sum(axis=(0, 2)) / T
    coal, sampled = coalitions(n, rng)
    gammas = sorted(set([float(gamma)] + list(gamma_grid or [])))
    results, per_gamma = [], {g: -np.inf for g in gammas}
    for S in coal:
        budget = float(instance.shares[list(S)].sum()) * T
        pol = _ThresholdPolicy(V, result.comp, costs, S)
        w_eq = _weights(b, S)
        s = len(S)
        cands = [w_eq] + [rng.dirichlet(np.ones(s)) * w_eq.sum() for _ in range(directions * s if s > 1 else 0)]
        best = None
        for w in cands:
            served, z = _fit_budget(pol, w, budget)
            alt = (pol.VS * served).sum(axis=(0, 2)) / T
            for g in gammas:
                per_gamma[g] = max(per_gamma[g], float(np.min(alt - (1 + g) * u_now[list(S)])))
            margin = float(np.min(alt - (1 + gamma) * u_now[list(S)]))
            if best is None or margin > best[0]:
                best = (margin, w, z, alt, served)
        margin, w, z, alt, served = best
        status = "refuted" if margin > delta else "certified"
        res = CoalitionResult(S, status, w, z, float(pol_cost(pol, served, result.comp, costs)) / T,
                              margin, 0.0, u_now[list(S)], alt)
        res.witness_rounds = served  # kept for re-validation, not serialized
        results.append(res)
    refuted = [r for r in results if r.status == "refuted"]
    d_star = per_gamma[float(gamma)]
    frontier = [(g, per_gamma[g]) for g in gammas]
    if refuted:
        top = max(refuted, key=lambda r: (r.slack, len(r.members)))
        return CoreCertificate("Refuted", gamma, results, delta, blocking=top, sampled=sampled,
                               delta_star=d_star, frontier=frontier)
    return CoreCertificate("Certified", gamma, results, delta, sampled=sampled, delta_star=d_star, frontier=frontier)


def pol_cost(pol: _ThresholdPolicy, served: np.ndarray, comp, costs) -> float:
    """Total realized cost of a per-round allocation to the coalition."""
    N = served.shape[0]
    full = np.zeros((N, pol.n, pol.m), dtype=bool)
    full[:, pol.S, :] = served
    masks = (full.reshape(N, -1) * (1 << np.arange(pol.n * pol.m))).sum(axis=1).astype(np.int64)
    total = 0.0
    for j, c in enumerate(costs):
        sel = comp == j
        if sel.any():
            total += float(c.evaluate(masks[sel]).sum())
    return total


def _fit_budget(pol: _ThresholdPolicy, w: np.ndarray, budget: float):
    """Largest threshold allocation over the trace whose total cost is within budget."""
    N = pol.VS.shape[0]
    if pol.single:
        score = pol.VS[:, :, 0] @ w
        k = min(int(np.floor(budget + 1e-9)), int(np.count_nonzero(score > 0)))
        served = np.zeros(N, dtype=bool)
        if k > 0:
            idx = np.argsort(-score, kind="stable")[:k]
            served[idx] = True
        z = float(score[served].min()) if k > 0 else float("inf")
        return np.repeat(served[:, None, None], len(pol.S), axis=1), z
    z_lo, z_hi = pol.bracket(w, budget / N)
    for z in (z_lo, z_hi):
        served, cst = pol.allocate(w, z)
        if cst.sum() <= budget + 1e-9:
            return served, z
    served, _ = pol.allocate(w, pol.zmax(w) * 2 + 1)
    return served, float("inf")


def revalidate(cert: CoreCertificate, result: SimulationResult, instance: Instance) -> bool:
    """Recompute the blocking witness straight from the trace."""
    if cert.status != "Refuted" or cert.blocking is None:
        return True
    r = cert.blocking
    S = list(r.members)
    served = getattr(r, "witness_rounds")
    T = result.T
    V = result.values
    pol = _ThresholdPolicy(V, result.comp, instance.dist.costs(), S)
    if pol_cost(pol, served, result.comp, instance.dist.costs()) > instance.shares[S].sum() * T + 1e-9:
        return False
    alt = (V[:, S, :] * served).sum(axis=(0, 2)) / T
    now = (V * result.allocation).sum(axis=(0, 2))[S] / T
    return bool(np.all(alt > (1 + cert.gamma) * now + (cert.delta or 0.0)))


# ------------------------------------------------------------- oracle


MAX_ORACLE_AGENTS = 3
MAX_ORACLE_ATOMS = 6


def atom_support(instance: Instance) -> tuple[np.ndarray, np.ndarray]:
    """(probabilities, values (K, n)) of an all-atom single-good instance."""
    if instance.m != 1:
        raise SizeError("oracle handles one good per round")
    probs, vals = [], []
    for p, comp in instance.dist.components:
        if not isinstance(comp, Atom) or not isinstance(comp.cost, ZeroOneSingleGood):
            raise SizeError("oracle needs atom components with the 0-1 cost")
        probs.append(p)
        vals.append(comp.values[:, 0])
    return np.asarray(probs), np.asarray(vals)


def induced_atom_policy(instance: Instance, kind, beta) -> np.ndarray:
    """Which agents the paced mechanism serves on every atom (perturbation ignored)."""
    _, vals = atom_support(instance)
    V = vals[:, :, None]
    alloc = _induced(instance, kind, np.asarray(getattr(beta, "beta", beta), float), V,
                     np.arange(len(vals)))
    return alloc[:, :, 0]


def brute_force_core_oracle(instance: Instance, policy, gamma: float = 0.0, tol: float = 1e-9) -> bool:
    """Exact gamma-core membership for a tiny atom distribution.

    ``policy[a, i]`` says whether agent i is served on atom a.  For each
    coalition an LP maximizes the smallest surplus over (1+gamma) times the
    current utility among fractional choices of atoms to serve whose mass
    fits the coalition budget; the coalition blocks iff that surplus is
    positive.
    """
    from scipy.optimize import linprog

    probs, vals = atom_support(instance)
    K, n = vals.shape
    if n > MAX_ORACLE_AGENTS or K > MAX_ORACLE_ATOMS:
        raise SizeError(f"oracle limited to {MAX_ORACLE_AGENTS} agents and {MAX_ORACLE_ATOMS} atoms")
    policy = np.asarray(policy, dtype=bool)
    if float(probs @ policy.any(axis=1)) > instance.alpha + tol:
        return False
    util = (probs[:, None] * vals * policy).sum(axis=0)
    for r in range(1, n + 1):
        for S in itertools.combinations(range(n), r):
            S = list(S)
            # variables: x_1..x_K in [0, 1], t free; maximize t
            c = np.zeros(K + 1)
            c[-1] = -1.0
            A = [np.append(-(probs * vals[:, i]), 1.0) for i in S]
            rhs = [-(1 + gamma) * util[i] for i in S]
            A.append(np.append(probs, 0.0))
            rhs.append(float(instance.shares[S].sum()))
            out = linprog(c, A_ub=np.array(A), b_ub=np.array(rhs),
                          bounds=[(0, 1)] * K + [(None, None)], method="highs")
            if out.status != 0:
                raise RuntimeError(f"oracle LP failed: {out.message}")
            if -out.fun > tol:
                return False
    return True


def best_policy_value(instance: Instance, weights, mass: float) -> float:
    """Largest weighted value of any fractional atom policy of the given mass."""
    probs, vals = atom_support(instance)
    score = vals @ np.asarray(weights, float)
    total, left = 0.0, mass
    for a in np.argsort(-score, kind="stable"):
        take = min(probs[a], left)
        if take <= 0 or score[a] <= 0:
            break
        total += take * score[a]
        left -= take
    return total
