"""Instances, valuation distributions and submodular cost families.

Allocations are encoded as integer bitmasks over the ``n * m`` (agent, good)
pairs; pair ``(i, k)`` lives at bit ``i * m + k``.  Agents and goods are
0-based everywhere in the code.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

INSTANCE_SCHEMA = "pacecore-instance-v1"
DEFAULT_EPS = 1e-4
SUM_TOL = 1e-12
MAX_TABLE_PAIRS = 16


class ConfigError(ValueError):
    """Malformed instance, distribution or cost specification."""


def rng_stream(seed: int, *names: Any) -> np.random.Generator:
    """Independent generator for a named substream of ``seed``.

    Names may be strings or integers, e.g. ``rng_stream(7, "sampling", 3)``.
    """
    key = []
    for name in names:
        if isinstance(name, (int, np.integer)):
            key.append(int(name))
        else:
            key.append(zlib.crc32(str(name).encode("utf-8")))
    ss = np.random.SeedSequence(entropy=int(seed) & ((1 << 64) - 1), spawn_key=tuple(key))
    return np.random.Generator(np.random.PCG64(ss))


def harmonic(n: int) -> float:
    return float(sum(1.0 / j for j in range(1, n + 1)))


def popcount(masks: np.ndarray) -> np.ndarray:
    return np.bitwise_count(np.asarray(masks, dtype=np.int64)).astype(np.int64)


def to_mask(alloc: Any, m: int) -> int:
    """Accepts an int mask, an iterable of (agent, good) pairs or a boolean n x m array."""
    if isinstance(alloc, (int, np.integer)):
        return int(alloc)
    if isinstance(alloc, np.ndarray) and alloc.dtype == bool:
        bits = np.flatnonzero(alloc.reshape(-1))
        return int(sum(1 << int(b) for b in bits))
    mask = 0
    for i, k in alloc:
        mask |= 1 << (int(i) * m + int(k))
    return mask


def mask_to_pairs(mask: int, m: int) -> list[tuple[int, int]]:
    out = []
    b = 0
    while mask >> b:
        if (mask >> b) & 1:
            out.append((b // m, b % m))
        b += 1
    return out


def agent_masks(n: int, m: int) -> np.ndarray:
    """Bitmask of all goods belonging to each agent."""
    row = (1 << m) - 1
    return np.array([row << (i * m) for i in range(n)], dtype=np.int64)


# ---------------------------------------------------------------- costs


class CostFunction:
    """Base class; subclasses implement ``evaluate`` on arrays of masks."""

    kind = "abstract"

    def __init__(self, n: int, m: int):
        if n < 1 or m < 1:
            raise ConfigError(f"cost needs n, m >= 1 (got n={n}, m={m})")
        self.n = int(n)
        self.m = int(m)
        self._table: np.ndarray | None = None

    def evaluate(self, masks: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, alloc: Any) -> float:
        mask = to_mask(alloc, self.m)
        return float(self.evaluate(np.array([mask], dtype=np.int64))[0])

    def table(self) -> np.ndarray:
        """Cost of every allocation, indexed by mask.  Cached."""
        if self._table is None:
            nm = self.n * self.m
            if nm > 24:
                raise ConfigError(f"cost table over {nm} pairs is too large")
            self._table = self.evaluate(np.arange(1 << nm, dtype=np.int64))
        return self._table

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.to_dict()})"


class ZeroOneSingleGood(CostFunction):
    """c(A) = 1 if anything is allocated, else 0."""

    kind = "zero_one"

    def evaluate(self, masks):
        return (np.asarray(masks) != 0).astype(float)

    def to_dict(self):
        return {"kind": self.kind}


class ItemCoverage(CostFunction):
    """Each good k has a weight; the cost is the capped weight of goods given to anyone."""

    kind = "item_coverage"

    def __init__(self, n: int, m: int, weights: Sequence[float], cap: float = 1.0):
        super().__init__(n, m)
        w = np.asarray(weights, dtype=float)
        if w.shape != (m,):
            raise ConfigError(f"item_coverage needs {m} weights, got {w.shape}")
        if np.any(w <= 0):
            raise ConfigError("item_coverage weights must be positive")
        if not (0 < cap <= 1):
            raise ConfigError(f"item_coverage cap must lie in (0, 1], got {cap}")
        self.weights = w
        self.cap = float(cap)
        items = np.arange(1 << m)
        bits = (items[:, None] >> np.arange(m)) & 1
        self._by_items = np.minimum(self.cap, bits @ w)

    def evaluate(self, masks):
        masks = np.asarray(masks, dtype=np.int64)
        covered = np.zeros_like(masks)
        row = (1 << self.m) - 1
        for i in range(self.n):
            covered |= (masks >> (i * self.m)) & row
        return self._by_items[covered]

    def to_dict(self):
        return {"kind": self.kind, "weights": self.weights.tolist(), "cap": self.cap}


class ConcaveCardinality(CostFunction):
    """c(A) = g(|A|) for a step table g with g(0) = 0 and non-increasing increments."""

    kind = "concave_cardinality"

    def __init__(self, n: int, m: int, steps: Sequence[float]):
        super().__init__(n, m)
        g = np.asarray(steps, dtype=float)
        if g.shape != (n * m + 1,):
            raise ConfigError(f"concave_cardinality needs {n * m + 1} steps, got {g.shape}")
        if g[0] != 0:
            raise ConfigError("concave_cardinality requires g(0) = 0")
        inc = np.diff(g)
        if np.any(g[1:] <= 0) or np.any(inc < -1e-15) or np.any(np.diff(inc) > 1e-15) or g[-1] > 1:
            raise ConfigError("concave_cardinality steps must be positive, increasing, concave, <= 1")
        self.steps = g

    def evaluate(self, masks):
        return self.steps[popcount(masks)]

    def to_dict(self):
        return {"kind": self.kind, "steps": self.steps.tolist()}


class ExplicitTable(CostFunction):
    """Arbitrary set function given as a full table; validated on demand."""

    kind = "table"

    def __init__(self, n: int, m: int, values: Sequence[float]):
        super().__init__(n, m)
        if n * m > MAX_TABLE_PAIRS:
            raise ConfigError(f"explicit tables are limited to n*m <= {MAX_TABLE_PAIRS}")
        v = np.asarray(values, dtype=float)
        if v.shape != (1 << (n * m),):
            raise ConfigError(f"table needs {1 << (n * m)} entries, got {v.size}")
        self.values = v
        self._table = v

    def evaluate(self, masks):
        return self.values[np.asarray(masks, dtype=np.int64)]

    def to_dict(self):
        return {"kind": self.kind, "values": self.values.tolist()}


def cost_from_dict(d: dict, n: int, m: int) -> CostFunction:
    kind = d.get("kind")
    if kind == "zero_one":
        return ZeroOneSingleGood(n, m)
    if kind == "item_coverage":
        return ItemCoverage(n, m, d["weights"], d.get("cap", 1.0))
    if kind == "concave_cardinality":
        return ConcaveCardinality(n, m, d["steps"])
    if kind == "table":
        return ExplicitTable(n, m, d["values"])
    raise ConfigError(f"unknown cost kind {kind!r}")


@dataclass
class ValidationReport:
    ok: bool
    axiom: str | None = None
    pair: tuple[int, int] | None = None
    message: str = ""


def validate_cost(c: CostFunction, n: int | None = None, m: int | None = None) -> ValidationReport:
    """Exhaustively check normalization, range, monotonicity and submodularity.

    Submodularity is checked through the equivalent local condition
    c(A+x) - c(A) >= c(A+x+y) - c(A+y); a failure is reported as the pair
    (A+x, A+y), which violates the union/intersection form directly.
    """
    n = c.n if n is None else n
    m = c.m if m is None else m
    if (n, m) != (c.n, c.m):
        raise ConfigError(f"cost built for n={c.n}, m={c.m} but validated for n={n}, m={m}")
    nm = n * m
    if nm > MAX_TABLE_PAIRS:
        raise ConfigError(f"exhaustive validation limited to n*m <= {MAX_TABLE_PAIRS}")
    t = c.table()
    masks = np.arange(1 << nm, dtype=np.int64)
    if t[0] != 0:
        return ValidationReport(False, "normalized", (0, 0), "c(empty) != 0")
    bad = np.flatnonzero(t[1:] <= 0)
    if bad.size:
        a = int(bad[0] + 1)
        return ValidationReport(False, "normalized", (a, a), f"c({a:#x}) = {t[a]} for a nonempty set")
    bad = np.flatnonzero((t < 0) | (t > 1))
    if bad.size:
        a = int(bad[0])
        return ValidationReport(False, "range", (a, a), f"c({a:#x}) = {t[a]} outside [0, 1]")
    for x in range(nm):
        bx = 1 << x
        base = masks[(masks & bx) == 0]
        gain_x = t[base | bx] - t[base]
        bad = np.flatnonzero(gain_x < -1e-12)
        if bad.size:
            a = int(base[bad[0]])
            return ValidationReport(False, "monotone", (a, a | bx), "adding a pair lowered the cost")
        for y in range(x + 1, nm):
            by = 1 << y
            sel = (base & by) == 0
            b2 = base[sel]
            lhs = gain_x[sel]
            rhs = t[b2 | bx | by] - t[b2 | by]
            bad = np.flatnonzero(rhs > lhs + 1e-12)
            if bad.size:
                a = int(b2[bad[0]])
                return ValidationReport(False, "submodular", (a | bx, a | by),
                                        "c(A|B) + c(A&B) > c(A) + c(B)")
    return ValidationReport(True)


# --------------------------------------------------------- distributions


@dataclass(frozen=True)
class Atom:
    values: np.ndarray  # n x m
    cost: CostFunction


@dataclass(frozen=True)
class Box:
    low: np.ndarray  # n x m
    high: np.ndarray
    cost: CostFunction


@dataclass(frozen=True)
class PermutedAtom:
    """Agent i receives row sigma(i) of ``base`` for a uniform random permutation sigma."""

    base: np.ndarray  # n x m
    cost: CostFunction


Component = Atom | Box | PermutedAtom


@dataclass
class DistributionSpec:
    components: list[tuple[float, Component]]
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if not self.components:
            raise ConfigError("distribution has no components")
        probs = np.array([p for p, _ in self.components], dtype=float)
        if np.any(probs < 0):
            raise ConfigError("component probabilities must be nonnegative")
        if abs(probs.sum() - 1.0) > SUM_TOL:
            raise ConfigError(f"component probabilities sum to {probs.sum()!r}, not 1")
        if self.eps < 0:
            raise ConfigError("perturbation eps must be >= 0")
        shapes = set()
        for _, comp in self.components:
            arr = comp.base if isinstance(comp, PermutedAtom) else (
                comp.values if isinstance(comp, Atom) else comp.low)
            shapes.add(arr.shape)
            lo, hi = (comp.low, comp.high) if isinstance(comp, Box) else (arr, arr)
            if np.any(lo < 0) or np.any(hi > 1) or np.any(lo > hi):
                raise ConfigError("component values must lie in [0, 1]")
            if (comp.cost.n, comp.cost.m) != arr.shape:
                raise ConfigError("component cost dimensions do not match its values")
        if len(shapes) != 1:
            raise ConfigError(f"components disagree on shape: {sorted(shapes)}")
        self.probs = probs

    @property
    def shape(self) -> tuple[int, int]:
        _, comp = self.components[0]
        arr = comp.low if isinstance(comp, Box) else (
            comp.base if isinstance(comp, PermutedAtom) else comp.values)
        return arr.shape

    def costs(self) -> list[CostFunction]:
        return [comp.cost for _, comp in self.components]


@dataclass
class ValueProfile:
    values: np.ndarray
    cost: CostFunction


def _uniforms(rng: np.random.Generator, shape: tuple, stratified: bool) -> np.ndarray:
    """Uniform draws; with ``stratified`` every column is a Latin-hypercube column."""
    if not stratified or shape[0] == 0:
        return rng.random(shape)
    N = shape[0]
    flat = int(np.prod(shape[1:], dtype=np.int64))
    strata = np.argsort(rng.random((flat, N)), axis=1).T.reshape(shape)
    return (strata + rng.random(shape)) / N


def sample_values(dist: DistributionSpec, rng: np.random.Generator, size: int, stratified: bool = False):
    """Draw ``size`` rounds.

    Returns ``(V, comp)`` with ``V`` of shape (size, n, m) and ``comp`` the
    mixture component index of every round (which pins the round's cost).
    Plain draws are i.i.d.; ``stratified=True`` uses Latin-hypercube
    uniforms, which keeps every marginal exact in distribution but makes the
    rounds dependent, so it is only meant for Monte-Carlo averages.
    """
    n, m = dist.shape
    u = _uniforms(rng, (size,), stratified)
    comp = np.minimum(np.searchsorted(np.cumsum(dist.probs), u, side="right"), len(dist.components) - 1)
    V = np.zeros((size, n, m))
    for j, (_, c) in enumerate(dist.components):
        idx = np.flatnonzero(comp == j)
        if idx.size == 0:
            continue
        if isinstance(c, Atom):
            V[idx] = c.values
        elif isinstance(c, Box):
            V[idx] = c.low + (c.high - c.low) * _uniforms(rng, (idx.size, n, m), stratified)
        else:
            perm = np.argsort(rng.random((idx.size, n)), axis=1)
            V[idx] = c.base[perm]
    if dist.eps > 0:
        V = np.clip(V + dist.eps * _uniforms(rng, V.shape, stratified), 0.0, 1.0)
    return V, comp


def sample_round(dist: DistributionSpec, rng: np.random.Generator) -> ValueProfile:
    V, comp = sample_values(dist, rng, 1)
    return ValueProfile(V[0], dist.components[int(comp[0])][1].cost)


# --------------------------------------------------------------- instance


@dataclass
class Instance:
    n: int
    m: int
    T: int
    shares: np.ndarray
    dist: DistributionSpec
    seed: int = 0
    strategies: list[dict] = field(default_factory=list)

    def __post_init__(self):
        self.shares = np.asarray(self.shares, dtype=float)
        if self.n < 1 or self.m < 1 or self.T < 1:
            raise ConfigError(f"need n, m, T >= 1 (got {self.n}, {self.m}, {self.T})")
        if self.shares.shape != (self.n,):
            raise ConfigError(f"expected {self.n} shares, got {self.shares.shape}")
        if np.any(self.shares <= 0) or np.any(self.shares >= 1):
            raise ConfigError("every share must lie in (0, 1)")
        if self.shares.sum() > 1 + SUM_TOL:
            raise ConfigError(f"shares sum to {self.shares.sum()!r} > 1")
        if self.dist.shape != (self.n, self.m):
            raise ConfigError(f"distribution shape {self.dist.shape} != ({self.n}, {self.m})")

    @property
    def alpha(self) -> float:
        return float(self.shares.sum())

    def with_horizon(self, T: int) -> "Instance":
        return Instance(self.n, self.m, int(T), self.shares.copy(), self.dist, self.seed,
                        list(self.strategies))

    def with_seed(self, seed: int) -> "Instance":
        return Instance(self.n, self.m, self.T, self.shares.copy(), self.dist, int(seed),
                        list(self.strategies))


def _component_to_dict(prob: float, comp: Component) -> dict:
    d: dict[str, Any] = {"prob": prob}
    if isinstance(comp, Atom):
        d.update(kind="atom", values=comp.values.tolist())
    elif isinstance(comp, Box):
        d.update(kind="box", intervals=np.stack([comp.low, comp.high], axis=-1).tolist())
    else:
        d.update(kind="permuted_atom", base=comp.base.tolist())
    d["cost"] = comp.cost.to_dict()
    return d


def _component_from_dict(d: dict, n: int, m: int, named_costs: dict) -> tuple[float, Component]:
    cost_spec = d.get("cost", {"kind": "zero_one"})
    if isinstance(cost_spec, str):
        if cost_spec not in named_costs:
            raise ConfigError(f"unknown cost id {cost_spec!r}")
        cost = named_costs[cost_spec]
    else:
        cost = cost_from_dict(cost_spec, n, m)
    kind = d.get("kind")
    try:
        if kind == "atom":
            vals = np.asarray(d["values"], dtype=float).reshape(n, m)
            return float(d["prob"]), Atom(vals, cost)
        if kind == "box":
            iv = np.asarray(d["intervals"], dtype=float).reshape(n, m, 2)
            return float(d["prob"]), Box(iv[..., 0], iv[..., 1], cost)
        if kind == "permuted_atom":
            base = np.asarray(d["base"], dtype=float).reshape(n, m)
            return float(d["prob"]), PermutedAtom(base, cost)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad {kind} component: {exc}") from exc
    raise ConfigError(f"unknown component kind {kind!r}")


def instance_to_dict(inst: Instance) -> dict:
    d = {
        "schema": INSTANCE_SCHEMA,
        "n": inst.n,
        "m": inst.m,
        "T": inst.T,
        "shares": inst.shares.tolist(),
        "alpha_check": inst.alpha,
        "distribution": {
            "components": [_component_to_dict(p, c) for p, c in inst.dist.components],
            "eps": inst.dist.eps,
        },
        "seed": inst.seed,
    }
    if inst.strategies:
        d["strategies"] = inst.strategies
    return d


def instance_from_dict(d: dict) -> Instance:
    if d.get("schema", INSTANCE_SCHEMA) != INSTANCE_SCHEMA:
        raise ConfigError(f"unsupported schema {d.get('schema')!r}")
    try:
        n, m, T = int(d["n"]), int(d["m"]), int(d["T"])
        shares = np.asarray(d["shares"], dtype=float)
        dd = d["distribution"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"instance is missing a field: {exc}") from exc
    if "alpha_check" in d and abs(float(d["alpha_check"]) - shares.sum()) > SUM_TOL:
        raise ConfigError(f"alpha_check {d['alpha_check']} != sum of shares {shares.sum()}")
    named = {k: cost_from_dict(v, n, m) for k, v in dd.get("costs", {}).items()}
    comps = [_component_from_dict(c, n, m, named) for c in dd.get("components", [])]
    dist = DistributionSpec(comps, float(dd.get("eps", DEFAULT_EPS)))
    return Instance(n, m, T, shares, dist, int(d.get("seed", 0)), list(d.get("strategies", [])))


def load_instance(path: str | Path) -> Instance:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"instance file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"instance file {p} is not valid JSON: {exc}") from exc
    return instance_from_dict(data)


def save_instance(inst: Instance, path: str | Path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2), encoding="utf-8")


def single_good_instance(values_low: Iterable[float], values_high: Iterable[float],
                         shares: Sequence[float], T: int = 1000, eps: float = DEFAULT_EPS,
                         seed: int = 0) -> Instance:
    """Convenience: one good per round, independent uniform boxes, 0-1 cost."""
    low = np.asarray(list(values_low), dtype=float).reshape(-1, 1)
    high = np.asarray(list(values_high), dtype=float).reshape(-1, 1)
    n = low.shape[0]
    dist = DistributionSpec([(1.0, Box(low, high, ZeroOneSingleGood(n, 1)))], eps)
    return Instance(n, 1, T, np.asarray(shares, dtype=float), dist, seed)
