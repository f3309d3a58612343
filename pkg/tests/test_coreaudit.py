import json

import numpy as np
import pytest
from conftest import solved
from helpers import KINDS, atom_instance, tiny_case

from pacecore.coreaudit import (
    AuditError,
    _ThresholdPolicy,
    audit_ex_post,
    best_policy_value,
    brute_force_core_oracle,
    certify_ex_ante,
    coalitions,
    induced_atom_policy,
    revalidate,
    save_certificate,
)
from pacecore.instances import correlated_pair, symmetric_pair, uniform_single_agent
from pacecore.mechanisms import SizeError
from pacecore.model import ConcaveCardinality, ItemCoverage, rng_stream, sample_values
from pacecore.reduction import simulate
from pacecore.strategies import TimeIndependentMap, pacing_profile


def test_coalitions_exact_and_sampled():
    exact, sampled = coalitions(3)
    assert not sampled and len(exact) == 7
    many, sampled = coalitions(13, rng_stream(0, "c"))
    assert sampled
    assert len(many) == 13 + 1 + 256
    assert tuple(range(13)) in many and all((i,) in many for i in range(13))


def test_single_agent_half_space_certified():
    cert = certify_ex_ante(uniform_single_agent(), "moulin", [0.5], samples=100_000)
    assert cert.status == "Certified"


def test_certificate_json(tmp_path):
    cert = certify_ex_ante(uniform_single_agent(), "moulin", [0.5], samples=20_000)
    save_certificate(cert, tmp_path / "c.json")
    d = json.loads((tmp_path / "c.json").read_text())
    assert d["schema"] == "pacecore-cert-v1" and d["coalitions"][0]["S"] == [0]


def test_overspending_policy_not_certified():
    cert = certify_ex_ante(uniform_single_agent(), "moulin", [0.3], samples=20_000)
    assert cert.status != "Certified"


def test_underspending_policy_refuted():
    # beta far above equilibrium buys too little; the agent's own budget does better
    cert = certify_ex_ante(uniform_single_agent(), "moulin", [0.9], samples=20_000)
    assert cert.status == "Refuted" and cert.blocking.members == (0,)


# ------------------------------------------------------------- ex post


def test_zero_report_trace_refuted_by_singleton():
    inst = symmetric_pair(T=2000)
    zero = TimeIndependentMap(lambda v: np.zeros_like(v))
    res = simulate(inst, "moulin", [zero, zero])
    cert = audit_ex_post(res, inst, gamma=5.0, delta=0.01)
    assert cert.status == "Refuted"
    assert len(cert.coalition((0,)).members) == 1 and cert.coalition((0,)).status == "refuted"
    assert revalidate(cert, res, inst)


def test_forged_witness_fails_revalidation():
    inst = symmetric_pair(T=2000)
    zero = TimeIndependentMap(lambda v: np.zeros_like(v))
    res = simulate(inst, "moulin", [zero, zero])
    cert = audit_ex_post(res, inst, delta=0.01)
    cert.blocking.witness_rounds = np.ones_like(cert.blocking.witness_rounds)  # buys every round
    assert not revalidate(cert, res, inst)


def test_thinned_trace_refused():
    inst = uniform_single_agent(T=100)
    res = simulate(inst, "moulin", pacing_profile([0.5]))
    res.thinned = True
    with pytest.raises(AuditError):
        audit_ex_post(res, inst)


def test_ex_post_frontier_reports_each_gamma():
    inst = uniform_single_agent(T=5000)
    res = simulate(inst, "moulin", pacing_profile([0.5]))
    cert = audit_ex_post(res, inst, beta=[0.5], delta=0.05, gamma_grid=[0.0, 0.5, 1.0])
    gs = [g for g, _ in cert.frontier]
    ds = [d for _, d in cert.frontier]
    assert gs == [0.0, 0.5, 1.0]
    assert all(a >= b for a, b in zip(ds, ds[1:]))  # larger gamma, smaller margin
    assert cert.status == "Certified"


def test_ex_post_general_cost_runs():
    inst = correlated_pair(T=500)
    res = simulate(inst, "proportional", pacing_profile([0.6, 0.6]))
    cert = audit_ex_post(res, inst, beta=[0.6, 0.6], delta=0.05, directions=4)
    assert cert.status in ("Certified", "Refuted")
    assert revalidate(cert, res, inst)


# ------------------------------------------------------ threshold policies


@pytest.mark.parametrize("cost", [
    ConcaveCardinality(2, 2, [0.0, 0.5, 0.8, 0.95, 1.0]),
    ItemCoverage(2, 2, [0.5, 0.4], cap=0.8),
])
def test_threshold_cost_non_increasing_in_z(cost):
    rng = np.random.default_rng(2)
    V = rng.uniform(0, 1, size=(2000, 2, 2))
    pol = _ThresholdPolicy(V, np.zeros(2000, int), [cost], [0, 1])
    w = np.array([1.3, 0.7])
    zs = np.linspace(0, pol.zmax(w), 25)
    means = [pol.allocate(w, z)[1].mean() for z in zs]
    assert np.all(np.diff(means) <= 1e-12)
    lo, hi = pol.bracket(w, 0.4)
    assert pol.allocate(w, lo)[1].mean() >= 0.4 > pol.allocate(w, hi)[1].mean()


def test_threshold_tie_prefers_more_pairs():
    cost = ConcaveCardinality(1, 2, [0.0, 0.5, 1.0])
    V = np.array([[[0.5, 0.5]]])
    pol = _ThresholdPolicy(V, np.zeros(1, int), [cost], [0])
    served, _ = pol.allocate(np.ones(1), 1.0)  # empty, one item and both items all score 0
    assert served.all()


def test_single_good_threshold_is_score_cut():
    inst = uniform_single_agent()
    V, comp = sample_values(inst.dist, rng_stream(0, "s"), 10_000)
    pol = _ThresholdPolicy(V, comp, inst.dist.costs(), [0])
    lo, hi = pol.bracket(np.ones(1), 0.5)
    assert pol.allocate(np.ones(1), lo)[1].mean() >= 0.5 > pol.allocate(np.ones(1), hi)[1].mean()
    assert lo == pytest.approx(0.5, abs=0.02)


# ----------------------------------------------------------------- oracle


def test_oracle_accepts_top_half_space():
    inst = atom_instance([0.25] * 4, [[0.9], [0.7], [0.3], [0.1]], [0.5])
    policy = np.array([[True], [True], [False], [False]])
    assert brute_force_core_oracle(inst, policy)


def test_oracle_rejects_lowest_atoms():
    inst = atom_instance([0.25] * 4, [[0.9], [0.7], [0.3], [0.1]], [0.5])
    policy = np.array([[False], [False], [True], [True]])
    assert not brute_force_core_oracle(inst, policy)


def test_oracle_gamma_tolerates_small_loss():
    inst = atom_instance([0.25] * 4, [[0.9], [0.7], [0.3], [0.1]], [0.5])
    policy = np.array([[True], [False], [True], [False]])  # 1.2 of the best 1.6
    assert not brute_force_core_oracle(inst, policy, gamma=0.3)
    assert brute_force_core_oracle(inst, policy, gamma=0.34)


def test_oracle_size_limits():
    with pytest.raises(SizeError):
        brute_force_core_oracle(atom_instance([1 / 7] * 7, [[0.5]] * 7, [0.5]), np.zeros((7, 1), bool))
    with pytest.raises(SizeError):
        brute_force_core_oracle(uniform_single_agent(), np.zeros((1, 1), bool))


@pytest.mark.parametrize("trial", range(6))
def test_half_space_beats_explicit_policies_of_equal_mass(trial):
    rng = np.random.default_rng(trial)
    inst, beta = tiny_case(rng, "moulin", balanced=False)
    probs = np.array([p for p, _ in inst.dist.components])
    vals = np.array([c.values[:, 0] for _, c in inst.dist.components])
    w = 1 / beta
    for subset in range(1, 1 << len(probs)):
        pick = np.array([(subset >> a) & 1 for a in range(len(probs))], bool)
        mass = float(probs[pick].sum())
        assert (probs[pick] * (vals[pick] @ w)).sum() <= best_policy_value(inst, w, mass) + 1e-12


@pytest.mark.parametrize("trial", range(8))
def test_oracle_agrees_with_certifier(trial):
    rng = np.random.default_rng(100 + trial)
    kind = KINDS[trial % 3]
    inst, beta = tiny_case(rng, kind, balanced=trial % 2 == 0)
    cert = certify_ex_ante(inst, kind, beta, samples=20_000)
    verdict = brute_force_core_oracle(inst, induced_atom_policy(inst, kind, beta))
    if cert.status != "Inconclusive":
        assert verdict == (cert.status == "Certified")


def test_proportional_grand_coalition_tie_flag():
    inst, kind, prof = solved("pair-proportional")
    cert = certify_ex_ante(inst, kind, prof, samples=50_000)
    assert cert.status == "Certified"
    assert all(c.status == "certified" for c in cert.coalitions)
    # the induced policy is itself the grand coalition's threshold policy
    assert cert.coalition((0, 1)).tie
