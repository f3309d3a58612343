import numpy as np
import pytest

from pacecore.model import Atom, DistributionSpec, Instance, ZeroOneSingleGood
from pacecore.instances import symmetric_pair, uniform_single_agent
from pacecore.reduction import (
    UNIT,
    StrategyError,
    feasibility_audit,
    read_trace,
    run_replications,
    simulate,
    summary_csv,
    write_trace,
)
from pacecore.strategies import Adaptive, TimeIndependentMap, Truthful, ValueScaling, pacing_profile


def constant_instance(value=0.4, share=0.5, T=100):
    dist = DistributionSpec([(1.0, Atom(np.array([[value]]), ZeroOneSingleGood(1, 1)))], 0.0)
    return Instance(1, 1, T, np.array([share]), dist, 0)


def test_truthful_below_cost_never_served():
    res = simulate(constant_instance(), "moulin", [Truthful()])
    assert not res.allocation.any()
    assert res.utilities[0] == 0.0
    assert res.budgets[-1, 0] == 50 * UNIT


def test_scaled_reports_buy_until_budget_runs_out():
    res = simulate(constant_instance(), "moulin", [ValueScaling(0.4)])
    served = res.allocation[:, 0, 0]
    assert served[:50].all() and not served[50:].any()
    assert res.total_cost == 50.0
    assert res.budgets[-1, 0] == 0
    assert res.depletion_times[0] == 50


@pytest.mark.parametrize("kind", ["proportional", "moulin", "potential"])
def test_zero_reports_mean_no_trade(kind):
    inst = symmetric_pair(T=200)
    zero = TimeIndependentMap(lambda v: np.zeros_like(v))
    res = simulate(inst, kind, [zero, zero])
    assert not res.allocation.any()
    assert np.all(res.payments == 0)
    assert np.all(res.budgets == res.budgets[0])


def test_same_seed_same_trace(tmp_path):
    inst = symmetric_pair(T=500, seed=3)
    a = simulate(inst, "proportional", pacing_profile([0.6, 0.6]))
    b = simulate(inst, "proportional", pacing_profile([0.6, 0.6]))
    write_trace(a, tmp_path / "a.jsonl")
    write_trace(b, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_batched_runs_match_single_runs():
    inst = symmetric_pair(T=300)
    strats = pacing_profile([0.5, 0.7])
    batch = run_replications(inst, "moulin", strats, [11, 12])
    one = simulate(inst, "moulin", strats, seed=12)
    assert np.array_equal(batch[1].payments, one.payments)
    assert np.array_equal(batch[1].allocation, one.allocation)


def test_audit_accepts_engine_output():
    inst = symmetric_pair(T=10_000)
    res = simulate(inst, "proportional", pacing_profile([0.5, 0.5]))
    assert feasibility_audit(res, inst)
    assert res.total_cost <= inst.alpha * inst.T


def test_audit_rejects_overpayment():
    inst = uniform_single_agent(T=200)
    res = simulate(inst, "moulin", pacing_profile([0.5]))
    t = int(np.argmax(res.payments[:, 0] > 0))
    res.payments[t, 0] += 1
    assert not feasibility_audit(res, inst)


def test_audit_rejects_tampered_cost():
    inst = uniform_single_agent(T=200)
    res = simulate(inst, "moulin", pacing_profile([0.5]))
    res.costs[0] = 1.0 - res.costs[0]
    assert not feasibility_audit(res, inst)


def test_depleted_agents_never_pay():
    inst = uniform_single_agent(T=2000)
    res = simulate(inst, "moulin", pacing_profile([0.1]))  # overspends quickly
    assert res.depleted.any()
    assert np.all(res.payments[res.depleted] == 0)
    assert feasibility_audit(res, inst)


def test_trace_round_trip(tmp_path):
    inst = symmetric_pair(T=400)
    res = simulate(inst, "moulin", pacing_profile([0.0, 0.8]))
    write_trace(res, tmp_path / "t.jsonl")
    back = read_trace(tmp_path / "t.jsonl")
    for name in ("values", "reports", "unbounded", "allocation", "payments", "budgets", "costs", "depleted"):
        assert np.array_equal(getattr(back, name), getattr(res, name)), name
    assert back.unbounded[:, 0].any()


def test_truncated_trace_refused(tmp_path):
    res = simulate(uniform_single_agent(T=50), "moulin", [Truthful()])
    write_trace(res, tmp_path / "t.jsonl")
    lines = (tmp_path / "t.jsonl").read_text().splitlines()
    (tmp_path / "s.jsonl").write_text("\n".join(lines[::2]) + "\n")
    from pacecore.model import ConfigError

    with pytest.raises(ConfigError, match="thinned"):
        read_trace(tmp_path / "s.jsonl")


def test_summary_csv_columns():
    res = simulate(uniform_single_agent(T=50), "moulin", pacing_profile([0.5]))
    head, row = summary_csv(res).splitlines()
    assert head == "agent,share,utility,spend,depletion_time"
    assert row.startswith("0,0.5,")


def test_negative_report_names_agent_and_round():
    def bad(v, hist):
        return np.array([-1.0]) if hist.t == 4 else v

    with pytest.raises(StrategyError) as info:
        simulate(symmetric_pair(T=20), "moulin", [Truthful(), Adaptive(bad)])
    assert info.value.agent == 1 and info.value.round == 5


def test_nan_report_rejected():
    nan = TimeIndependentMap(lambda v: np.full_like(v, np.nan))
    with pytest.raises(StrategyError):
        simulate(uniform_single_agent(T=10), "moulin", [nan])


def test_strategy_count_checked():
    from pacecore.model import ConfigError

    with pytest.raises(ConfigError):
        simulate(symmetric_pair(T=10), "moulin", [Truthful()])
