import json

import numpy as np
import pytest
from conftest import solved

from pacecore.equilibrium import (
    NonConvergence,
    PacingProfile,
    _bisect_coordinate,
    early_cutoff,
    estimate_spend,
    load_profile,
    solve_pacing,
    verify_focal,
)
from pacecore.instances import symmetric_pair, uniform_single_agent
from pacecore.model import ConfigError, rng_stream


@pytest.mark.parametrize("b", [0.2, 0.5, 0.8])
def test_uniform_spend_is_one_minus_beta(b):
    est = estimate_spend(uniform_single_agent(), "moulin", [b], samples=100_000)
    assert abs(est.mean[0] - (1 - b)) <= max(est.half_width[0], 1e-3)


def test_huge_beta_spends_nothing():
    est = estimate_spend(symmetric_pair(), "moulin", [1e6, 1e6], samples=5000)
    assert np.all(est.mean == 0)


def test_symmetric_spend_is_exchangeable():
    est = estimate_spend(symmetric_pair(), "proportional", [0.7, 0.7], samples=100_000)
    assert abs(est.mean[0] - est.mean[1]) <= est.half_width.sum()


def test_too_few_samples_rejected():
    with pytest.raises(ValueError):
        estimate_spend(uniform_single_agent(), "moulin", [0.5], samples=10)


def test_spend_non_increasing_in_own_beta():
    inst = symmetric_pair()
    grid = np.linspace(0.2, 2.0, 10)
    spends = [estimate_spend(inst, "moulin", [b, 0.6], samples=20_000, rng=rng_stream(0, "same")).mean[0]
              for b in grid]
    assert np.all(np.diff(spends) <= 0)


def test_bisection_returns_smallest_feasible_point():
    got = _bisect_coordinate(lambda b: 1 - b, 0.3, 2.0)
    assert 0.7 <= got <= 0.7 + 1e-8


def test_solver_uniform_single_agent():
    _, _, prof = solved("uniform")
    assert prof.converged
    assert prof.beta[0] == pytest.approx(0.5, abs=1e-3)


def test_solver_symmetric_pair():
    _, _, prof = solved("pair-moulin")
    assert abs(prof.beta[0] - prof.beta[1]) <= 2e-3


def test_solver_lower_bound_near_one():
    inst, _, prof = solved("lower-4")
    assert np.all(np.abs(prof.beta - (1 - 0.01)) <= 0.05)
    est = estimate_spend(inst, "moulin", prof.beta, samples=100_000)
    assert np.all(np.abs(est.mean - inst.shares) <= est.half_width + 1e-3)


def test_nonconvergence_carries_iterate():
    with pytest.raises(NonConvergence) as info:
        solve_pacing(symmetric_pair(), "moulin", max_iters=1)
    p = info.value.profile
    assert not p.converged and p.beta.shape == (2,) and p.residuals.shape == (2,)


def test_profile_round_trip(tmp_path):
    p = PacingProfile(np.array([0.5, 0.0]), np.array([1e-4, 0.0]), 7, 1000, True)
    path = tmp_path / "b.json"
    path.write_text(json.dumps(p.to_dict()))
    back = load_profile(path)
    assert back.beta.tolist() == [0.5, 0.0] and back.iterations == 7
    with pytest.raises(ConfigError):
        load_profile(tmp_path / "missing.json")


def test_focal_at_solution():
    inst, kind, prof = solved("uniform")
    rep = verify_focal(inst, kind, prof, runs=200, T=10_000)
    assert rep.early_fraction <= 0.05
    assert abs(rep.spend_ratio[0] - 1) <= 0.03


def test_overspending_depletes_early():
    inst, kind, prof = solved("uniform")
    rep = verify_focal(inst, kind, prof.beta / 2, runs=50, T=10_000)
    assert rep.early_fraction >= 0.95


def test_underspending_stays_within_budget():
    inst, kind, prof = solved("uniform")
    lo = verify_focal(inst, kind, prof.beta * 2, runs=50, T=10_000)
    at = verify_focal(inst, kind, prof.beta, runs=50, T=10_000)
    assert lo.early_fraction == 0 and lo.spend_ratio[0] <= 1
    assert lo.utilities[0] <= at.utilities[0]


def test_cutoff_value():
    assert early_cutoff(10_000) == pytest.approx(10_000 - 200 * np.log(10_000))
