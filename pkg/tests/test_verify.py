import math

import numpy as np
import pytest

import agendamech as am


def test_oracle_passes_posted_mechanism(golden_economy):
    econ = golden_economy.with_outside_g(0.5)
    sol = am.solve(econ)
    rep = am.verify_solution(econ, sol)
    assert rep.passed
    # middle branch: every participation constraint binds exactly
    for _, slack in rep.participation_slack:
        assert slack == pytest.approx(0.0, abs=1e-12)


def test_oracle_passes_understate_solution_41_grid(golden_economy):
    sol = am.solve(golden_economy)
    rep = am.verify_solution(golden_economy, sol, grid_size=41, tol=1e-8)
    assert rep.passed, rep.summary()
    assert rep.worst_deviation is None or rep.worst_deviation.gain <= 1e-8


def test_oracle_flags_negative_slack_only_for_excluded(majority_economy):
    sol = am.solve(majority_economy)
    rep = am.verify_solution(majority_economy, sol)
    assert rep.passed
    slack = dict(rep.participation_slack)
    for i in majority_economy.agents:
        if i in sol.excluded:
            assert slack[i] < -1e-6
        else:
            assert slack[i] >= -1e-9


class _BrokenSchedule:
    """Hand-built rule with a deliberate downward step in the allocation."""

    kind = "broken"
    agent = 1
    anchor = 0.0

    def allocation(self, x):
        x = np.asarray(x, float)
        out = np.where(x < 0.5, 0.8, 0.2)
        return float(out) if out.ndim == 0 else out

    def transfer(self, x):
        x = np.asarray(x, float)
        out = np.zeros_like(x)
        return float(out) if out.ndim == 0 else out


def test_oracle_detects_non_monotone_allocation(golden_economy):
    dsic_ok, worst, mono_ok, viol = am.check_dsic(golden_economy, [_BrokenSchedule()])
    assert not mono_ok
    assert viol is not None and viol.agent == 1
    assert viol.g_low > viol.g_high
    assert not dsic_ok  # a free higher level is a profitable deviation
    assert worst.gain > 1e-3


def test_oracle_detects_tampered_transfer(golden_economy):
    sol = am.solve(golden_economy)
    base = sol.schedule_for(1)

    class Tampered:
        kind = "tampered"
        agent = 1
        anchor = base.anchor

        def allocation(self, x):
            return base.allocation(x)

        def transfer(self, x):
            x = np.asarray(x, float)
            out = np.asarray(base.transfer(x), float) - 0.01 * (x > 0.6)
            return float(out) if out.ndim == 0 else out

    dsic_ok, worst, _, _ = am.check_dsic(golden_economy, [Tampered()])
    assert not dsic_ok and worst.gain > 5e-3


def test_check_participation_direct_evaluation(golden_economy):
    sol = am.solve(golden_economy)
    ok, slacks = am.check_participation(
        golden_economy, sol.g_star, sol.transfers, sol.coalition)
    assert ok
    # direct evaluation: theta*phi(g) - t - v_bar
    theta = 0.8
    expected = theta * math.log(1.0 + sol.g_star) - sol.transfers[1]
    assert dict(slacks)[1] == pytest.approx(expected, abs=1e-12)


def test_grid_refinement_never_flips_pass(golden_economy, concave_economy,
                                          convex_economy, majority_economy):
    for econ in (golden_economy, concave_economy, convex_economy, majority_economy):
        sol = am.solve(econ)
        assert am.verify_solution(econ, sol, grid_size=41).passed
        assert am.verify_solution(econ, sol, grid_size=82).passed


# ---------------------------------------------------------------------------
# Efficient-mechanism demo
# ---------------------------------------------------------------------------


@pytest.fixture
def vcg_economy(log_tech):
    return am.Economy(0.5, (0.8, 0.7), am.uniform(0.0, 1.0), log_tech,
                      am.linear_reservation(log_tech, 3), 3, 0.0)


def test_vcg_efficient_level_closed_form(vcg_economy):
    rep = am.vcg_demo(vcg_economy, 1e-3)
    assert rep.g_efficient == pytest.approx(1.0, abs=1e-9)  # sum(theta) - 1


def test_vcg_budget_deficit_positive(vcg_economy):
    rep = am.vcg_demo(vcg_economy, 1e-3)
    # deficit = (n-1) * (sum(theta) * ln(1 + g*) - g*)
    expected = 2.0 * (2.0 * math.log(2.0) - 1.0)
    assert rep.deficit == pytest.approx(expected, abs=1e-9)
    assert rep.deficit > 0.0


def test_vcg_perturbation_gain_positive_and_first_order(vcg_economy):
    gains = {}
    for eps in (1e-2, 1e-3, 1e-4):
        rep = am.vcg_demo(vcg_economy, eps)
        assert rep.perturbation_gain > 0.0
        # closed form: sum(theta) * (exp(eps/theta_j) - 1 - eps/theta_j)
        total, tj = 2.0, 0.5
        expected = total * (math.exp(eps / tj) - 1.0) - (total / tj) * eps
        assert rep.perturbation_gain == pytest.approx(expected, rel=1e-12)
        gains[eps] = rep.perturbation_gain
    # the normalized gain stays bounded as epsilon halves
    assert gains[1e-3] / 1e-3 <= gains[1e-2] / 1e-2
    assert gains[1e-4] / 1e-4 <= gains[1e-3] / 1e-3
    # leading order is quadratic: gain/eps^2 stabilizes near sum/(2 tj^2)
    assert gains[1e-4] / 1e-4**2 == pytest.approx(2.0 / (2.0 * 0.25), rel=1e-2)


def test_vcg_zero_epsilon_zero_gain(vcg_economy):
    assert am.vcg_demo(vcg_economy, 0.0).perturbation_gain == 0.0


def test_vcg_requires_log_technology():
    root = am.power_technology(0.5)
    econ = am.Economy(0.5, (0.8,), am.uniform(0.0, 1.0), root,
                      am.linear_reservation(root, 2), 2, 0.0)
    with pytest.raises(am.InvalidEconomy):
        am.vcg_demo(econ, 1e-3)


def test_vcg_groves_transfers_are_dsic(vcg_economy):
    # direct deviation scan of the aligned transfer rule on a grid
    thetas = [0.5, 0.8, 0.7]
    total = sum(thetas)

    def g_of(profile):
        return max(sum(profile) - 1.0, 0.0)

    def t_of(profile, i):
        g = g_of(profile)
        return g - (sum(profile) - profile[i]) * math.log(1.0 + g)

    grid = np.linspace(0.0, 1.0, 21)
    for i in range(3):
        for true in grid:
            profile = list(thetas)
            profile[i] = float(true)
            u_truth = true * math.log(1.0 + g_of(profile)) - t_of(profile, i)
            for lie in grid:
                dev = list(thetas)
                dev[i] = float(lie)
                u_dev = true * math.log(1.0 + g_of(dev)) - t_of(dev, i)
                assert u_truth >= u_dev - 1e-9


# ---------------------------------------------------------------------------
# Lottery dominance
# ---------------------------------------------------------------------------


def test_dominance_degenerate_lottery_exact(golden_economy):
    rep = am.stochastic_dominance_check(golden_economy, [((0.7,), (1.0,))])
    row = rep.rows[0]
    assert row.g_deterministic == pytest.approx(0.7, abs=1e-9)
    assert row.gap == pytest.approx(0.0, abs=1e-12)


def test_dominance_two_point_lottery_golden(golden_economy):
    rep = am.stochastic_dominance_check(golden_economy, [((0.0, 1.0), (0.5, 0.5))],
                                        samples=500)
    row = rep.rows[0]
    assert row.g_deterministic == pytest.approx(math.sqrt(2.0) - 1.0, abs=1e-9)
    assert row.gap == pytest.approx(0.5 - (math.sqrt(2.0) - 1.0), abs=1e-9)
    assert row.gap > 0.0
    assert row.mc_phi_error is not None


def test_dominance_gap_grows_with_spread(golden_economy):
    spreads = (0.1, 0.2, 0.3, 0.4)
    lotteries = [((0.5 - s, 0.5 + s), (0.5, 0.5)) for s in spreads]
    rep = am.stochastic_dominance_check(golden_economy, lotteries)
    gaps = [row.gap for row in rep.rows]
    assert all(b >= a - 1e-12 for a, b in zip(gaps, gaps[1:]))
    assert rep.all_dominated


def test_dominance_validates_lotteries(golden_economy):
    with pytest.raises(am.ModelError):
        am.stochastic_dominance_check(golden_economy, [((0.4, 0.6), (0.7, 0.7))])
    with pytest.raises(am.ModelError):
        am.stochastic_dominance_check(golden_economy, [((-0.1,), (1.0,))])


# ---------------------------------------------------------------------------
# Repetition of the static solution
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("T,delta,beta", [(1, 0.0, 1.0), (3, 0.9, 2.71),
                                          (10, 0.5, 2.0 * (1.0 - 0.5**10))])
def test_dynamic_check_beta_and_payoff(golden_economy, T, delta, beta):
    rep = am.dynamic_check(golden_economy, T, delta)
    assert rep.beta == pytest.approx(beta, abs=1e-12)
    assert rep.payoff_identity_error <= 1e-9
    assert rep.ir_scaling_error <= 1e-9
    assert rep.passed


def test_dynamic_check_t1_matches_static(golden_economy):
    rep = am.dynamic_check(golden_economy, 1, 0.0)
    sol = am.solve(golden_economy)
    assert rep.total_payoff == pytest.approx(
        am.agenda_setter_payoff(golden_economy, sol), abs=1e-12)


def test_dynamic_check_input_guards(golden_economy):
    with pytest.raises(am.ModelError):
        am.dynamic_check(golden_economy, 0, 0.5)
    with pytest.raises(am.ModelError):
        am.dynamic_check(golden_economy, 3, 1.0)


def test_dynamic_check_defaults_to_economy_fields(golden_economy):
    import dataclasses

    econ = dataclasses.replace(golden_economy, discount=0.9, horizon=3)
    rep = am.dynamic_check(econ)
    assert rep.beta == pytest.approx(2.71, abs=1e-12)
    assert rep.passed
