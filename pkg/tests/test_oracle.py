import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evnem.model import TariffSchedule, nem_payment, total_utility
from evnem.oracle import (
    DeterministicProblem,
    TrajectorySolution,
    brute_force_dp,
    kkt_residual,
    solve_deterministic,
    trajectory_objective,
)
from evnem.simulator import simulate_batch
from evnem.value import Quadrature

from helpers import TCA_R, best_consumption, config_a, random_config, random_quadratures, tables_for

TCA_OBJECTIVE = 230 / 81  # frozen from the 1e-3 brute-force DP on TestConfig-A


def static_optimum(config, r):
    out = 0.0
    for t, rt in enumerate(r):
        pi_plus, pi_minus = config.tariff.prices(t)
        d = best_consumption(config.devices, np.array([rt]), pi_plus, pi_minus)
        out += float(np.sum(total_utility(config.devices, d[:, None]) - nem_payment(d - rt, pi_plus, pi_minus)))
    return out


class TestSolveDeterministic:
    def test_trivial_problem_does_nothing(self):
        cfg = config_a(B=0.0, s0=0.0, e_chg_max=0.0, e_dis_max=0.0, y0=0.0)
        sol = solve_deterministic(DeterministicProblem(cfg, np.zeros(2)))
        assert np.allclose(sol.v, 0) and np.allclose(sol.e, 0, atol=1e-9)
        # devices buy at the import price with nothing else going on
        assert np.allclose(np.asarray(sol.d).reshape(2), 0.8, atol=1e-6)

    def test_abundant_renewable_saturates(self):
        cfg = config_a(y0=1.5)
        sol = solve_deterministic(DeterministicProblem(cfg, np.array([50.0, 50.0])))
        assert sol.v.sum() == pytest.approx(1.5, abs=1e-6)
        assert np.allclose(sol.e, 1.0, atol=1e-6)
        assert np.allclose(np.asarray(sol.d).reshape(2), 1.8, atol=1e-6)

    def test_test_config_a_objective(self):
        sol = solve_deterministic(DeterministicProblem(config_a(), TCA_R))
        assert sol.objective == pytest.approx(TCA_OBJECTIVE, abs=1e-6)
        bf = brute_force_dp(config_a(), TCA_R, resolution=1e-3)
        assert bf.value == pytest.approx(sol.objective, abs=1e-4)
        assert bf.value <= sol.objective + 1e-9

    def test_objective_matches_recomputation(self):
        cfg = config_a()
        sol = solve_deterministic(DeterministicProblem(cfg, TCA_R))
        again = trajectory_objective(cfg, TCA_R, sol.v, sol.d, sol.e)
        assert again == pytest.approx(sol.objective, abs=1e-8)

    def test_wrong_length_rejected(self):
        with pytest.raises(ValueError, match="horizon"):
            DeterministicProblem(config_a(), np.zeros(3))


class TestKKT:
    def test_optimum_certified(self):
        prob = DeterministicProblem(config_a(), TCA_R)
        assert kkt_residual(prob, solve_deterministic(prob)) <= 1e-5

    def test_arbitrary_point_rejected(self):
        prob = DeterministicProblem(config_a(), TCA_R)
        bad = TrajectorySolution(v=np.array([0.2, 0.3]), d=np.array([[0.5], [0.5]]), e=np.array([0.1, -0.2]),
                                 objective=np.nan, kkt_residual=np.nan)
        assert kkt_residual(prob, bad) > 1e-2

    def test_trivial_zero_action(self):
        cfg = config_a(B=0.0, s0=0.0, e_chg_max=0.0, e_dis_max=0.0, y0=0.0)
        prob = DeterministicProblem(cfg, np.zeros(2))
        zero = TrajectorySolution(v=np.zeros(2), d=np.full((2, 1), 0.8), e=np.zeros(2), objective=np.nan,
                                  kkt_residual=np.nan)
        assert kkt_residual(prob, zero) <= 1e-9

    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_random_instances_certified(self, seed):
        rng = np.random.default_rng(seed)
        cfg = random_config(rng, int(rng.integers(1, 12)))
        prob = DeterministicProblem(cfg, rng.exponential(2.0, cfg.T))
        assert kkt_residual(prob, solve_deterministic(prob)) <= 1e-5


class TestBruteForce:
    def test_no_storage_no_demand_is_static(self):
        cfg = config_a(B=0.0, s0=0.0, e_chg_max=0.0, e_dis_max=0.0, y0=0.0)
        r = np.array([0.4, 1.3])
        assert brute_force_dp(cfg, r, resolution=1e-2).value == pytest.approx(static_optimum(cfg, r), abs=1e-4)

    def test_refuses_long_horizon(self):
        tar = TariffSchedule.from_lengths(5, 0, 0, pi_off_plus=0.6, pi_off_minus=0.1, pi_on_plus=0.8,
                                          pi_on_minus=0.2)
        with pytest.raises(ValueError, match="T <= 4"):
            brute_force_dp(config_a(tariff=tar), np.zeros(5))

    def test_refuses_over_budget(self):
        with pytest.raises(ValueError, match="budget"):
            brute_force_dp(config_a(), TCA_R, resolution=1e-3, cell_budget=1e3)

    def test_refuses_off_lattice_demand(self):
        with pytest.raises(ValueError, match="multiple"):
            brute_force_dp(config_a(y0=1.505), TCA_R, resolution=1e-2)

    def test_stochastic_matches_deterministic_for_point_masses(self):
        quads = [Quadrature.point(float(r)) for r in TCA_R]
        a = brute_force_dp(config_a(), quads, resolution=1e-2).value
        b = brute_force_dp(config_a(), TCA_R, resolution=1e-2).value
        assert a == pytest.approx(b, abs=1e-12)


class TestSalvage:
    """Stored energy left at the end is worth beta per kWh in the battery."""

    def test_initial_energy_worth_beta(self):
        cfg = config_a()
        base = solve_deterministic(DeterministicProblem(cfg, TCA_R)).objective
        more = solve_deterministic(DeterministicProblem(config_a(s0=5.5), TCA_R)).objective
        assert more - base == pytest.approx(0.4 * 0.5, abs=1e-6)

    def test_discharged_energy_costs_beta_over_eta(self):
        cfg = config_a()
        r, v, d = np.zeros(2), np.zeros(2), np.full((2, 1), 0.8)
        base = trajectory_objective(cfg, r, v, d, np.array([0.0, -0.5]))
        moved = trajectory_objective(cfg, r, v, d, np.array([0.0, -0.6]))
        # the meter imports 0.1 less; the battery ends 0.1 / eta_d lower
        assert moved - base == pytest.approx(0.1 * 0.6 - 0.4 * 0.1 / 0.9, abs=1e-12)


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_oracle_dominates_every_policy(seed):
    rng = np.random.default_rng(seed)
    T = int(rng.integers(2, 9))
    cfg = random_config(rng, T)
    quads = random_quadratures(rng, T, 8)
    tables = tables_for(cfg, quads)
    r = np.stack([rng.choice(q.nodes, size=20) for q in quads], axis=1)
    orc = simulate_batch("oracle", tables, r, np.full(20, cfg.y0)).surplus
    for policy in ("mo", "cco", "nco", "pr"):
        assert np.all(simulate_batch(policy, tables, r, np.full(20, cfg.y0)).surplus <= orc + 1e-6), policy
