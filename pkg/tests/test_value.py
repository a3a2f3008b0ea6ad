import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evnem.model import TariffSchedule, effective_storage_bounds
from evnem.oracle import brute_force_dp
from evnem.value import (
    ConcavePLFunction,
    ConcavityError,
    Quadrature,
    ThresholdRow,
    backward_induct,
    compute_thresholds,
    delta_boundaries,
    make_y_grid,
    supergradient,
    w_inverse,
)

from helpers import TCA_R, best_consumption, config_a, grid_argmax, random_config, random_quadratures

TCA_QUADS = [Quadrature.point(float(r)) for r in TCA_R]

# Frozen from brute_force_dp(config_a(), TCA_R, 1e-3): V(t, s0, y) - beta*s0.
TCA_V0_AT_Y0 = 68 / 81
TCA_V1 = {0.5: 251 / 405, 0.75: 0.508642, 1.0: 161 / 405, 1.25: 0.147531, 1.5: -0.102469}
TCA_THRESHOLDS = dict(tau=[1.0, 0.0], delta=[0.0, 0.0], sigma_plus=[1.0, 0.0], sigma_minus=[0.0, 0.0])


@pytest.fixture(scope="module")
def tca_tables():
    return backward_induct(config_a(), TCA_QUADS, make_y_grid(1.5, 1.0, 2), mode="myopic")


class TestSupergradient:
    def test_linear(self):
        f = ConcavePLFunction.linear([0, 1, 2, 3], -1.0)
        g = supergradient(f, 1.5)
        assert (g.right, g.left) == (-1.0, -1.0)

    def test_at_kink(self):
        f = ConcavePLFunction([0, 2, 4], [0, -0.4, -1.6])
        g = supergradient(f, 2.0)
        assert (g.right, g.left) == pytest.approx((-0.6, -0.2))

    def test_left_end_is_open(self):
        g = supergradient(ConcavePLFunction([0, 2, 4], [0, -0.4, -1.6]), 0.0)
        assert g.left_open and g.left == -math.inf and g.right == pytest.approx(-0.2)

    def test_right_end(self):
        g = supergradient(ConcavePLFunction([0, 2, 4], [0, -0.4, -1.6]), 4.0)
        assert g.right == -math.inf and g.left == pytest.approx(-0.6)

    def test_outside_span(self):
        f = ConcavePLFunction.linear([0, 1], -1.0)
        with pytest.raises(ValueError, match="outside"):
            supergradient(f, 1.5)
        with pytest.raises(ValueError, match="outside"):
            f(-0.1)


class TestWInverse:
    f = ConcavePLFunction([0, 2, 4], [0, -0.2, -1.2])  # slopes -0.1, -0.5

    def test_constant_slope(self):
        f = ConcavePLFunction.linear([0, 1, 5], -1.0)
        # unmet demand costs more than energy: buy everything now
        assert w_inverse(f, 0.6) == 0.0
        assert w_inverse(f, 1.4) == 5.0

    def test_at_kink(self):
        assert w_inverse(self.f, 0.3) == 2.0

    def test_price_above_every_slope(self):
        assert w_inverse(self.f, 0.05) == 0.0

    def test_price_below_every_slope(self):
        assert w_inverse(self.f, 0.9) == 4.0

    def test_ties_take_largest(self):
        assert w_inverse(self.f, 0.1) == 2.0
        assert self.f.w_inverse(0.1, strict=True) == 0.0

    def test_vectorised(self):
        assert list(self.f.w_inverse(np.array([0.05, 0.3, 0.9]))) == [0.0, 2.0, 4.0]

    @given(st.lists(st.floats(0, 2), min_size=2, max_size=12), st.floats(0, 3), st.floats(0, 3))
    def test_monotone_in_price(self, neg_slopes, p1, p2):
        slopes = -np.sort(neg_slopes)
        x = np.arange(len(slopes) + 1) * 0.5
        f = ConcavePLFunction(x, np.concatenate([[0.0], np.cumsum(slopes * 0.5)]))
        lo, hi = sorted((p1, p2))
        assert f.w_inverse(lo) <= f.w_inverse(hi)


class TestConcavePL:
    def test_small_defect_is_clamped(self):
        f = ConcavePLFunction.from_samples([0, 1, 2, 3], [0, -1, -2 + 1e-8, -3])
        assert 0 < f.max_violation <= 1e-6
        assert np.all(np.diff(f.slopes) <= 1e-15)

    def test_large_defect_raises(self):
        with pytest.raises(ConcavityError):
            ConcavePLFunction.from_samples([0, 1, 2], [0, -1, -1.5])

    def test_rejects_unsorted_grid(self):
        with pytest.raises(ValueError):
            ConcavePLFunction([0, 2, 1], [0, 0, 0])


class TestGrid:
    def test_contains_endpoints_and_charge_multiples(self):
        g = make_y_grid(7.3, 2.0, 5, spacing=0.3)
        for y in (0.0, 2.0, 4.0, 6.0, 7.3):
            assert np.min(np.abs(g - y)) < 1e-12
        assert np.all(np.diff(g) > 0) and np.max(np.diff(g)) <= 0.3 + 1e-12

    def test_default_spacing(self):
        g = make_y_grid(30.0, 3.6, 16)
        assert np.max(np.diff(g)) == pytest.approx(3.6 / 50)

    def test_rejects_coarse_spacing(self):
        with pytest.raises(ValueError, match="v_max/4"):
            make_y_grid(5.0, 1.0, 3, spacing=0.5)


class TestBackwardInduction:
    def test_single_interval_matches_grid_search(self):
        cfg = config_a(tariff=TariffSchedule.from_lengths(1, 0, 0, pi_off_plus=0.6, pi_off_minus=0.1,
                                                          pi_on_plus=0.8, pi_on_minus=0.2), y0=2.0)
        quad = Quadrature(np.array([0.3, 1.0, 2.5]), np.full(3, 1 / 3))
        terminal = lambda y: -cfg.alpha * y  # noqa: E731
        for mode, c in (("myopic", cfg), ("storage-free", config_a(B=0.0, s0=0.0, y0=2.0,
                                                                       tariff=cfg.tariff))):
            vt = backward_induct(c, [quad], make_y_grid(2.0, 1.0, 1), mode=mode)
            for y in (0.0, 0.4, 1.0, 1.3, 2.0):
                want = np.mean([grid_argmax(c, 0, c.s0, y, r, terminal)[0] for r in quad.nodes])
                assert vt.vbar[0](y) == pytest.approx(want, abs=2e-3), (mode, y)
            assert vt.vbar[0].supergradient(1.5).right == pytest.approx(-cfg.alpha)

    def test_zero_demand_is_consumption_only(self):
        cfg = config_a()
        vt = backward_induct(cfg, TCA_QUADS, make_y_grid(1.5, 1.0, 2), mode="storage-free")
        per = [float(best_consumption(cfg.devices, np.array(r), 0.6, 0.1)) for r in TCA_R]
        dev = cfg.devices[0]
        surplus = [dev.utility(d) - (d - r) * (0.6 if d > r else 0.1) for d, r in zip(per, TCA_R)]
        assert vt.vbar[0](0.0) == pytest.approx(sum(surplus), abs=1e-12)
        assert vt.vbar[1](0.0) == pytest.approx(surplus[1], abs=1e-12)

    def test_test_config_a_values(self, tca_tables):
        assert tca_tables.vbar[0](1.5) == pytest.approx(TCA_V0_AT_Y0, abs=1e-6)
        for y, v in TCA_V1.items():
            assert tca_tables.vbar[1](y) == pytest.approx(v, abs=1e-6)
        assert tca_tables.vbar[1].supergradient(0.75).right == pytest.approx(-0.4 / 0.9)
        assert tca_tables.vbar[1].supergradient(1.2).right == pytest.approx(-1.0)

    def test_test_config_a_values_against_dp(self, tca_tables):
        cfg = config_a()
        bf = brute_force_dp(cfg, TCA_R, 1e-2)
        shift = cfg.beta * cfg.s0
        assert bf.value - shift == pytest.approx(tca_tables.vbar[0](1.5), abs=1e-3)
        for y in TCA_V1:
            assert bf.value_at(1, cfg.s0, y) - shift == pytest.approx(tca_tables.vbar[1](y), abs=1e-3)

    def test_test_config_a_thresholds(self, tca_tables):
        th = tca_tables.thresholds
        for name, want in TCA_THRESHOLDS.items():
            assert list(getattr(th, name)) == want, name
        assert (0, "tau == sigma+ = 1 (degenerate)") in th.flags

    def test_terminal_is_penalty(self, tca_tables):
        f = tca_tables.vbar[-1]
        assert f(1.5) == pytest.approx(-1.5) and np.all(f.slopes == -1.0)

    def test_rejects_bad_inputs(self):
        cfg = config_a()
        with pytest.raises(ValueError, match="one quadrature"):
            backward_induct(cfg, TCA_QUADS[:1])
        with pytest.raises(ValueError, match="mode"):
            backward_induct(cfg, TCA_QUADS, mode="full")
        with pytest.raises(ValueError, match="spacing"):
            backward_induct(cfg, TCA_QUADS, np.array([0.0, 0.5, 1.5]))

    @settings(max_examples=8, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_slopes_within_penalty_range(self, seed):
        rng = np.random.default_rng(seed)
        T = int(rng.integers(2, 8))
        cfg = random_config(rng, T, n_devices=int(rng.integers(1, 3)))
        quads = random_quadratures(rng, T, n_nodes=8)
        for mode in ("myopic", "storage-free"):
            vt = backward_induct(cfg, quads, make_y_grid(max(cfg.y0, 1.0), cfg.v_max, T), mode=mode)
            for f in vt.vbar:
                assert np.all(f.slopes <= 1e-9) and np.all(f.slopes >= -cfg.alpha - 1e-9)
                assert np.all(np.diff(f.slopes) <= 1e-12)
            assert vt.max_violation.max() <= 1e-6


class TestThresholds:
    def test_closed_form_tau_on_peak(self):
        cfg = config_a(tariff=TariffSchedule.from_lengths(1, 3, 1, pi_off_plus=0.6, pi_off_minus=0.1,
                                                          pi_on_plus=0.8, pi_on_minus=0.2), y0=6.0)
        vt = backward_induct(cfg, [Quadrature.point(0.5)] * 5, make_y_grid(6.0, 1.0, 5), mode="storage-free")
        assert vt.thresholds.tau[2] == 2 * cfg.v_max
        assert vt.thresholds.tau[4] == 0.0
        assert vt.thresholds.delta[4] == 0.0 and vt.thresholds.delta[0] == 0.0

    def test_on_peak_without_off2_has_zero_delta(self):
        cfg = config_a(tariff=TariffSchedule.from_lengths(1, 2, 0, pi_off_plus=0.6, pi_off_minus=0.1,
                                                          pi_on_plus=0.8, pi_on_minus=0.2), y0=3.0)
        vt = backward_induct(cfg, [Quadrature.point(2.0)] * 3, make_y_grid(3.0, 1.0, 3))
        assert list(vt.thresholds.delta) == [0.0, 0.0, 0.0]

    def test_needs_terminal_function(self, tca_tables):
        with pytest.raises(ValueError, match="value functions"):
            compute_thresholds(config_a(), tca_tables.vbar[:2])


class TestDeltaBoundaries:
    def test_test_config_a_tuple(self, tca_tables):
        cfg = config_a()
        e_dis, e_chg = effective_storage_bounds(5.0, cfg)
        bd = delta_boundaries(0, 1.5, e_dis, e_chg, cfg, tca_tables.thresholds.row(0))
        want = (1.3, 2.8, 0.3, 0.1 / 0.9 + 0.5, 1 / 0.9 + 0.5, 2.28, 3.28, 3.8)
        assert [float(x) for x in bd.as_tuple()] == pytest.approx(want)

    def test_below_delta(self):
        cfg = config_a()
        row = ThresholdRow(tau=3.0, delta=2.0, sigma_plus=2.5, sigma_minus=2.2)
        bd = delta_boundaries(0, 1.0, 1.0, 1.0, cfg, row)
        assert float(bd.minus) == pytest.approx(1.8) and float(bd.plus) == pytest.approx(0.8)

    def test_storage_free_collapse(self, tca_tables):
        cfg = config_a()
        bd = delta_boundaries(0, 1.5, 0.0, 0.0, cfg, tca_tables.thresholds.row(0))
        assert bd.plus_prime == bd.plus and bd.d1 == bd.d2 and float(bd.d1) >= float(bd.plus)
        assert bd.minus_prime == bd.minus and bd.d4 == bd.d3

    @given(st.floats(0, 5), st.floats(0, 10), st.floats(0, 3), st.floats(0, 3),
           st.floats(0, 5), st.floats(0, 5), st.floats(0, 5), st.floats(0, 5))
    def test_ordered(self, y, s, e_dis, e_chg, a, b, c, d):
        cfg = config_a()
        tau, sp, sm, de = sorted((a, b, c, d), reverse=True)
        bd = delta_boundaries(0, y, e_dis, e_chg, cfg, ThresholdRow(tau, de, sp, sm))
        seq = [float(bd.plus_prime), float(bd.d1), float(bd.d2), float(bd.d3), float(bd.d4), float(bd.minus_prime)]
        assert all(x <= y_ + 1e-12 for x, y_ in zip(seq, seq[1:]))
