import math

import numpy as np
import pytest

from lmmpde.errors import ConfigurationError
from lmmpde.heatpde import GridSpec, TermGrid, calibrate_axis_map, solve_term
from lmmpde.model import LmmConfig, build_transform
from lmmpde.pricing import PdeParams, price_bermudan_pde, price_ratchet_pde
from lmmpde.products import (BermudanPdeProblem, BermudanSwaption, RatchetFloor,
                             RatchetPdeProblem, StrikeAxis, floorlet_payoff,
                             ratchet_strike_update, strike_axis_nodes,
                             swaption_intrinsic, yearly_exercise_indices)


class TestSwaptionIntrinsic:
    def test_at_the_money_is_zero(self):
        libor = np.full(6, 0.07)
        assert swaption_intrinsic(libor, 0.07, 3, 0.25) == 0.0

    def test_single_period(self):
        libor = np.array([0.1, 0.1, 0.12])
        assert swaption_intrinsic(libor, 0.10, 3, 0.25) == pytest.approx(
            0.25 * 0.02, rel=1e-14)

    def test_flat_curve_product_sum(self):
        # hand-computed: alpha*0.01*sum_j prod_{k=j+1..5} 1.0275
        libor = np.full(5, 0.11)
        hand = 0.25 * 0.01 * sum(1.0275 ** (5 - j) for j in range(1, 6))
        assert swaption_intrinsic(libor, 0.10, 1, 0.25) == pytest.approx(hand, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            swaption_intrinsic(np.full(4, 0.1), 0.1, 5, 0.25)
        with pytest.raises(ConfigurationError):
            swaption_intrinsic(np.array([0.1, -0.1]), 0.1, 1, 0.25)


class TestStrikeUpdate:
    def test_identity_reset(self):
        assert ratchet_strike_update(0.07, 0.2, 0.0, 1.0, 0.0) == 0.07

    def test_ratcheting_up(self):
        assert ratchet_strike_update(0.1, 0.1, 0.2, 0.9, 0.0) == pytest.approx(0.11)

    def test_affine_reset(self):
        got = ratchet_strike_update(0.1, 0.1, 0.25, 0.95, -0.01)
        assert got == pytest.approx(0.25 * 0.1 + 0.95 * 0.1 - 0.01, rel=1e-12)
        assert got == pytest.approx(0.11, rel=1e-12)

    def test_floor_at_zero(self):
        assert ratchet_strike_update(0.01, 0.01, 0.0, 0.5, -0.1) == 0.0


class TestFloorlet:
    def test_terminal_floorlet_no_conversion(self):
        libor = np.full(5, 0.10)
        assert floorlet_payoff(0.11, libor, 5, 0.25) == pytest.approx(0.01)

    def test_out_of_the_money(self):
        libor = np.full(5, 0.10)
        assert floorlet_payoff(0.09, libor, 3, 0.25) == 0.0

    def test_one_period_conversion(self):
        libor = np.full(5, 0.10)
        assert floorlet_payoff(0.12, libor, 4, 0.25) == pytest.approx(
            0.02 * 1.025, rel=1e-14)


class TestSchedules:
    def test_yearly_indices(self):
        assert yearly_exercise_indices(5) == (1, 5)
        assert yearly_exercise_indices(11) == (1, 5, 9, 11)
        assert yearly_exercise_indices(21) == (1, 5, 9, 13, 17, 21)
        assert yearly_exercise_indices(41)[-1] == 41

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            BermudanSwaption(strike=0.1, exercise_idx=(5, 1))
        with pytest.raises(ConfigurationError):
            BermudanSwaption(strike=-0.1, exercise_idx=(1, 5))


class TestStrikeAxis:
    def test_node_layout(self):
        nodes = strike_axis_nodes()
        assert len(nodes) == 81
        assert nodes[0] == 0.0 and nodes[-1] == 0.5
        assert np.all(np.diff(nodes) > 0)
        assert np.count_nonzero(nodes <= 0.05 + 1e-12) == 21
        assert np.count_nonzero((nodes >= 0.05 - 1e-12) & (nodes <= 0.15 + 1e-12)) == 41

    def test_non_monotone_rejected(self):
        with pytest.raises(ConfigurationError):
            StrikeAxis(nodes=np.array([0.0, 0.2, 0.1, 0.3]))


@pytest.fixture(scope="module")
def setup():
    cfg = LmmConfig(n=5)
    xf = build_transform(cfg)
    spec = GridSpec(j=96)
    dims = (0,)
    maps = (calibrate_axis_map(xf.spectrum.q[:, 0], xf.spectrum.lam[0],
                               xf.anchor[0], 0.02, 0.5, cfg.horizon),)
    grid = TermGrid(xf=xf, dims=dims, maps=maps, spec=spec)
    return cfg, xf, grid


class TestGridHooks:

    def test_bermudan_event_idempotent(self, setup):
        cfg, xf, grid = setup
        problem = BermudanPdeProblem(BermudanSwaption.yearly(0.1, 5), cfg, 1000.0)
        hooks = problem.event_hooks(m_pde=2)
        hook = hooks[2 * (5 - 1)]
        rng = np.random.default_rng(0)
        vals = rng.random((1, 97)) * 0.01
        once = hook(vals.copy(), grid, 1.0)
        twice = hook(once.copy(), grid, 1.0)
        assert np.array_equal(once, twice)

    def test_intrinsic_below_continuation_leaves_surface(self, setup):
        # the cutoff caps the intrinsic at g_max, so a continuation surface
        # above g_max is unchanged everywhere
        cfg, xf, grid = setup
        problem = BermudanPdeProblem(
            BermudanSwaption(strike=5.0, exercise_idx=(1, 5)), cfg, 1000.0)
        hook = problem.event_hooks(m_pde=2)[2 * 4]
        vals = np.full((1, 97), 1500.0)
        assert np.array_equal(hook(vals.copy(), grid, 1.0), vals)

    def test_zero_continuation_gives_intrinsic(self, setup):
        cfg, xf, grid = setup
        problem = BermudanPdeProblem(BermudanSwaption.yearly(0.1, 5), cfg, 1000.0)
        hook = problem.event_hooks(m_pde=2)[2 * 4]
        out = hook(np.zeros((1, 97)), grid, 1.0)
        assert np.all(out >= 0)
        assert out.max() > 0

    def test_identity_reset_round_trip(self, setup):
        cfg, xf, grid = setup
        problem = RatchetPdeProblem(RatchetFloor(k1=0.1, a=0.0, b=1.0, c=0.0),
                                    cfg, 1000.0)
        hook = problem._make_hook(2)
        nodes = problem.axis.nodes
        rng = np.random.default_rng(1)
        coef = rng.random(3)
        vals = (coef[0] + coef[1] * nodes + coef[2] * nodes ** 2)[:, None].repeat(97, 1)
        out = hook(vals.copy()[..., None].transpose(0, 1, 2)[:, :, 0][..., None]
                   .reshape(81, 97), grid, 1.0)
        # identity reset: pure spline round trip at the nodes themselves
        assert np.max(np.abs(out - vals)) < 1e-10

    def test_linear_in_strike_exact(self, setup):
        # cubic splines reproduce data linear in the strike exactly, so the
        # jump reduces to evaluating the line at the clamped reset target
        cfg, xf, grid = setup
        problem = RatchetPdeProblem(RatchetFloor(k1=0.1, a=0.05, b=0.8, c=0.01),
                                    cfg, 1000.0)
        hook = problem._make_hook(3)
        nodes = problem.axis.nodes
        vals = np.repeat((2.0 + 3.0 * nodes)[:, None], 97, axis=1)
        out = hook(vals.copy(), grid, 1.0)  # hook is evaluated at tau=1.0
        base_l, e0, e1 = grid.rate_factors(1.0)
        lm = np.minimum(base_l[2] * e0[:, 2] * e1[0, 2], 2.353852668370200e17)
        target = np.clip(0.05 * lm[None, :] + 0.8 * nodes[:, None] + 0.01, 0.0, 0.5)
        assert np.max(np.abs(out - (2.0 + 3.0 * target))) < 1e-10

    def test_clamp_counter(self, setup):
        cfg, xf, grid = setup
        problem = RatchetPdeProblem(RatchetFloor(k1=0.4, a=1.5, b=1.0, c=0.2),
                                    cfg, 1000.0)
        hook = problem._make_hook(2)
        hook(np.zeros((81, 97)), grid, 1.0)
        assert problem.clamp_count > 0


class TestPdeInvariants:
    def test_bermudan_dominates_european(self):
        cfg = LmmConfig(n=5)
        params = PdeParams(j=201, m_pde=4)
        berm = price_bermudan_pde(cfg, BermudanSwaption.yearly(0.09, 5), params)
        euro = price_bermudan_pde(
            cfg, BermudanSwaption(strike=0.09, exercise_idx=(5,)), params)
        assert berm.value >= euro.value - 1e-12

    def test_identity_reset_equals_plain_floor(self):
        # (a,b,c) = (0,1,0) through the strike-axis machinery must match a
        # strike-axis-free backward solve with the constant strike
        cfg = LmmConfig(n=5)
        xf = build_transform(cfg)
        params = PdeParams(j=201, m_pde=4)
        with_axis = price_ratchet_pde(cfg, RatchetFloor(k1=0.1, a=0, b=1, c=0),
                                      params, xf=xf)

        from lmmpde.anova import first_order_combine, first_order_pde_values

        class PlainFloor:
            def __init__(self, strike, g_max):
                self.strike = strike
                self.g_max = g_max

            def terminal(self, values, grid, tau):
                from lmmpde import kernels
                base_l, e0, e1 = grid.rate_factors(0.0)
                lm, _ = kernels.rate_and_conv_grid(base_l, e0, e1, cfg.n, cfg.alpha)
                lm = lm[:, 0] if len(grid.dims) == 1 else lm
                return np.minimum(np.maximum(self.strike - lm, 0.0), self.g_max)[None]

            def event_hooks(self, m_pde):
                return {}

        base, per = first_order_pde_values(xf, PlainFloor(0.1, 1000.0),
                                           params.grid_spec(cfg), params.m_pde)
        plain = first_order_combine(per, base, cfg.n) * cfg.terminal_bond
        assert with_axis.value == pytest.approx(plain, rel=1e-6)

    def test_monotone_in_initial_strike(self):
        cfg = LmmConfig(n=5)
        params = PdeParams(j=161, m_pde=4)
        xf = build_transform(cfg)
        vals = [price_ratchet_pde(cfg, RatchetFloor(k1=k, a=0.2, b=0.9, c=0.0),
                                  params, xf=xf).value
                for k in (0.09, 0.10, 0.11)]
        assert vals[0] < vals[1] < vals[2]

    def test_portfolio_equals_sum_of_floorlets(self):
        # single sweep with every fixing date injecting its floorlet vs the
        # sum over sweeps carrying one floorlet each: the backward machinery
        # is linear, so the decomposition must hold to roundoff-level noise
        from lmmpde.anova import first_order_combine, first_order_pde_values

        cfg = LmmConfig(n=4)
        xf = build_transform(cfg)
        # damping off so every sweep uses the identical (linear) scheme
        # regardless of which cashflows it carries
        params = PdeParams(j=121, m_pde=4, damped_steps=0)
        product = RatchetFloor(k1=0.1, a=0.2, b=0.9, c=0.0)

        def run(problem):
            base, per = first_order_pde_values(
                xf, problem, params.grid_spec(cfg), params.m_pde,
                k_nodes=problem.axis.nodes, k_readout=product.k1)
            return first_order_combine(per, base, cfg.n) * cfg.terminal_bond

        portfolio = run(RatchetPdeProblem(product, cfg, 1000.0, portfolio=True))
        total = run(RatchetPdeProblem(product, cfg, 1000.0))  # last floorlet
        for m in range(1, cfg.n):
            total += run(RatchetPdeProblem(product, cfg, 1000.0,
                                           inject_at=(m,), include_terminal=False))
        assert portfolio == pytest.approx(total, rel=1e-10)
