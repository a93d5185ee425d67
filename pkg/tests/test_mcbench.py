import math

import numpy as np
import pytest

from lmmpde.anova import ExpansionPlan
from lmmpde.errors import ConfigurationError
from lmmpde.mcbench import (McConfig, PolicyThresholds, bermudan_bounds,
                            learn_policy, lower_bound, mc_price_ratchet,
                            mc_vrst, simulate_paths, upper_bound)
from lmmpde.model import LmmConfig, build_correlation, build_covariance, freeze_drift
from lmmpde.products import BermudanSwaption, RatchetFloor
from tests.conftest import black_call, black_put


class TestSimulation:
    def test_frozen_terminal_distribution(self):
        # frozen drift makes log-rates exactly Gaussian: check mean and
        # variance of ln L_i at the horizon against the closed form
        cfg = LmmConfig(n=5)
        mc = McConfig(n1=1, m_mc=1, drift="frozen", seed=4)
        states = simulate_paths(cfg, mc, 100_000, [5])
        lnl = np.log(states[:, 0, :])
        mu = freeze_drift(cfg, build_correlation(cfg.phi, 5)).mu
        t = cfg.horizon
        want_mean = np.log(0.1) + (mu - cfg.c ** 2 / 2) * t
        want_var = cfg.c ** 2 * t
        se_mean = math.sqrt(want_var / len(lnl))
        assert np.max(np.abs(lnl.mean(axis=0) - want_mean)) < 4 * se_mean
        se_var = want_var * math.sqrt(2.0 / len(lnl))
        assert np.max(np.abs(lnl.var(axis=0) - want_var)) < 4 * se_var

    def test_frozen_substep_invariance(self):
        cfg = LmmConfig(n=5)
        prod = RatchetFloor(k1=0.10, a=0.2, b=0.9, c=0.0)
        runs = [mc_price_ratchet(cfg, prod, McConfig(n1=20_000, m_mc=m,
                                                     drift="frozen", seed=6))
                for m in (1, 5)]
        assert runs[0].value == runs[1].value

    def test_zero_volatility_deterministic(self):
        # with vanishing volatility every path reproduces the drifted curve
        cfg = LmmConfig(n=4, c=1e-12)
        mc = McConfig(n1=1, m_mc=2, drift="frozen", seed=0)
        states = simulate_paths(cfg, mc, 16, [2, 4])
        mu = freeze_drift(cfg, build_correlation(cfg.phi, 4)).mu
        for idx, tenor in ((0, 2), (1, 4)):
            want = 0.1 * np.exp(mu * cfg.tenor(tenor))
            assert np.max(np.abs(states[:, idx, :] / want - 1)) < 1e-6

    def test_zero_volatility_floor_worthless(self):
        # K below the deterministic drifting curve: the floorlet never pays
        cfg = LmmConfig(n=5, c=1e-12)
        est = mc_price_ratchet(cfg, RatchetFloor(k1=0.09, a=0, b=1, c=0),
                               McConfig(n1=5_000, m_mc=1, drift="frozen", seed=1))
        assert est.value == 0.0

    def test_same_seed_reproducible(self):
        cfg = LmmConfig(n=5)
        prod = RatchetFloor(k1=0.10, a=0.2, b=0.9, c=0.0)
        mc = McConfig(n1=30_000, m_mc=2, drift="full", seed=11)
        a = mc_price_ratchet(cfg, prod, mc)
        b = mc_price_ratchet(cfg, prod, mc)
        assert a.value == b.value and a.stderr == b.stderr

    def test_full_vs_frozen_close_short_maturity(self):
        cfg = LmmConfig(n=5)
        prod = BermudanSwaption.yearly(0.10, 5)
        vals = {}
        for drift in ("full", "frozen"):
            mc = McConfig(n1=30_000, n2=150_000, m_mc=5, drift=drift, seed=3)
            pol = learn_policy(cfg, prod, mc)
            vals[drift] = lower_bound(cfg, prod, mc, pol)
        lo_f, se_f = vals["full"]
        lo_z, se_z = vals["frozen"]
        assert abs(lo_f - lo_z) < 3 * math.hypot(se_f, se_z)


class TestRatchetPricing:
    def test_plain_floorlet_matches_black(self):
        # (0,1,0) leaves the strike constant and the last rate is driftless
        # under the terminal measure, so the exact value is a Black put
        cfg = LmmConfig(n=5)
        est = mc_price_ratchet(cfg, RatchetFloor(k1=0.10, a=0, b=1, c=0),
                               McConfig(n1=400_000, m_mc=5, drift="full", seed=8))
        exact = black_put(0.1, 0.1, 0.2 * math.sqrt(cfg.horizon)) * cfg.terminal_bond
        assert est.value == pytest.approx(exact, abs=4 * est.stderr)

    def test_stderr_scale(self):
        cfg = LmmConfig(n=5)
        prod = RatchetFloor(k1=0.10, a=0, b=1, c=0)
        small = mc_price_ratchet(cfg, prod, McConfig(n1=10_000, m_mc=1,
                                                     drift="frozen", seed=2))
        big = mc_price_ratchet(cfg, prod, McConfig(n1=160_000, m_mc=1,
                                                   drift="frozen", seed=2))
        assert big.stderr == pytest.approx(small.stderr / 4, rel=0.25)


class TestPolicy:
    def test_single_date_equals_european(self):
        cfg = LmmConfig(n=5)
        prod = BermudanSwaption(strike=0.10, exercise_idx=(5,))
        mc = McConfig(n1=10_000, n2=400_000, m_mc=5, drift="frozen", seed=5)
        pol = learn_policy(cfg, prod, mc)
        lo, se = lower_bound(cfg, prod, mc, pol)
        exact = (cfg.alpha * black_call(0.1, 0.1, 0.2 * math.sqrt(cfg.horizon))
                 * cfg.terminal_bond)
        assert lo == pytest.approx(exact, abs=3 * se)

    def test_never_in_the_money_dates(self):
        # deep OTM strike: early dates have zero intrinsic on the flat curve
        cfg = LmmConfig(n=5)
        prod = BermudanSwaption(strike=0.45, exercise_idx=(1, 5))
        mc = McConfig(n1=20_000, m_mc=1, drift="frozen", seed=5)
        pol = learn_policy(cfg, prod, mc)
        assert pol.thresholds[0] == np.inf

    def test_threshold_shape(self):
        cfg = LmmConfig(n=11)
        prod = BermudanSwaption.yearly(0.10, 11)
        mc = McConfig(n1=30_000, m_mc=2, drift="frozen", seed=5)
        pol = learn_policy(cfg, prod, mc)
        assert pol.thresholds.shape == (4,)
        assert pol.thresholds[-1] == 0.0


class TestBounds:
    def test_single_date_gap_exactly_zero(self):
        cfg = LmmConfig(n=5)
        prod = BermudanSwaption(strike=0.10, exercise_idx=(5,))
        pol = PolicyThresholds(exercise_idx=(5,), thresholds=np.array([0.0]))
        gap, gse = upper_bound(cfg, prod, McConfig(n_outer=100, n_inner=20,
                                                   m_mc=2, drift="frozen", seed=7), pol)
        assert gap == 0.0 and gse == 0.0

    def test_duality_sandwich(self):
        cfg = LmmConfig(n=5)
        prod = BermudanSwaption.yearly(0.10, 5)
        mc = McConfig(n1=20_000, n2=50_000, n_outer=200, n_inner=100,
                      m_mc=2, drift="frozen", seed=9)
        bounds = bermudan_bounds(cfg, prod, mc)
        assert bounds.gap >= -3 * max(bounds.gap_stderr, 1e-15)
        assert bounds.lower - 3 * bounds.stderr <= bounds.midpoint
        assert bounds.midpoint <= bounds.upper + 3 * bounds.gap_stderr

    def test_lower_bound_below_certified_value(self):
        # any threshold policy is admissible, so its value cannot exceed the
        # closed-form European plus the (tiny) extra optionality at t=0,
        # which is zero at the money
        cfg = LmmConfig(n=5)
        prod = BermudanSwaption.yearly(0.10, 5)
        mc = McConfig(n1=20_000, n2=100_000, m_mc=2, drift="frozen", seed=13)
        pol = learn_policy(cfg, prod, mc)
        lo, se = lower_bound(cfg, prod, mc, pol)
        exact = (cfg.alpha * black_call(0.1, 0.1, 0.2 * math.sqrt(cfg.horizon))
                 * cfg.terminal_bond)
        assert lo <= exact + 4 * se


class TestVrst:
    def test_reproducible_and_consistent(self):
        cfg = LmmConfig(n=5)
        plan = ExpansionPlan(n=5, r=1, s=1)
        prod = RatchetFloor(k1=0.10, a=0.2, b=0.9, c=0.0)
        res1 = mc_vrst(cfg, plan, prod, n_paths=40_000, seed=3)
        res2 = mc_vrst(cfg, plan, prod, n_paths=40_000, seed=3)
        assert res1.level_sums == res2.level_sums
        assert res1.total == pytest.approx(
            res1.level_sums[0] + res1.level_sums[1], rel=1e-12)

    def test_shared_noise_tightens_differences(self):
        # with common random numbers the correction level has far smaller
        # standard error than the base value it perturbs
        cfg = LmmConfig(n=5)
        plan = ExpansionPlan(n=5, r=1, s=1)
        prod = RatchetFloor(k1=0.10, a=0.2, b=0.9, c=0.0)
        res = mc_vrst(cfg, plan, prod, n_paths=60_000, seed=5)
        assert res.level_stderr[1] < 0.5 * res.level_stderr[0]

    def test_full_matches_frozen_path_mc(self):
        # the anchored simulation with every component active is exactly the
        # frozen-drift model, so it must agree with the path engine
        cfg = LmmConfig(n=5)
        plan = ExpansionPlan(n=5, r=1, s=1)
        prod = RatchetFloor(k1=0.10, a=0.2, b=0.9, c=0.0)
        res = mc_vrst(cfg, plan, prod, n_paths=300_000, seed=6)
        est = mc_price_ratchet(cfg, prod, McConfig(n1=300_000, m_mc=1,
                                                   drift="frozen", seed=60))
        tol = 4 * math.hypot(res.full_stderr, est.stderr)
        assert res.full == pytest.approx(est.value, abs=tol)


class TestConfigValidation:
    def test_counts_positive(self):
        with pytest.raises(ConfigurationError):
            McConfig(n1=0)

    def test_drift_mode(self):
        with pytest.raises(ConfigurationError):
            McConfig(drift="sideways")
