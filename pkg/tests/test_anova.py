import math
from fractions import Fraction

import numpy as np
import pytest

from lmmpde.anova import (ExpansionPlan, assemble_levels, assemble_total,
                          enumerate_terms, first_order_combine,
                          partial_sum_profile, stencil_table)
from lmmpde.errors import ConfigurationError, IncompletePlanError

F = Fraction


class TestStencilTable:
    def test_first_derivative_third_order(self):
        st = stencil_table(1, 3)
        assert st.nodes == (2, 1, 0)
        assert st.weights == (F(-1, 2), F(4, 2), F(-3, 2))

    def test_second_derivative_third_order(self):
        st = stencil_table(2, 3)
        assert st.nodes == (2, 1, 0)
        assert st.weights == (F(1, 2), F(-2, 2), F(1, 2))

    def test_forward_difference(self):
        st = stencil_table(1, 2)
        assert st.nodes == (1, 0)
        assert st.weights == (F(1), F(-1))

    def test_unsupported_pair(self):
        with pytest.raises(ConfigurationError, match="supported"):
            stencil_table(2, 2)
        with pytest.raises(ConfigurationError):
            stencil_table(4, 5)

    @pytest.mark.parametrize("m, order", [(0, 1), (1, 2), (1, 3), (1, 4),
                                          (2, 3), (2, 4), (3, 4)])
    def test_exact_on_monomials(self, m, order):
        # applied to u(x) = x^p with step lam, the row reproduces
        # lam^m u^(m)(0)/m! exactly for every p < order, which is what makes
        # the truncation error O(lam^order)
        st = stencil_table(m, order)
        for p in range(0, order):
            total = sum(w * F(node) ** p if p > 0 else w
                        for node, w in zip(st.nodes, st.weights))
            assert total == (1 if p == m else 0), (m, order, p)

    @pytest.mark.parametrize("m", [1, 2, 3])
    def test_weights_sum_to_zero(self, m):
        order = {1: 2, 2: 3, 3: 4}[m]
        assert sum(stencil_table(m, order).weights) == 0

    def test_constant_function_killed(self):
        st = stencil_table(2, 4)
        assert sum(w * 1 for w in st.weights) == 0


class TestEnumeration:
    def test_first_order_count(self):
        assert len(enumerate_terms(11, 1, 1)) == 10

    def test_second_order_count(self):
        assert len(enumerate_terms(11, 1, 2)) == 55  # C(11, 2)

    def test_base_only(self):
        assert enumerate_terms(11, 1, 0) == [{}]

    def test_degrees(self):
        for omega in enumerate_terms(7, 2, 3):
            assert sum(omega.values()) == 3
            assert all(d >= 2 for d in omega)

    def test_invalid_arguments(self):
        with pytest.raises(ConfigurationError):
            enumerate_terms(5, 5, 1)
        with pytest.raises(ConfigurationError):
            enumerate_terms(5, 1, 6)


class TestExpansionPlan:
    def test_first_order_patterns(self):
        plan = ExpansionPlan(n=11, r=1, s=1)
        pats = plan.patterns()
        assert len(pats) == 11  # base + one per remaining component
        assert ((0, 1),) in pats

    def test_first_order_weights(self):
        plan = ExpansionPlan(n=11, r=1, s=1)
        base = ((0, 1),)
        assert plan.levels[0][base] == 1
        assert plan.levels[1][base] == -10
        assert plan.levels[1][((0, 1), (4, 1))] == 1

    def test_mixed_level_weights_sum_to_zero(self):
        plan = ExpansionPlan(n=6, r=1, s=2)
        for lvl in (1, 2):
            assert sum(plan.levels[lvl].values()) == 0

    def test_lam_prime(self):
        plan = ExpansionPlan(n=5, r=1, s=1)
        lam = np.array([0.5, 0.2, 0.1, 0.05, 0.01])
        lp = plan.lam_prime(((0, 1), (2, 2)), lam)
        assert np.allclose(lp, [0.5, 0.0, 0.2, 0.0, 0.0])

    def test_summary_rows(self):
        rows = ExpansionPlan(n=4, r=1, s=1).summary_rows()
        assert all(len(r) == 3 for r in rows)
        assert any("lam1" in r[1] for r in rows)

    def test_higher_stencil_order(self):
        plan = ExpansionPlan(n=5, r=1, s=1, t=(2,))
        # third-order first-derivative stencil: nodes up to 2*lam appear
        assert any(mult == 2 for pat in plan.patterns() for _, mult in pat)

    def test_assemble_requires_all_terms(self):
        plan = ExpansionPlan(n=4, r=1, s=1)
        with pytest.raises(IncompletePlanError):
            assemble_levels(plan, {((0, 1),): 1.0})

    def test_assemble_equal_values_cancel(self):
        # common-random-number degenerate case: every pattern carries the
        # same value, so every correction level vanishes exactly
        plan = ExpansionPlan(n=6, r=1, s=2)
        values = {pat: 3.7 for pat in plan.patterns()}
        levels = assemble_levels(plan, values)
        assert levels[0] == pytest.approx(3.7)
        assert levels[1] == pytest.approx(0.0, abs=1e-12)
        assert levels[2] == pytest.approx(0.0, abs=1e-12)


class TestFirstOrderCombine:
    def test_two_dimensional_exactness(self):
        # n=2: zero weight on the base term
        assert first_order_combine({2: 5.5}, base=123.0, n=2) == pytest.approx(5.5)

    def test_equal_terms_collapse(self):
        vals = {i: 0.42 for i in range(2, 12)}
        assert first_order_combine(vals, base=0.42, n=11) == pytest.approx(0.42)

    def test_matches_plan_assembly(self):
        rng = np.random.default_rng(1)
        n = 7
        plan = ExpansionPlan(n=n, r=1, s=1)
        base = 1.3
        per = {i: 1.3 + rng.normal() * 0.01 for i in range(2, n + 1)}
        values = {((0, 1),): base}
        values.update({((0, 1), (i - 1, 1)): per[i] for i in range(2, n + 1)})
        assert assemble_total(plan, values) == pytest.approx(
            first_order_combine(per, base, n), rel=1e-14)

    def test_missing_term_raises(self):
        with pytest.raises(IncompletePlanError):
            first_order_combine({2: 1.0}, base=0.5, n=4)


class TestPartialSums:
    def test_full_sum_equals_combination(self):
        vals = {i: 0.1 * i for i in range(2, 8)}
        full = partial_sum_profile(vals, base=0.05, k=7)
        assert full == pytest.approx(first_order_combine(vals, 0.05, 7), rel=1e-14)

    def test_k_one_is_base(self):
        assert partial_sum_profile({2: 9.0}, base=1.5, k=1) == pytest.approx(1.5)

    def test_invalid_k(self):
        with pytest.raises(ConfigurationError):
            partial_sum_profile({}, 1.0, 0)
