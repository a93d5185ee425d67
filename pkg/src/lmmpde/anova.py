"""Expansion of the value function in eigenvalue directions.

The full N-dimensional pricing problem is approximated by anchoring the last
N-r principal components and adding Taylor corrections in their variances:
around lam0 = (lam_1, .., lam_r, 0, .., 0), each correction term is a finite
difference in eigenvalue space whose node values u(lam') come from solves of
low-dimensional problems (PDE for one or two active components, Monte Carlo
otherwise, since each lam' zeroes out most diffusion directions).

Stencil weights are exact rationals and stay exact until the final
combination; that matters because the first-order combination carries a
(2-N) weight on the base term against N-1 nearly equal corrections.

A plan (r, s) sums correction levels 1..s; level i uses, for a direction
carrying derivative order m, the one-dimensional stencil of accuracy order
m + t_i + 1 - i (t_i defaults to i), and multi-dimensional stencils are
plain tensor products of the one-dimensional rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product as iproduct

import numpy as np

from . import heatpde
from .errors import ConfigurationError, IncompletePlanError
from .model import ZTransform


@dataclass(frozen=True)
class Stencil:
    """One-dimensional finite-difference row on nodes {0, lam, 2lam, 3lam},
    normalized to approximate lam^m u^(m)(0) / m!."""

    m: int
    order: int
    nodes: tuple[int, ...]
    weights: tuple[Fraction, ...]


_F = Fraction
_STENCILS = {
    (0, 1): Stencil(0, 1, (0,), (_F(1),)),
    (1, 2): Stencil(1, 2, (1, 0), (_F(1), _F(-1))),
    (1, 3): Stencil(1, 3, (2, 1, 0), (_F(-1, 2), _F(4, 2), _F(-3, 2))),
    (1, 4): Stencil(1, 4, (3, 2, 1, 0),
                    (_F(2, 6), _F(-9, 6), _F(18, 6), _F(-11, 6))),
    (2, 3): Stencil(2, 3, (2, 1, 0), (_F(1, 2), _F(-2, 2), _F(1, 2))),
    (2, 4): Stencil(2, 4, (3, 2, 1, 0),
                    (_F(-1, 2), _F(4, 2), _F(-5, 2), _F(2, 2))),
    (3, 4): Stencil(3, 4, (3, 2, 1, 0),
                    (_F(1, 6), _F(-3, 6), _F(3, 6), _F(-1, 6))),
}


def stencil_table(m: int, order: int) -> Stencil:
    """The stencil approximating lam^m u^(m)(0)/m! with error order `order`."""
    try:
        return _STENCILS[(m, order)]
    except KeyError:
        supported = sorted(_STENCILS)
        raise ConfigurationError(
            f"no stencil for derivative order {m} at accuracy order {order}; "
            f"supported (m, order) pairs: {supported}") from None


def enumerate_terms(n: int, r: int, s: int) -> list[dict[int, int]]:
    """All multi-indices of total degree s over components r..n-1 (0-based).

    Returned as {component: derivative order} dicts; the count is
    C(n-r+s-1, s).
    """
    if not 0 <= r < n:
        raise ConfigurationError(f"need 0 <= r < n, got r={r}, n={n}")
    if s < 0 or (s > 0 and r + s > n):
        raise ConfigurationError(f"order s={s} too large for n={n}, r={r}")
    if s == 0:
        return [{}]
    out = []

    def rec(start: int, remaining: int, current: dict[int, int]):
        if remaining == 0:
            out.append(dict(current))
            return
        for d in range(start, n):
            current[d] = current.get(d, 0) + 1
            rec(d, remaining - 1, current)
            current[d] -= 1
            if current[d] == 0:
                del current[d]

    rec(r, s, {})
    return out


Pattern = tuple[tuple[int, int], ...]  # sorted ((component, node multiple), ...)


@dataclass(frozen=True)
class ExpansionPlan:
    """Term book for an (r, s) expansion of an n-component problem.

    levels[i] maps node patterns to exact combination weights for correction
    level i; level 0 is the anchored base term. A pattern lists the active
    components with their node multiples; base components 0..r-1 always ride
    along at multiple 1.
    """

    n: int
    r: int
    s: int
    t: tuple[int, ...] = ()
    levels: dict[int, dict[Pattern, Fraction]] = field(init=False, repr=False)

    def __post_init__(self):
        if self.r < 1:
            raise ConfigurationError("need at least one fully included component")
        t = tuple(self.t) if self.t else tuple(range(1, self.s + 1))
        if len(t) != self.s:
            raise ConfigurationError(f"need {self.s} stencil orders, got {len(t)}")
        object.__setattr__(self, "t", t)
        base: Pattern = tuple((d, 1) for d in range(self.r))
        levels: dict[int, dict[Pattern, Fraction]] = {0: {base: _F(1)}}
        for level in range(1, self.s + 1):
            t_lvl = t[level - 1]
            acc: dict[Pattern, Fraction] = {}
            for omega in enumerate_terms(self.n, self.r, level):
                dims = sorted(omega)
                rows = [stencil_table(omega[d], omega[d] + t_lvl + 1 - level)
                        for d in dims]
                for combo in iproduct(*(range(len(rw.nodes)) for rw in rows)):
                    weight = _F(1)
                    pat = list(base)
                    for d, rw, k in zip(dims, rows, combo):
                        weight *= rw.weights[k]
                        if rw.nodes[k] > 0:
                            pat.append((d, rw.nodes[k]))
                    key = tuple(sorted(pat))
                    acc[key] = acc.get(key, _F(0)) + weight
            levels[level] = acc
        object.__setattr__(self, "levels", levels)

    def patterns(self) -> list[Pattern]:
        """Distinct node patterns across all levels (each solved once)."""
        seen: dict[Pattern, None] = {}
        for lvl in sorted(self.levels):
            for pat in self.levels[lvl]:
                seen.setdefault(pat)
        return list(seen)

    def lam_prime(self, pattern: Pattern, lam: np.ndarray) -> np.ndarray:
        out = np.zeros_like(lam)
        for d, mult in pattern:
            out[d] = mult * lam[d]
        return out

    def summary_rows(self) -> list[tuple[int, str, str]]:
        """(level, pattern, weight) rows for audit output."""
        rows = []
        for lvl in sorted(self.levels):
            for pat, w in sorted(self.levels[lvl].items()):
                pat_str = "+".join(f"{mult}*lam{d + 1}" for d, mult in pat)
                rows.append((lvl, pat_str, str(w)))
        return rows


def assemble_levels(plan: ExpansionPlan, values: dict[Pattern, float]) -> dict[int, float]:
    """Per-level sums V_r00, V_r11, ..: exact weights against solved values."""
    out = {}
    for lvl, terms in plan.levels.items():
        total = []
        for pat, w in terms.items():
            if pat not in values:
                raise IncompletePlanError(f"no solved value for pattern {pat}")
            if w != 0:
                total.append(float(w) * values[pat])
        out[lvl] = math.fsum(total)
    return out


def assemble_total(plan: ExpansionPlan, values: dict[Pattern, float]) -> float:
    return math.fsum(assemble_levels(plan, values).values())


def first_order_combine(values: dict[int, float], base: float, n: int) -> float:
    """(2-n) * u(base) + sum_{i=2..n} u(base + lam_i e_i); values keyed by the
    1-based component index i."""
    missing = [i for i in range(2, n + 1) if i not in values]
    if missing:
        raise IncompletePlanError(f"missing first-order terms for components {missing}")
    return math.fsum([(2.0 - n) * base] + [values[i] for i in range(2, n + 1)])


def partial_sum_profile(values: dict[int, float], base: float, k: int) -> float:
    """Base term plus corrections for components 2..k only."""
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    return math.fsum([base] + [values[i] - base for i in range(2, k + 1)])


# ---------------------------------------------------------------------------
# PDE evaluation of a plan's term book
# ---------------------------------------------------------------------------

def solve_plan_pde(xf: ZTransform, plan: ExpansionPlan, problem,
                   spec: heatpde.GridSpec, m_pde: int,
                   k_nodes: np.ndarray | None = None,
                   k_readout: float | None = None) -> dict[Pattern, float]:
    """Solve every distinct pattern of the plan with the PDE engine.

    Only patterns with at most two active components are PDE-solvable;
    higher-dimensional patterns must go through the Monte Carlo route.
    """
    events = problem.event_hooks(m_pde)
    values: dict[Pattern, float] = {}
    for pat in plan.patterns():
        if len(pat) > 2:
            raise ConfigurationError(
                f"pattern {pat} needs a {len(pat)}-dimensional PDE; use the MC route")
        lam_active = {d: mult * xf.spectrum.lam[d] for d, mult in pat}
        values[pat] = heatpde.solve_term(
            xf, lam_active, spec, m_pde, problem.terminal, events,
            k_nodes=k_nodes, k_readout=k_readout)
    return values


def first_order_pde_values(xf: ZTransform, problem, spec: heatpde.GridSpec,
                           m_pde: int, k_nodes: np.ndarray | None = None,
                           k_readout: float | None = None) -> tuple[float, dict[int, float]]:
    """Base term and the per-component corrections of the (1,1) plan.

    Returns (u(lam0), {i: u(lam0 + lam_i e_i)}) with i the 1-based component
    index, the raw material for first_order_combine and the partial-sum
    profile.
    """
    plan = ExpansionPlan(n=xf.spectrum.n, r=1, s=1)
    values = solve_plan_pde(xf, plan, problem, spec, m_pde, k_nodes, k_readout)
    base = values[((0, 1),)]
    per_dim = {d + 1: values[((0, 1), (d, 1))] for d in range(1, xf.spectrum.n)}
    return base, per_dim
