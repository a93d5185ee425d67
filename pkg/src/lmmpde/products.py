"""Product definitions: Bermudan payer swaption and ratchet floorlet.

Both products are priced relative to the terminal bond. The payer swaption
exercised at T_i pays the swap over periods i..N; each period's cashflow is
converted into terminal-bond units with the compounding factor
prod_{k=j+1..N} (1 + alpha L_k) read off the prevailing curve, so the
intrinsic value is

    max( alpha * sum_{j=i..N} (L_j - K) * prod_{k=j+1..N}(1 + alpha L_k), 0 ).

The ratchet floor contract resets its strike at every fixing date through
K_{i+1} = max(a L_i(T_i) + b K_i + c, 0); the value tracked here is the last
floorlet, paying max(K_N - L_N(T_N), 0) at the terminal date (earlier
floorlets follow by running the same machinery with a shorter rate count,
and the portfolio is the sum by linearity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConfigurationError
from .heatpde import TermGrid
from .model import LmmConfig


# ---------------------------------------------------------------------------
# reference payoff functions (single curve; the grid/path kernels mirror these)
# ---------------------------------------------------------------------------

def swaption_intrinsic(libor: np.ndarray, strike: float, i: int, alpha: float) -> float:
    """Payer-swaption exercise value at T_i in terminal-bond units."""
    libor = np.asarray(libor, dtype=float)
    n = libor.shape[0]
    if not 1 <= i <= n:
        raise ConfigurationError(f"exercise index {i} outside 1..{n}")
    if np.any(libor <= 0):
        raise ConfigurationError("rates must be positive")
    suf = 1.0
    acc = 0.0
    for j in range(n, i - 1, -1):
        acc += (libor[j - 1] - strike) * suf
        suf *= 1.0 + alpha * libor[j - 1]
    return max(alpha * acc, 0.0)


def ratchet_strike_update(k_prev: float, l_prev: float, a: float, b: float,
                          c: float) -> float:
    """K_next = max(a*L_prev + b*K_prev + c, 0)."""
    return max(a * l_prev + b * k_prev + c, 0.0)


def floorlet_payoff(k_i: float, libor: np.ndarray, i: int, alpha: float) -> float:
    """Floorlet i cashflow fixed at T_i, converted into terminal-bond units.

    The payoff max(K_i - L_i, 0) pays at T_{i+1}; its terminal-relative value
    at the fixing date is the payoff times prod_{k=i+1..N}(1 + alpha L_k).
    For i = N the product is empty.
    """
    libor = np.asarray(libor, dtype=float)
    conv = float(np.prod(1.0 + alpha * libor[i:]))
    return max(k_i - libor[i - 1], 0.0) * conv


# ---------------------------------------------------------------------------
# contracts
# ---------------------------------------------------------------------------

def yearly_exercise_indices(n: int) -> tuple[int, ...]:
    """Exercise tenor indices {1, 5, 9, ...} plus the final fixing date."""
    idx = list(range(1, n + 1, 4))
    if idx[-1] != n:
        idx.append(n)
    return tuple(idx)


@dataclass(frozen=True)
class BermudanSwaption:
    """Payer swaption exercisable on a yearly schedule of tenor dates."""

    strike: float
    exercise_idx: tuple[int, ...]

    def __post_init__(self):
        if self.strike <= 0:
            raise ConfigurationError("strike must be positive")
        if not self.exercise_idx or list(self.exercise_idx) != sorted(set(self.exercise_idx)):
            raise ConfigurationError("exercise indices must be strictly increasing")
        if self.exercise_idx[0] < 1:
            raise ConfigurationError("exercise indices are 1-based tenor indices")

    @classmethod
    def yearly(cls, strike: float, n: int) -> "BermudanSwaption":
        return cls(strike=strike, exercise_idx=yearly_exercise_indices(n))


@dataclass(frozen=True)
class RatchetFloor:
    """Last floorlet of a ratchet floor: strike K_1 resets through
    K_{i+1} = max(a L_i + b K_i + c, 0) and the payoff is against L_N."""

    k1: float
    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.k1 < 0:
            raise ConfigurationError("initial strike must be non-negative")


def strike_axis_nodes(k_max: float = 0.5) -> np.ndarray:
    """Strike grid: 21 nodes on [0, 0.05], 41 on [0.05, 0.15], 21 on
    [0.15, k_max], shared endpoints merged (81 nodes)."""
    parts = [np.linspace(0.0, 0.05, 21), np.linspace(0.05, 0.15, 41),
             np.linspace(0.15, k_max, 21)]
    return np.unique(np.concatenate(parts))


@dataclass(frozen=True)
class StrikeAxis:
    nodes: np.ndarray = field(default_factory=strike_axis_nodes)

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or len(nodes) < 4 or np.any(np.diff(nodes) <= 0):
            raise ConfigurationError("strike axis must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def k_max(self) -> float:
        return float(self.nodes[-1])


# ---------------------------------------------------------------------------
# PDE problem adapters (terminal conditions and event hooks per term solve)
# ---------------------------------------------------------------------------

def _grid_intrinsic(grid: TermGrid, tau: float, strike: float, i0: int,
                    alpha: float, g_max: float) -> np.ndarray:
    base_l, e0, e1 = grid.rate_factors(tau)
    intr = kernels.swap_intrinsic_grid(base_l, e0, e1, strike, i0, alpha, g_max)
    return intr[:, 0] if len(grid.dims) == 1 else intr


class BermudanPdeProblem:
    """Backward-induction hooks: terminal payoff at the last fixing date and
    pointwise max(continuation, intrinsic) at each earlier exercise date."""

    def __init__(self, product: BermudanSwaption, config: LmmConfig, g_max: float):
        n = config.n
        if product.exercise_idx[-1] != n:
            raise ConfigurationError("last exercise date must be the final fixing date")
        self.product = product
        self.config = config
        self.g_max = g_max

    def terminal(self, values, grid: TermGrid, tau: float) -> np.ndarray:
        intr = _grid_intrinsic(grid, 0.0, self.product.strike, self.config.n,
                               self.config.alpha, self.g_max)
        return intr[None, ...]

    def event_hooks(self, m_pde: int) -> dict[int, callable]:
        n = self.config.n
        hooks = {}
        for e in self.product.exercise_idx[:-1]:
            step = m_pde * (n - e)

            def hook(vals, grid, tau, e=e):
                intr = _grid_intrinsic(grid, tau, self.product.strike, e,
                                       self.config.alpha, self.g_max)
                return np.maximum(vals, intr[None, ...])

            hooks[step] = hook
        return hooks


class RatchetPdeProblem:
    """Strike-axis hooks: terminal floorlet payoff, then at each earlier
    fixing date a cubic-spline strike jump V(K) <- V(max(aL+bK+c, 0)).

    With portfolio=True every fixing date additionally injects that date's
    floorlet cashflow (converted into terminal units), so one backward sweep
    prices the whole floor; by linearity this equals the sum of the
    individually priced floorlets. The default prices the last floorlet
    alone. Strike targets beyond the axis end are clamped and counted in
    clamp_count (they sit far outside the configurations of interest).
    """

    def __init__(self, product: RatchetFloor, config: LmmConfig, g_max: float,
                 axis: StrikeAxis | None = None, portfolio: bool = False,
                 inject_at: tuple[int, ...] | None = None,
                 include_terminal: bool = True):
        self.product = product
        self.config = config
        self.g_max = g_max
        self.axis = axis or StrikeAxis()
        if inject_at is None:
            inject_at = tuple(range(1, config.n)) if portfolio else ()
        self.inject_at = frozenset(inject_at)
        self.include_terminal = include_terminal
        self.clamp_count = 0

    def terminal(self, values, grid: TermGrid, tau: float) -> np.ndarray:
        shape = (len(self.axis.nodes),) + grid.shape
        if not self.include_terminal:
            return np.zeros(shape)
        base_l, e0, e1 = grid.rate_factors(0.0)
        l_last, _ = kernels.rate_and_conv_grid(base_l, e0, e1, self.config.n,
                                               self.config.alpha)
        l_last = l_last[:, 0] if len(grid.dims) == 1 else l_last
        k = self.axis.nodes.reshape((-1,) + (1,) * len(grid.dims))
        return np.minimum(np.maximum(k - l_last[None, ...], 0.0), self.g_max)

    def event_hooks(self, m_pde: int) -> dict[int, callable]:
        n = self.config.n
        return {m_pde * (n - m): self._make_hook(m) for m in range(1, n)}

    def _make_hook(self, m: int):
        def hook(vals, grid, tau):
            alpha = self.config.alpha
            base_l, e0, e1 = grid.rate_factors(tau)
            lm, conv = kernels.rate_and_conv_grid(base_l, e0, e1, m, alpha)
            if len(grid.dims) == 1:
                lm, conv = lm[:, 0], conv[:, 0]
            nk = vals.shape[0]
            lm_flat = lm.reshape(-1)
            conv_flat = conv.reshape(-1)
            surf = np.ascontiguousarray(vals.reshape(nk, -1).T)  # (points, nk)
            nodes = self.axis.nodes
            target = (self.product.a * lm_flat[:, None]
                      + self.product.b * nodes[None, :] + self.product.c)
            target = np.maximum(target, 0.0)
            over = target > self.axis.k_max
            self.clamp_count += int(np.count_nonzero(over))
            np.clip(target, 0.0, self.axis.k_max, out=target)
            d2 = kernels.spline_coeffs(nodes, surf)
            out = kernels.spline_eval(nodes, surf, d2, target)
            if m in self.inject_at:
                out = out + np.minimum(
                    np.maximum(nodes[None, :] - lm_flat[:, None], 0.0)
                    * conv_flat[:, None], self.g_max)
            return np.ascontiguousarray(out.T).reshape(vals.shape)

        # the spline jump is a smooth map of the surface; only an injected
        # floorlet cashflow re-kinks it
        hook.restarts_damping = m in self.inject_at
        return hook
