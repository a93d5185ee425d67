"""Monte Carlo benchmark engine under the terminal measure.

Paths follow the log-Euler scheme with either the full state-dependent drift
(re-evaluated every substep) or the drift frozen at the initial curve. The
frozen scheme is exact in distribution, so it advances tenor to tenor in a
single lognormal step regardless of the configured substep count; this makes
same-seed results independent of m_mc by construction.

Bermudan bounds use the primal-dual approach: an intrinsic-value threshold
exercise rule is fitted backward on one path set (golden-section search per
date), a fresh set estimates the lower bound, and the duality gap comes from
a martingale of policy continuation values estimated by nested inner
simulations along outer paths. Expansion-term estimates share one Gaussian
sample set across all eigenvalue patterns, which cancels most of the noise
in the stencil combinations.

All public functions return time-0 prices: terminal-relative values rebased
by the initial terminal-bond price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .anova import ExpansionPlan, Pattern
from .errors import ConfigurationError
from .model import LmmConfig, ZTransform, build_correlation, build_transform, freeze_drift
from .products import BermudanSwaption, RatchetFloor
from .results import BoundEstimate, PriceEstimate

_U64 = np.uint64
_PATH_BATCH = 100_000
_OUTER_BATCH = 500

# RNG stream ids per purpose; distinct streams never share counters.
_STREAM_POLICY = 11
_STREAM_LOWER = 12
_STREAM_OUTER = 13
_STREAM_INNER = 14
_STREAM_RATCHET = 15
_STREAM_SHARED = 16


@dataclass(frozen=True)
class McConfig:
    """Path counts and scheme parameters for the Monte Carlo engine."""

    n1: int = 1_000_000
    n2: int = 10_000_000
    n_outer: int = 5000
    n_inner: int = 1000
    m_mc: int = 5
    drift: str = "full"
    seed: int = 0

    def __post_init__(self):
        if min(self.n1, self.n2, self.n_outer, self.n_inner, self.m_mc) < 1:
            raise ConfigurationError("path counts and substeps must be >= 1")
        if self.drift not in ("full", "frozen"):
            raise ConfigurationError("drift mode must be 'full' or 'frozen'")

    @property
    def full(self) -> bool:
        return self.drift == "full"


@dataclass(frozen=True)
class PolicyThresholds:
    """Exercise iff intrinsic >= threshold (and > 0), one entry per date."""

    exercise_idx: tuple[int, ...]
    thresholds: np.ndarray

    def __post_init__(self):
        self.thresholds.setflags(write=False)


@dataclass(frozen=True)
class _Market:
    lnl0: np.ndarray
    alpha: float
    c: float
    chol: np.ndarray
    mu_frozen: np.ndarray
    rho_c2: np.ndarray

    @classmethod
    def build(cls, config: LmmConfig) -> "_Market":
        rho = build_correlation(config.phi, config.n)
        mu = freeze_drift(config, rho).mu
        return cls(lnl0=np.log(config.l0), alpha=config.alpha, c=config.c,
                   chol=config.c * np.linalg.cholesky(rho),
                   mu_frozen=mu, rho_c2=config.c ** 2 * rho)


def _batches(total: int, size: int):
    start = 0
    while start < total:
        yield start, min(size, total - start)
        start += size


def simulate_paths(config: LmmConfig, mc: McConfig, n_paths: int,
                   record_idx: list[int], stream: int = _STREAM_POLICY,
                   path0: int = 0) -> np.ndarray:
    """Rate states at the requested tenor indices, (n_paths, len(record_idx), n).

    Diagnostic surface used by the tests; pricing goes through the fused
    kernels below.
    """
    mkt = _Market.build(config)
    key = kernels.stream_key(mc.seed, stream)
    return np.exp(kernels._bermudan_states_np(
        key, path0, n_paths, mkt.lnl0, mkt.alpha, mkt.c, mkt.chol,
        mkt.mu_frozen, mkt.rho_c2, mc.full, mc.m_mc,
        np.asarray(record_idx, dtype=np.int64)))


# ---------------------------------------------------------------------------
# ratchet floorlet
# ---------------------------------------------------------------------------

def mc_price_ratchet(config: LmmConfig, product: RatchetFloor,
                     mc: McConfig) -> PriceEstimate:
    """Pathwise strike recursion + terminal floorlet payoff, n1 paths."""
    mkt = _Market.build(config)
    key = kernels.stream_key(mc.seed, _STREAM_RATCHET)
    total = 0.0
    totsq = 0.0
    for p0, nb in _batches(mc.n1, _PATH_BATCH):
        pay = kernels.ratchet_paths(key, p0, nb, mkt.lnl0, mkt.alpha, mkt.c,
                                    mkt.chol, mkt.mu_frozen, mkt.rho_c2,
                                    mc.full, mc.m_mc, product.k1, product.a,
                                    product.b, product.c)
        total += float(np.sum(pay))
        totsq += float(np.sum(pay * pay))
    mean = total / mc.n1
    var = max(totsq / mc.n1 - mean * mean, 0.0)
    rebase = config.terminal_bond
    return PriceEstimate(value=mean * rebase, method=f"mc-{mc.drift}",
                         stderr=math.sqrt(var / mc.n1) * rebase)


# ---------------------------------------------------------------------------
# Bermudan: policy learning and primal-dual bounds
# ---------------------------------------------------------------------------

def _golden_max(objective, lo: float, hi: float, evals: int) -> tuple[float, float]:
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    best_x, best_f = lo, objective(lo)
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = objective(x1), objective(x2)
    for x, f in ((x1, f1), (x2, f2)):
        if f > best_f:
            best_x, best_f = x, f
    for _ in range(evals - 3):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = objective(x2)
            if f2 > best_f:
                best_x, best_f = x2, f2
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = objective(x1)
            if f1 > best_f:
                best_x, best_f = x1, f1
    return best_x, best_f


def learn_policy(config: LmmConfig, product: BermudanSwaption, mc: McConfig,
                 search_evals: int = 64) -> PolicyThresholds:
    """Backward-fitted intrinsic thresholds maximizing the stopped payoff.

    Each date's threshold is searched by golden section over the observed
    intrinsic range, holding the later thresholds fixed; dates with no
    in-the-money paths never exercise.
    """
    mkt = _Market.build(config)
    key = kernels.stream_key(mc.seed, _STREAM_POLICY)
    ex = np.asarray(product.exercise_idx, dtype=np.int64)
    n_ex = len(ex)
    chunks = []
    for p0, nb in _batches(mc.n1, _PATH_BATCH):
        chunks.append(kernels.bermudan_intrinsics(
            key, p0, nb, mkt.lnl0, mkt.alpha, mkt.c, mkt.chol, mkt.mu_frozen,
            mkt.rho_c2, mc.full, mc.m_mc, product.strike, ex))
    intr = np.concatenate(chunks, axis=0)

    thresholds = np.full(n_ex, np.inf)
    thresholds[-1] = 0.0
    vnext = intr[:, -1].copy()  # arriving at the last date: exercise iff ITM
    for e in range(n_ex - 2, -1, -1):
        iv = intr[:, e]
        itm = iv > 0.0
        if not np.any(itm):
            continue

        def objective(h):
            return float(np.mean(np.where(itm & (iv >= h), iv, vnext)))

        h_star, f_star = _golden_max(objective, 0.0, float(iv.max()) * (1 + 1e-12),
                                     search_evals)
        if f_star > float(np.mean(vnext)):
            thresholds[e] = h_star
            vnext = np.where(itm & (iv >= h_star), iv, vnext)
    return PolicyThresholds(exercise_idx=tuple(int(i) for i in ex),
                            thresholds=thresholds)


def lower_bound(config: LmmConfig, product: BermudanSwaption, mc: McConfig,
                policy: PolicyThresholds) -> tuple[float, float]:
    """(value, stderr) of the policy's stopped payoff over n2 fresh paths."""
    mkt = _Market.build(config)
    key = kernels.stream_key(mc.seed, _STREAM_LOWER)
    ex = np.asarray(policy.exercise_idx, dtype=np.int64)
    total = 0.0
    totsq = 0.0
    for p0, nb in _batches(mc.n2, _PATH_BATCH):
        vals = kernels.bermudan_lower(
            key, p0, nb, mkt.lnl0, mkt.alpha, mkt.c, mkt.chol, mkt.mu_frozen,
            mkt.rho_c2, mc.full, mc.m_mc, product.strike, ex, policy.thresholds)
        total += float(np.sum(vals))
        totsq += float(np.sum(vals * vals))
    mean = total / mc.n2
    var = max(totsq / mc.n2 - mean * mean, 0.0)
    rebase = config.terminal_bond
    return mean * rebase, math.sqrt(var / mc.n2) * rebase


def upper_bound(config: LmmConfig, product: BermudanSwaption, mc: McConfig,
                policy: PolicyThresholds) -> tuple[float, float]:
    """(duality gap, stderr): mean pathwise max of intrinsic minus the
    policy-value martingale, continuation values from nested simulations."""
    mkt = _Market.build(config)
    key_out = kernels.stream_key(mc.seed, _STREAM_OUTER)
    key_in = kernels.stream_key(mc.seed, _STREAM_INNER)
    ex = np.asarray(policy.exercise_idx, dtype=np.int64)
    total = 0.0
    totsq = 0.0
    for o0, nb in _batches(mc.n_outer, _OUTER_BATCH):
        gaps = kernels.ab_gap(
            key_out, key_in, o0, nb, mc.n_inner, mkt.lnl0, mkt.alpha, mkt.c,
            mkt.chol, mkt.mu_frozen, mkt.rho_c2, mc.full, mc.m_mc,
            product.strike, ex, policy.thresholds)
        total += float(np.sum(gaps))
        totsq += float(np.sum(gaps * gaps))
    mean = total / mc.n_outer
    var = max(totsq / mc.n_outer - mean * mean, 0.0)
    rebase = config.terminal_bond
    return mean * rebase, math.sqrt(var / mc.n_outer) * rebase


def bermudan_bounds(config: LmmConfig, product: BermudanSwaption,
                    mc: McConfig, policy: PolicyThresholds | None = None) -> BoundEstimate:
    """Full primal-dual run: learn the policy, then lower bound and gap."""
    if policy is None:
        policy = learn_policy(config, product, mc)
    low, se = lower_bound(config, product, mc, policy)
    gap, gap_se = upper_bound(config, product, mc, policy)
    return BoundEstimate(lower=low, stderr=se, gap=gap, gap_stderr=gap_se)


def bound_price(bounds: BoundEstimate, drift: str) -> PriceEstimate:
    return PriceEstimate(value=bounds.midpoint, method=f"mc-{drift}",
                         stderr=bounds.stderr, lower=bounds.lower,
                         upper=bounds.upper)


# ---------------------------------------------------------------------------
# expansion terms by simulation with shared noise
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class McVrstResult:
    """Shared-noise estimates of a plan's terms.

    values: per-pattern means; level_sums/level_stderr: stencil-weighted
    level values V_r00, V_r11, ..; full/full_stderr: the untruncated
    simulation with every component active. All in time-0 price units.
    """

    values: dict[Pattern, float]
    level_sums: dict[int, float]
    level_stderr: dict[int, float]
    full: float
    full_stderr: float

    @property
    def total(self) -> float:
        return math.fsum(self.level_sums.values())


def mc_vrst(config: LmmConfig, plan: ExpansionPlan, product: RatchetFloor,
            n_paths: int, seed: int = 0,
            xf: ZTransform | None = None) -> McVrstResult:
    """Estimate every pattern of the plan from one shared Gaussian sample set.

    The anchored process is simulated directly in principal-component space:
    component d gets variance lam'_d per year (zero keeps it frozen at the
    anchor), and the same standard normals drive every pattern including the
    full (untruncated) reference, so differences between patterns carry far
    less noise than the individual values.
    """
    xf = xf or build_transform(config)
    key = kernels.stream_key(seed, _STREAM_SHARED)
    n = config.n
    n_int = n - 1
    lam = xf.spectrum.lam
    q = xf.spectrum.q
    anchor = xf.anchor
    taus = np.array([config.horizon - config.tenor(m) for m in range(1, n + 1)])
    betas = np.array([xf.beta(t) for t in taus])

    patterns = plan.patterns()
    sigmas = {pat: np.sqrt(plan.lam_prime(pat, lam) * config.alpha) for pat in patterns}
    sigmas["full"] = np.sqrt(lam * config.alpha)

    sums = {pat: 0.0 for pat in sigmas}
    level_acc = {lvl: [0.0, 0.0] for lvl in plan.levels}
    full_acc = [0.0, 0.0]

    for p0, nb in _batches(n_paths, _PATH_BATCH // 2):
        ctr = ((np.arange(p0, p0 + nb, dtype=np.uint64)[:, None, None] * _U64(n_int)
                + np.arange(n_int, dtype=np.uint64)[None, :, None]) * _U64(n)
               + np.arange(n, dtype=np.uint64)[None, None, :])
        xi = kernels.normals_at(key, ctr)  # (nb, n_int, n)
        pays = {}
        for pat, sig in sigmas.items():
            pays[pat] = _zspace_ratchet(xi, sig, anchor, betas, q, config, product)
            sums[pat] += float(np.sum(pays[pat]))
        for lvl, terms in plan.levels.items():
            lv = np.zeros(nb)
            for pat, w in terms.items():
                lv += float(w) * pays[pat]
            level_acc[lvl][0] += float(np.sum(lv))
            level_acc[lvl][1] += float(np.sum(lv * lv))
        full_acc[0] += float(np.sum(pays["full"]))
        full_acc[1] += float(np.sum(pays["full"] ** 2))

    rebase = config.terminal_bond
    values = {pat: sums[pat] / n_paths * rebase for pat in patterns}
    level_sums = {}
    level_stderr = {}
    for lvl, (s1, s2) in level_acc.items():
        mean = s1 / n_paths
        var = max(s2 / n_paths - mean * mean, 0.0)
        level_sums[lvl] = mean * rebase
        level_stderr[lvl] = math.sqrt(var / n_paths) * rebase
    fmean = full_acc[0] / n_paths
    fvar = max(full_acc[1] / n_paths - fmean * fmean, 0.0)
    return McVrstResult(values=values, level_sums=level_sums,
                        level_stderr=level_stderr, full=fmean * rebase,
                        full_stderr=math.sqrt(fvar / n_paths) * rebase)


def _zspace_ratchet(xi: np.ndarray, sig: np.ndarray, anchor: np.ndarray,
                    betas: np.ndarray, q: np.ndarray, config: LmmConfig,
                    product: RatchetFloor) -> np.ndarray:
    """Terminal-relative floorlet payoff along anchored component paths.

    Only the fixing rate is needed at each tenor, so the transform back to
    rate space is a single row of Q per date.
    """
    nb = xi.shape[0]
    n = config.n
    z = np.tile(anchor, (nb, 1))
    strike = np.full(nb, product.k1)
    for m in range(1, n + 1):
        if m > 1:
            z += sig * xi[:, m - 2, :]
        lnl_m = (z - betas[m - 1]) @ q[m - 1]
        lm = np.exp(np.clip(lnl_m, -40.0, 40.0))
        if m < n:
            strike = np.maximum(product.a * lm + product.b * strike + product.c, 0.0)
        else:
            return np.maximum(strike - lm, 0.0)
    raise AssertionError("unreachable")
