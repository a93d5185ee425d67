"""Hot numerical kernels: counter-based RNG, tridiagonal solves, splines, path stepping.

Every kernel has a numba fast path and a pure-numpy fallback. The backend is
chosen at import time from the environment variable ``LMMPDE_NO_NUMBA``
(set to 1/true/yes to force the fallback) and can be switched at runtime with
:func:`set_backend`, which the tests and the benchmark script use to compare
the two paths.

Randomness is a counter-based splitmix64 mixer feeding Wichura's AS241
inverse-normal approximation. Each normal variate is a pure function of
(seed-derived key, counter), so draws are independent of batch split and
bit-identical across backends. Path kernels agree across backends up to
floating-point reassociation in the noise mixing; same-backend runs with the
same seed are bit-reproducible.
"""

from __future__ import annotations

import math
import os

import numpy as np
from scipy.linalg import solve_banded

from .errors import NumericalError

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f

        if args and callable(args[0]):
            return args[0]
        return wrap


_U = np.uint64
_GOLDEN = _U(0x9E3779B97F4A7C15)
_MIX1 = _U(0xBF58476D1CE4E5B9)
_MIX2 = _U(0x94D049BB133111EB)
_KEYC = _U(0xD1B54A32D192ED03)
_SH30, _SH27, _SH31, _SH11 = _U(30), _U(27), _U(31), _U(11)
_INV53 = 1.0 / 9007199254740992.0
_INV54 = _INV53 / 2.0


# ---------------------------------------------------------------------------
# RNG
# ---------------------------------------------------------------------------

_M64 = (1 << 64) - 1


def _mix64(z: int) -> int:
    # python-int variant of the splitmix64 finalizer (no overflow warnings)
    z = (z * 0x9E3779B97F4A7C15 + 0x9E3779B97F4A7C15) & _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return z ^ (z >> 31)


def stream_key(seed: int, stream: int) -> np.uint64:
    """Independent stream key derived from (seed, stream id)."""
    k = _mix64((seed & _M64) ^ 0xD1B54A32D192ED03)
    return _U(_mix64(k ^ _mix64(stream & _M64)))


def _ndtri(p):
    # Wichura's PPND16 rational approximation to the inverse normal CDF.
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


_ndtri_nb = njit(cache=True)(_ndtri) if HAVE_NUMBA else _ndtri


@njit(cache=True)
def _normal_at_nb(key, ctr):
    z = key + ctr * _GOLDEN
    z = z * _GOLDEN + _GOLDEN
    z = (z ^ (z >> _SH30)) * _MIX1
    z = (z ^ (z >> _SH27)) * _MIX2
    z = z ^ (z >> _SH31)
    u = (z >> _SH11) * _INV53 + _INV54
    return _ndtri_nb(u)


def _ndtri_np(p):
    q = p - 0.5
    out = np.empty_like(p)
    central = np.abs(q) <= 0.425
    qc = q[central]
    r = 0.180625 - qc * qc
    num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
              + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
            + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
    den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
              + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
            + 4.2313330701600911252e1) * r + 1.0)
    out[central] = qc * num / den

    tails = ~central
    if np.any(tails):
        qt = q[tails]
        r = np.where(qt < 0.0, p[tails], 1.0 - p[tails])
        r = np.sqrt(-np.log(r))
        near = r <= 5.0
        val = np.empty_like(r)
        rn = r[near] - 1.6
        num = (((((((7.74545014278341407640e-4 * rn + 2.27238449892691845833e-2) * rn
                    + 2.41780725177450611770e-1) * rn + 1.27045825245236838258e0) * rn
                  + 3.64784832476320460504e0) * rn + 5.76949722146069140550e0) * rn
                + 4.63033784615654529590e0) * rn + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * rn + 5.47593808499534494600e-4) * rn
                    + 1.51986665636164571966e-2) * rn + 1.48103976427480074590e-1) * rn
                  + 6.89767334985100004550e-1) * rn + 1.67638483018380384940e0) * rn
                + 2.05319162663775882187e0) * rn + 1.0)
        val[near] = num / den
        far = ~near
        rf = r[far] - 5.0
        num = (((((((2.01033439929228813265e-7 * rf + 2.71155556874348757815e-5) * rf
                    + 1.24266094738807843860e-3) * rf + 2.65321895265761230930e-2) * rf
                  + 2.96560571828504891230e-1) * rf + 1.78482653991729133580e0) * rf
                + 5.46378491116411436990e0) * rf + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * rf + 1.42151175831644588870e-7) * rf
                    + 1.84631831751005468180e-5) * rf + 7.86869131145613259100e-4) * rf
                  + 1.48753612908506148525e-2) * rf + 1.36929880922735805310e-1) * rf
                + 5.99832206555887937690e-1) * rf + 1.0)
        val[far] = num / den
        out[tails] = np.where(qt < 0.0, -val, val)
    return out


def normals_at(key: np.uint64, ctr: np.ndarray) -> np.ndarray:
    """Normals at the given uint64 counters (vectorized, any shape)."""
    z = _U(key) + ctr.astype(np.uint64) * _GOLDEN
    z = z * _GOLDEN + _GOLDEN
    z = (z ^ (z >> _SH30)) * _MIX1
    z = (z ^ (z >> _SH27)) * _MIX2
    z = z ^ (z >> _SH31)
    u = (z >> _SH11).astype(np.float64) * _INV53 + _INV54
    return _ndtri_np(u)


def normals(key: np.uint64, ctr0: int, n: int) -> np.ndarray:
    return normals_at(key, np.arange(ctr0, ctr0 + n, dtype=np.uint64))


# ---------------------------------------------------------------------------
# tridiagonal systems (factor once, solve many right-hand sides)
# ---------------------------------------------------------------------------

def _thomas_arrays(sub, diag, sup):
    # Thomas LU: row multipliers + modified pivots, reused across solves.
    n = diag.shape[0]
    low = np.zeros(n)
    dfac = np.empty(n)
    dfac[0] = diag[0]
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(1, n):
            low[i] = sub[i] / dfac[i - 1]
            dfac[i] = diag[i] - low[i] * sup[i - 1]
    if not np.all(np.abs(dfac) > 1e-14):
        raise NumericalError("tridiagonal pivot magnitude at or below 1e-14")
    return low, dfac, sup.copy()


def _tridiag_factor_np(sub, diag, sup):
    _thomas_arrays(sub, diag, sup)  # uniform pivot check across backends
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = sup[:-1]
    ab[1, :] = diag
    ab[2, :-1] = sub[1:]
    return (ab,)


def _tridiag_solve_np(factor, rhs):
    return solve_banded((1, 1), factor[0], rhs.T, check_finite=False).T


def _tridiag_factor_nb(sub, diag, sup):
    return _thomas_arrays(sub, diag, sup)


@njit(cache=True)
def _tridiag_solve_loops(low, dfac, sup, rhs):
    m, n = rhs.shape
    out = np.empty_like(rhs)
    for j in range(m):
        out[j, 0] = rhs[j, 0]
        for i in range(1, n):
            out[j, i] = rhs[j, i] - low[i] * out[j, i - 1]
        out[j, n - 1] = out[j, n - 1] / dfac[n - 1]
        for i in range(n - 2, -1, -1):
            out[j, i] = (out[j, i] - sup[i] * out[j, i + 1]) / dfac[i]
    return out


def _tridiag_solve_nb(factor, rhs):
    return _tridiag_solve_loops(factor[0], factor[1], factor[2], rhs)


def _banded_matvec_np(sub, diag, sup, x):
    out = x * diag
    out[..., 1:] += sub[1:] * x[..., :-1]
    out[..., :-1] += sup[:-1] * x[..., 1:]
    return out


@njit(cache=True)
def _banded_matvec_nb(sub, diag, sup, x):
    m, n = x.shape
    out = np.empty_like(x)
    for j in range(m):
        out[j, 0] = diag[0] * x[j, 0] + sup[0] * x[j, 1]
        for i in range(1, n - 1):
            out[j, i] = sub[i] * x[j, i - 1] + diag[i] * x[j, i] + sup[i] * x[j, i + 1]
        out[j, n - 1] = sub[n - 1] * x[j, n - 2] + diag[n - 1] * x[j, n - 1]
    return out


# ---------------------------------------------------------------------------
# fused Peaceman-Rachford step for (nk, n0, n1) surfaces
#
# Processes one k-slice at a time so the working set stays cache resident;
# every inner loop sweeps row-major. Explicit bands are (I + dt/2 A), the
# implicit factors come from tridiag Thomas precomputation of (I - dt/2 A).
# ---------------------------------------------------------------------------

@njit(cache=True)
def _adi_pr_fused_nb(v, es0, ed0, eu0, il0, df0, iu0,
                     es1, ed1, eu1, il1, df1, iu1):
    nk, n0, n1 = v.shape
    out = np.empty_like(v)
    r = np.empty((n0, n1))
    u = np.empty((n0, n1))
    for k in range(nk):
        s = v[k]
        for i in range(n0):  # r = (I + dt/2 A1) s, along rows
            r[i, 0] = ed1[0] * s[i, 0] + eu1[0] * s[i, 1]
            for j in range(1, n1 - 1):
                r[i, j] = es1[j] * s[i, j - 1] + ed1[j] * s[i, j] + eu1[j] * s[i, j + 1]
            r[i, n1 - 1] = es1[n1 - 1] * s[i, n1 - 2] + ed1[n1 - 1] * s[i, n1 - 1]
        for j in range(n1):  # u = (I - dt/2 A0)^{-1} r, along columns
            u[0, j] = r[0, j]
        for i in range(1, n0):
            for j in range(n1):
                u[i, j] = r[i, j] - il0[i] * u[i - 1, j]
        for j in range(n1):
            u[n0 - 1, j] = u[n0 - 1, j] / df0[n0 - 1]
        for i in range(n0 - 2, -1, -1):
            for j in range(n1):
                u[i, j] = (u[i, j] - iu0[i] * u[i + 1, j]) / df0[i]
        for j in range(n1):  # r = (I + dt/2 A0) u, along columns (row sweeps)
            r[0, j] = ed0[0] * u[0, j] + eu0[0] * u[1, j]
        for i in range(1, n0 - 1):
            for j in range(n1):
                r[i, j] = es0[i] * u[i - 1, j] + ed0[i] * u[i, j] + eu0[i] * u[i + 1, j]
        for j in range(n1):
            r[n0 - 1, j] = es0[n0 - 1] * u[n0 - 2, j] + ed0[n0 - 1] * u[n0 - 1, j]
        o = out[k]
        for i in range(n0):  # out = (I - dt/2 A1)^{-1} r, along rows
            o[i, 0] = r[i, 0]
            for j in range(1, n1):
                o[i, j] = r[i, j] - il1[j] * o[i, j - 1]
            o[i, n1 - 1] = o[i, n1 - 1] / df1[n1 - 1]
            for j in range(n1 - 2, -1, -1):
                o[i, j] = (o[i, j] - iu1[j] * o[i, j + 1]) / df1[j]
    return out


# ---------------------------------------------------------------------------
# cyclic Jacobi eigensolver for symmetric matrices (N <= ~128)
# ---------------------------------------------------------------------------

def _jacobi_sweeps_py(a, v, tol, max_sweeps):
    n = a.shape[0]
    for _ in range(max_sweeps):
        off = 0.0
        for i in range(n - 1):
            for j in range(i + 1, n):
                off += a[i, j] * a[i, j]
        off = math.sqrt(2.0 * off)
        if off <= tol:
            return off
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
                if theta < 0.0:
                    t = -t
                cs = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * cs
                tau = sn / (1.0 + cs)
                app, aqq = a[p, p], a[q, q]
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    if k != p and k != q:
                        akp, akq = a[k, p], a[k, q]
                        a[k, p] = akp - sn * (akq + tau * akp)
                        a[p, k] = a[k, p]
                        a[k, q] = akq + sn * (akp - tau * akq)
                        a[q, k] = a[k, q]
                for k in range(n):
                    vkp, vkq = v[k, p], v[k, q]
                    v[k, p] = vkp - sn * (vkq + tau * vkp)
                    v[k, q] = vkq + sn * (vkp - tau * vkq)
    off = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            off += a[i, j] * a[i, j]
    return -math.sqrt(2.0 * off)  # negative signals non-convergence


_jacobi_sweeps_nb = njit(cache=True)(_jacobi_sweeps_py) if HAVE_NUMBA else _jacobi_sweeps_py


def jacobi_sweeps(a, v, tol, max_sweeps):
    """Cyclic Jacobi rotations in place; returns the final off-diagonal norm
    (negated when the sweep budget was exhausted)."""
    if _backend == "numba":
        return _jacobi_sweeps_nb(a, v, tol, max_sweeps)
    return _jacobi_sweeps_py(a, v, tol, max_sweeps)


# ---------------------------------------------------------------------------
# natural cubic splines, batched over rows
# ---------------------------------------------------------------------------

def spline_coeffs(x, y):
    """Second derivatives of the natural cubic spline through (x, y[i, :]) rows."""
    n = x.shape[0]
    h = np.diff(x)
    diag = np.empty(n)
    diag[0] = diag[-1] = 1.0
    diag[1:-1] = 2.0 * (h[:-1] + h[1:])
    sub = np.zeros(n)
    sup = np.zeros(n)
    sub[1:-1] = h[:-1]
    sup[1:-1] = h[1:]
    rhs = np.zeros_like(y)
    dy = np.diff(y, axis=1)
    rhs[:, 1:-1] = 6.0 * (dy[:, 1:] / h[1:] - dy[:, :-1] / h[:-1])
    return tridiag_solve(tridiag_factor(sub, diag, sup), rhs)


def _spline_eval_np(x, y, d2, xq):
    n = x.shape[0]
    idx = np.clip(np.searchsorted(x, xq, side="right") - 1, 0, n - 2)
    rows = np.arange(y.shape[0])[:, None]
    x0 = x[idx]
    h = x[idx + 1] - x0
    a = (x[idx + 1] - xq) / h
    b = (xq - x0) / h
    y0, y1 = y[rows, idx], y[rows, idx + 1]
    d0, d1 = d2[rows, idx], d2[rows, idx + 1]
    return a * y0 + b * y1 + ((a ** 3 - a) * d0 + (b ** 3 - b) * d1) * (h * h) / 6.0


@njit(cache=True)
def _spline_eval_nb(x, y, d2, xq):
    m, q = xq.shape
    n = x.shape[0]
    out = np.empty((m, q))
    for j in range(m):
        for k in range(q):
            xv = xq[j, k]
            lo = 0
            hi = n - 1
            while hi - lo > 1:
                mid = (lo + hi) // 2
                if x[mid] <= xv:
                    lo = mid
                else:
                    hi = mid
            h = x[lo + 1] - x[lo]
            a = (x[lo + 1] - xv) / h
            b = (xv - x[lo]) / h
            out[j, k] = (a * y[j, lo] + b * y[j, lo + 1]
                         + ((a ** 3 - a) * d2[j, lo] + (b ** 3 - b) * d2[j, lo + 1])
                         * (h * h) / 6.0)
    return out


# ---------------------------------------------------------------------------
# payoff evaluation on PDE grids
#
# Rates on a product grid factor as L_j = base_l[j] * e0[k0, j] * e1[k1, j]
# (exponentials of the separable log-rate contributions of each active
# principal component), which avoids a transcendental per grid point.
# ---------------------------------------------------------------------------

@njit(cache=True)
def _swap_intrinsic_grid_nb(base_l, e0, e1, strike, i0, alpha, gmax):
    n0, n1, nr = e0.shape[0], e1.shape[0], base_l.shape[0]
    out = np.empty((n0, n1))
    for p in range(n0):
        for r in range(n1):
            suf = 1.0
            acc = 0.0
            for j in range(nr, i0 - 1, -1):
                lj = base_l[j - 1] * e0[p, j - 1] * e1[r, j - 1]
                if lj > 2.353852668370200e17:  # exp(40)
                    lj = 2.353852668370200e17
                acc += (lj - strike) * suf
                suf *= 1.0 + alpha * lj
                if suf > 1e12:
                    suf = 1e12
            v = alpha * acc
            if v < 0.0:
                v = 0.0
            if v > gmax:
                v = gmax
            out[p, r] = v
    return out


def _swap_intrinsic_grid_np(base_l, e0, e1, strike, i0, alpha, gmax):
    n0, n1, nr = e0.shape[0], e1.shape[0], base_l.shape[0]
    suf = np.ones((n0, n1))
    acc = np.zeros((n0, n1))
    for j in range(nr, i0 - 1, -1):
        lj = np.minimum(base_l[j - 1] * np.outer(e0[:, j - 1], e1[:, j - 1]),
                        2.353852668370200e17)
        acc += (lj - strike) * suf
        suf = np.minimum(suf * (1.0 + alpha * lj), 1e12)
    return np.clip(alpha * acc, 0.0, gmax)


@njit(cache=True)
def _rate_and_conv_grid_nb(base_l, e0, e1, m, alpha):
    # rate L_m and the conversion product over rates m+1..N, per grid point
    n0, n1, nr = e0.shape[0], e1.shape[0], base_l.shape[0]
    lm = np.empty((n0, n1))
    conv = np.empty((n0, n1))
    for p in range(n0):
        for r in range(n1):
            lv = base_l[m - 1] * e0[p, m - 1] * e1[r, m - 1]
            if lv > 2.353852668370200e17:
                lv = 2.353852668370200e17
            lm[p, r] = lv
            suf = 1.0
            for j in range(m + 1, nr + 1):
                lj = base_l[j - 1] * e0[p, j - 1] * e1[r, j - 1]
                if lj > 2.353852668370200e17:
                    lj = 2.353852668370200e17
                suf *= 1.0 + alpha * lj
                if suf > 1e12:
                    suf = 1e12
            conv[p, r] = suf
    return lm, conv


def _rate_and_conv_grid_np(base_l, e0, e1, m, alpha):
    nr = base_l.shape[0]
    lm = np.minimum(base_l[m - 1] * np.outer(e0[:, m - 1], e1[:, m - 1]),
                    2.353852668370200e17)
    conv = np.ones_like(lm)
    for j in range(m + 1, nr + 1):
        lj = np.minimum(base_l[j - 1] * np.outer(e0[:, j - 1], e1[:, j - 1]),
                        2.353852668370200e17)
        conv = np.minimum(conv * (1.0 + alpha * lj), 1e12)
    return lm, conv


# ---------------------------------------------------------------------------
# LMM path kernels (terminal measure, log-Euler / exact lognormal stepping)
#
# Counter layout (global path id P, interval m = 0..n_int-1, substep s, dim d):
#   full drift:   ctr = ((P*n_int + m)*m_sub + s)*N + d
#   frozen drift: ctr = (P*n_int + m)*N + d        (one exact step per interval,
#                                                    independent of m_sub)
# ---------------------------------------------------------------------------

@njit(cache=True)
def _swap_intrinsic_nb(lnL, strike, i0, alpha):
    # payer swap over periods j = i0..N (1-based), in terminal-bond units
    n = lnL.shape[0]
    suf = 1.0
    acc = 0.0
    for j in range(n, i0 - 1, -1):
        lj = math.exp(min(max(lnL[j - 1], -40.0), 40.0))
        acc += (lj - strike) * suf
        suf *= 1.0 + alpha * lj
        if suf > 1e12:
            suf = 1e12
    v = alpha * acc
    return v if v > 0.0 else 0.0


def swap_intrinsic_batch(lnL, strike, i0, alpha):
    """Vectorized payer-swap intrinsic over a batch of curves (m, N)."""
    n = lnL.shape[1]
    L = np.exp(np.clip(lnL, -40.0, 40.0))
    suf = np.ones(lnL.shape[0])
    acc = np.zeros(lnL.shape[0])
    for j in range(n, i0 - 1, -1):
        lj = L[:, j - 1]
        acc += (lj - strike) * suf
        suf = np.minimum(suf * (1.0 + alpha * lj), 1e12)
    return np.maximum(alpha * acc, 0.0)


@njit(cache=True)
def _step_path_nb(lnL, key, p_glob, m, n_int, m_sub, full,
                  alpha, c, chol, mu_frozen, rho_c2, xi):
    # advance one tenor interval in place; xi is an (N,) scratch buffer
    n = lnL.shape[0]
    if full:
        dt = alpha / m_sub
        sq = math.sqrt(dt)
        for s in range(m_sub):
            base = ((_U(p_glob) * _U(n_int) + _U(m)) * _U(m_sub) + _U(s)) * _U(n)
            for d in range(n):
                xi[d] = _normal_at_nb(key, base + _U(d))
            for i in range(n):
                drift = 0.0
                for j in range(i + 1, n):
                    lj = math.exp(lnL[j])
                    drift -= alpha * lj / (1.0 + alpha * lj) * rho_c2[i, j]
                noise = 0.0
                for k in range(i + 1):
                    noise += chol[i, k] * xi[k]
                lnL[i] += (drift - 0.5 * c * c) * dt + sq * noise
    else:
        sq = math.sqrt(alpha)
        base = (_U(p_glob) * _U(n_int) + _U(m)) * _U(n)
        for d in range(n):
            xi[d] = _normal_at_nb(key, base + _U(d))
        for i in range(n - 1, -1, -1):
            noise = 0.0
            for k in range(i + 1):
                noise += chol[i, k] * xi[k]
            lnL[i] += (mu_frozen[i] - 0.5 * c * c) * alpha + sq * noise


@njit(cache=True)
def _ratchet_paths_nb(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen, rho_c2,
                      full, m_sub, k1, ra, rb, rc):
    n = lnL0.shape[0]
    n_int = n - 1
    pay = np.empty(npaths)
    lnL = np.empty(n)
    xi = np.empty(n)
    for p in range(npaths):
        for d in range(n):
            lnL[d] = lnL0[d]
        strike = k1
        for m in range(n_int):
            lm = math.exp(lnL[m])  # rate m+1 fixes at tenor m+1 (T_{m+1})
            strike = max(ra * lm + rb * strike + rc, 0.0)
            _step_path_nb(lnL, key, p0 + p, m, n_int, m_sub, full,
                          alpha, c, chol, mu_frozen, rho_c2, xi)
        pay[p] = max(strike - math.exp(lnL[n - 1]), 0.0)
    return pay


@njit(cache=True)
def _bermudan_intrinsics_nb(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen,
                            rho_c2, full, m_sub, strike, ex_idx):
    n = lnL0.shape[0]
    n_int = n - 1
    n_ex = ex_idx.shape[0]
    out = np.empty((npaths, n_ex))
    lnL = np.empty(n)
    xi = np.empty(n)
    for p in range(npaths):
        for d in range(n):
            lnL[d] = lnL0[d]
        e = 0
        for m in range(n_int + 1):  # m is the current tenor index - 1
            if e < n_ex and ex_idx[e] == m + 1:
                out[p, e] = _swap_intrinsic_nb(lnL, strike, m + 1, alpha)
                e += 1
            if m < n_int:
                _step_path_nb(lnL, key, p0 + p, m, n_int, m_sub, full,
                              alpha, c, chol, mu_frozen, rho_c2, xi)
    return out


@njit(cache=True)
def _bermudan_lower_nb(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen,
                       rho_c2, full, m_sub, strike, ex_idx, thresholds):
    n = lnL0.shape[0]
    n_int = n - 1
    n_ex = ex_idx.shape[0]
    out = np.zeros(npaths)
    lnL = np.empty(n)
    xi = np.empty(n)
    for p in range(npaths):
        for d in range(n):
            lnL[d] = lnL0[d]
        e = 0
        for m in range(n_int + 1):
            if e < n_ex and ex_idx[e] == m + 1:
                iv = _swap_intrinsic_nb(lnL, strike, m + 1, alpha)
                if iv > 0.0 and iv >= thresholds[e]:
                    out[p] = iv
                    break
                e += 1
            if m < n_int:
                _step_path_nb(lnL, key, p0 + p, m, n_int, m_sub, full,
                              alpha, c, chol, mu_frozen, rho_c2, xi)
    return out


@njit(cache=True)
def _inner_continuation_nb(key, inner0, n_inner, lnL_state, e_from, alpha, c,
                           chol, mu_frozen, rho_c2, full, m_sub, strike,
                           ex_idx, thresholds):
    # mean stopped payoff over n_inner paths started at exercise date e_from,
    # following the threshold policy at dates e_from+1 ..
    n = lnL_state.shape[0]
    n_int = n - 1
    n_ex = ex_idx.shape[0]
    lnL = np.empty(n)
    xi = np.empty(n)
    total = 0.0
    for q in range(n_inner):
        pg = _U(inner0) + _U(q)
        for d in range(n):
            lnL[d] = lnL_state[d]
        value = 0.0
        e = e_from + 1
        for m in range(ex_idx[e_from] - 1, n_int + 1):
            if e < n_ex and ex_idx[e] == m + 1:
                iv = _swap_intrinsic_nb(lnL, strike, m + 1, alpha)
                if iv > 0.0 and iv >= thresholds[e]:
                    value = iv
                    break
                e += 1
            if m < n_int:
                _step_path_nb(lnL, key, pg, m, n_int, m_sub, full,
                              alpha, c, chol, mu_frozen, rho_c2, xi)
        total += value
    return total / n_inner


@njit(cache=True)
def _ab_gap_nb(key_out, key_in, o0, n_outer, n_inner, lnL0, alpha, c, chol,
               mu_frozen, rho_c2, full, m_sub, strike, ex_idx, thresholds):
    n = lnL0.shape[0]
    n_int = n - 1
    n_ex = ex_idx.shape[0]
    gaps = np.empty(n_outer)
    lnL = np.empty(n)
    xi = np.empty(n)
    states = np.empty((n_ex, n))
    intr = np.empty(n_ex)
    lvals = np.empty(n_ex)
    cvals = np.empty(n_ex)
    for o in range(n_outer):
        for d in range(n):
            lnL[d] = lnL0[d]
        e = 0
        for m in range(n_int + 1):
            if e < n_ex and ex_idx[e] == m + 1:
                for d in range(n):
                    states[e, d] = lnL[d]
                intr[e] = _swap_intrinsic_nb(lnL, strike, m + 1, alpha)
                e += 1
            if m < n_int:
                _step_path_nb(lnL, key_out, o0 + o, m, n_int, m_sub, full,
                              alpha, c, chol, mu_frozen, rho_c2, xi)
        for e in range(n_ex):
            if e < n_ex - 1:
                inner_glob = (_U(o0 + o) * _U(n_ex) + _U(e)) * _U(n_inner)
                cvals[e] = _inner_continuation_nb(
                    key_in, inner_glob, n_inner, states[e], e, alpha, c, chol,
                    mu_frozen, rho_c2, full, m_sub, strike, ex_idx, thresholds)
            else:
                cvals[e] = 0.0
            if intr[e] > 0.0 and intr[e] >= thresholds[e]:
                lvals[e] = intr[e]
            else:
                lvals[e] = cvals[e]
        mart = lvals[0]
        gap = intr[0] - mart
        for e in range(1, n_ex):
            mart = mart + lvals[e] - cvals[e - 1]
            if intr[e] - mart > gap:
                gap = intr[e] - mart
        gaps[o] = gap
    return gaps


# ---------------------------------------------------------------------------
# numpy fallbacks for the path kernels (vectorized across the batch)
# ---------------------------------------------------------------------------

def _noise_block_np(key, p_glob, m, n_int, m_sub, s, n, full):
    if full:
        base = ((p_glob.astype(np.uint64) * _U(n_int) + _U(m)) * _U(m_sub) + _U(s)) * _U(n)
    else:
        base = (p_glob.astype(np.uint64) * _U(n_int) + _U(m)) * _U(n)
    ctr = base[:, None] + np.arange(n, dtype=np.uint64)[None, :]
    return normals_at(key, ctr)


def _step_batch_np(lnL, key, p_glob, m, n_int, m_sub, full,
                   alpha, c, chol, mu_frozen, rho_c2, ru_mask):
    if full:
        dt = alpha / m_sub
        sq = math.sqrt(dt)
        for s in range(m_sub):
            xi = _noise_block_np(key, p_glob, m, n_int, m_sub, s, lnL.shape[1], True)
            L = np.exp(lnL)
            g = alpha * L / (1.0 + alpha * L)
            drift = -(g @ ru_mask.T)
            lnL += (drift - 0.5 * c * c) * dt + sq * (xi @ chol.T)
    else:
        xi = _noise_block_np(key, p_glob, m, n_int, m_sub, 0, lnL.shape[1], False)
        lnL += (mu_frozen - 0.5 * c * c) * alpha + math.sqrt(alpha) * (xi @ chol.T)


def _ratchet_paths_np(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen, rho_c2,
                      full, m_sub, k1, ra, rb, rc):
    n = lnL0.shape[0]
    n_int = n - 1
    ru = np.triu(rho_c2, 1)
    p_glob = np.arange(p0, p0 + npaths, dtype=np.uint64)
    lnL = np.tile(lnL0, (npaths, 1))
    strike = np.full(npaths, k1)
    for m in range(n_int):
        lm = np.exp(lnL[:, m])
        strike = np.maximum(ra * lm + rb * strike + rc, 0.0)
        _step_batch_np(lnL, key, p_glob, m, n_int, m_sub, full,
                       alpha, c, chol, mu_frozen, rho_c2, ru)
    return np.maximum(strike - np.exp(lnL[:, n - 1]), 0.0)


def _bermudan_intrinsics_np(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen,
                            rho_c2, full, m_sub, strike, ex_idx):
    n = lnL0.shape[0]
    n_int = n - 1
    ru = np.triu(rho_c2, 1)
    p_glob = np.arange(p0, p0 + npaths, dtype=np.uint64)
    lnL = np.tile(lnL0, (npaths, 1))
    out = np.empty((npaths, len(ex_idx)))
    e = 0
    for m in range(n_int + 1):
        if e < len(ex_idx) and ex_idx[e] == m + 1:
            out[:, e] = swap_intrinsic_batch(lnL, strike, m + 1, alpha)
            e += 1
        if m < n_int:
            _step_batch_np(lnL, key, p_glob, m, n_int, m_sub, full,
                           alpha, c, chol, mu_frozen, rho_c2, ru)
    return out


def _bermudan_lower_np(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen,
                       rho_c2, full, m_sub, strike, ex_idx, thresholds):
    intr = _bermudan_intrinsics_np(key, p0, npaths, lnL0, alpha, c, chol,
                                   mu_frozen, rho_c2, full, m_sub, strike, ex_idx)
    return stopped_values(intr, thresholds)


def stopped_values(intrinsics, thresholds):
    """Per-path payoff of the threshold policy given intrinsics at all dates."""
    npaths, n_ex = intrinsics.shape
    out = np.zeros(npaths)
    taken = np.zeros(npaths, dtype=bool)
    for e in range(n_ex):
        iv = intrinsics[:, e]
        hit = (~taken) & (iv > 0.0) & (iv >= thresholds[e])
        out[hit] = iv[hit]
        taken |= hit
    return out


def _bermudan_states_np(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen,
                        rho_c2, full, m_sub, ex_idx):
    n = lnL0.shape[0]
    n_int = n - 1
    ru = np.triu(rho_c2, 1)
    p_glob = np.arange(p0, p0 + npaths, dtype=np.uint64)
    lnL = np.tile(lnL0, (npaths, 1))
    states = np.empty((npaths, len(ex_idx), n))
    e = 0
    for m in range(n_int + 1):
        if e < len(ex_idx) and ex_idx[e] == m + 1:
            states[:, e, :] = lnL
            e += 1
        if m < n_int:
            _step_batch_np(lnL, key, p_glob, m, n_int, m_sub, full,
                           alpha, c, chol, mu_frozen, rho_c2, ru)
    return states


def _ab_gap_np(key_out, key_in, o0, n_outer, n_inner, lnL0, alpha, c, chol,
               mu_frozen, rho_c2, full, m_sub, strike, ex_idx, thresholds):
    n = lnL0.shape[0]
    n_int = n - 1
    n_ex = len(ex_idx)
    ru = np.triu(rho_c2, 1)
    states = _bermudan_states_np(key_out, o0, n_outer, lnL0, alpha, c, chol,
                                 mu_frozen, rho_c2, full, m_sub, ex_idx)
    intr = np.empty((n_outer, n_ex))
    for e in range(n_ex):
        intr[:, e] = swap_intrinsic_batch(states[:, e, :], strike, ex_idx[e], alpha)

    cvals = np.zeros((n_outer, n_ex))
    for e in range(n_ex - 1):
        lnL = np.repeat(states[:, e, :], n_inner, axis=0)
        inner_glob = ((np.arange(o0, o0 + n_outer, dtype=np.uint64) * _U(n_ex)
                       + _U(e)) * _U(n_inner))
        p_glob = np.repeat(inner_glob, n_inner) + np.tile(
            np.arange(n_inner, dtype=np.uint64), n_outer)
        value = np.zeros(n_outer * n_inner)
        taken = np.zeros(n_outer * n_inner, dtype=bool)
        f = e + 1
        for m in range(ex_idx[e] - 1, n_int + 1):
            if f < n_ex and ex_idx[f] == m + 1:
                iv = swap_intrinsic_batch(lnL, strike, m + 1, alpha)
                hit = (~taken) & (iv > 0.0) & (iv >= thresholds[f])
                value[hit] = iv[hit]
                taken |= hit
                f += 1
            if m < n_int:
                _step_batch_np(lnL, key_in, p_glob, m, n_int, m_sub, full,
                               alpha, c, chol, mu_frozen, rho_c2, ru)
        cvals[:, e] = value.reshape(n_outer, n_inner).mean(axis=1)

    exercise = (intr > 0.0) & (intr >= thresholds)
    lvals = np.where(exercise, intr, cvals)
    mart = np.empty((n_outer, n_ex))
    mart[:, 0] = lvals[:, 0]
    for e in range(1, n_ex):
        mart[:, e] = mart[:, e - 1] + lvals[:, e] - cvals[:, e - 1]
    return (intr - mart).max(axis=1)


def _ratchet_paths_nb_wrap(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen,
                           rho_c2, full, m_sub, k1, ra, rb, rc):
    return _ratchet_paths_nb(_U(key), p0, npaths, lnL0, alpha, c, chol,
                             mu_frozen, rho_c2, full, m_sub, k1, ra, rb, rc)


def _bermudan_intrinsics_nb_wrap(key, p0, npaths, lnL0, alpha, c, chol,
                                 mu_frozen, rho_c2, full, m_sub, strike, ex_idx):
    return _bermudan_intrinsics_nb(_U(key), p0, npaths, lnL0, alpha, c, chol,
                                   mu_frozen, rho_c2, full, m_sub, strike, ex_idx)


def _bermudan_lower_nb_wrap(key, p0, npaths, lnL0, alpha, c, chol, mu_frozen,
                            rho_c2, full, m_sub, strike, ex_idx, thresholds):
    return _bermudan_lower_nb(_U(key), p0, npaths, lnL0, alpha, c, chol,
                              mu_frozen, rho_c2, full, m_sub, strike, ex_idx,
                              thresholds)


def _ab_gap_nb_wrap(key_out, key_in, o0, n_outer, n_inner, lnL0, alpha, c,
                    chol, mu_frozen, rho_c2, full, m_sub, strike, ex_idx,
                    thresholds):
    return _ab_gap_nb(_U(key_out), _U(key_in), o0, n_outer, n_inner, lnL0,
                      alpha, c, chol, mu_frozen, rho_c2, full, m_sub, strike,
                      ex_idx, thresholds)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------

_IMPLS = {
    "numpy": {
        "tridiag_factor": _tridiag_factor_np,
        "tridiag_solve": _tridiag_solve_np,
        "banded_matvec": _banded_matvec_np,
        "spline_eval": _spline_eval_np,
        "swap_intrinsic_grid": _swap_intrinsic_grid_np,
        "rate_and_conv_grid": _rate_and_conv_grid_np,
        "ratchet_paths": _ratchet_paths_np,
        "bermudan_intrinsics": _bermudan_intrinsics_np,
        "bermudan_lower": _bermudan_lower_np,
        "ab_gap": _ab_gap_np,
    },
    "numba": {
        "tridiag_factor": _tridiag_factor_nb,
        "tridiag_solve": _tridiag_solve_nb,
        "banded_matvec": _banded_matvec_nb,
        "spline_eval": _spline_eval_nb,
        "swap_intrinsic_grid": _swap_intrinsic_grid_nb,
        "rate_and_conv_grid": _rate_and_conv_grid_nb,
        "ratchet_paths": _ratchet_paths_nb_wrap,
        "bermudan_intrinsics": _bermudan_intrinsics_nb_wrap,
        "bermudan_lower": _bermudan_lower_nb_wrap,
        "ab_gap": _ab_gap_nb_wrap,
    },
}

_backend = "numpy"


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    """Select the 'numba' or 'numpy' kernel implementations."""
    global _backend
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is not installed")
    for fname, impl in _IMPLS[name].items():
        globals()[fname] = impl
    _backend = name


set_backend("numpy" if os.environ.get("LMMPDE_NO_NUMBA", "").lower()
            in ("1", "true", "yes") or not HAVE_NUMBA else "numba")
