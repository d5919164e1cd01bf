"""Hot numeric kernels: natural cubic splines, harmonic gathering, exponential integral.

Each kernel has a numba ``@njit`` implementation and a pure numpy fallback.
The active backend is chosen at import time: numba when it is importable and
the environment variable ``FANCHIRP_NO_NUMBA`` is unset / falsy, numpy
otherwise.  Both backends are always importable as ``numpy_backend`` /
``numba_backend`` (the latter is ``None`` without numba) so they can be
compared directly, e.g. by ``benchmarks/bench_kernels.py``.

All spline kernels assume unit-spaced knots 0..n-1 and natural boundary
conditions.  Evaluation outside the knot range returns 0, except for a
one-sample extrapolation margin where the edge polynomial is used (time
warping can land a hair beyond the last knot).
"""

from __future__ import annotations

import os
import types

import numpy as np
from scipy.linalg import solve_banded

_EULER = 0.5772156649015328606
_EXTRAP = 1.0  # samples of edge-polynomial extrapolation allowed past the knots
_SERIES_ITERS = 60
_CF_ITERS = 100
_FPMIN = 1e-300


def _env_disabled() -> bool:
    return os.environ.get("FANCHIRP_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


# ---------------------------------------------------------------------------
# numpy fallback implementations
# ---------------------------------------------------------------------------

def _np_spline_coeffs(y):
    """Second derivatives of the natural cubic spline through y (unit knots)."""
    n = y.shape[0]
    m = np.zeros(n)
    if n < 3:
        return m
    rhs = 6.0 * (y[2:] - 2.0 * y[1:-1] + y[:-2])
    k = n - 2
    ab = np.zeros((3, k))
    ab[0, 1:] = 1.0
    ab[1, :] = 4.0
    ab[2, :-1] = 1.0
    m[1:-1] = solve_banded((1, 1), ab, rhs)
    return m


def _np_spline_eval(y, m, pos):
    """Evaluate the spline (y, m) at fractional positions, 0 outside support."""
    n = y.shape[0]
    out = np.zeros(pos.shape[0])
    if n < 2:
        return out
    ok = (pos >= -_EXTRAP) & (pos <= (n - 1) + _EXTRAP)
    p = pos[ok]
    i = np.clip(np.floor(p), 0, n - 2).astype(np.int64)
    t = p - i
    u = 1.0 - t
    out[ok] = (
        m[i] * u * u * u / 6.0
        + m[i + 1] * t * t * t / 6.0
        + (y[i] - m[i] / 6.0) * u
        + (y[i + 1] - m[i + 1] / 6.0) * t
    )
    return out


def _np_glogs_gather(comp, idx, counts, halfw):
    """Mean compressed magnitude over harmonic bins for every (f0, alpha) cell.

    comp:   [n_alpha, n_bins] compressed log-magnitude spectra
    idx:    [n_f0, max_h] harmonic center bins (padded)
    counts: [n_f0, n_alpha] number of valid harmonics; 0 marks a dead cell
    halfw:  [n_f0, max_h] half-width of the bin window read per harmonic

    Each harmonic contributes the maximum of comp over idx +- halfw, which
    absorbs the f0-grid quantization of high harmonic positions.
    """
    from scipy.ndimage import maximum_filter1d

    n_f0, n_alpha = counts.shape
    max_h = idx.shape[1]
    n_bins = comp.shape[1]
    vals = np.empty((n_f0, n_alpha, max_h))
    for w in np.unique(halfw):
        filt = comp if w == 0 else maximum_filter1d(comp, size=2 * int(w) + 1,
                                                    axis=1, mode="nearest")
        sel = halfw == w  # [n_f0, max_h]
        f_ix, h_ix = np.nonzero(sel)
        vals[f_ix, :, h_ix] = filt[:, idx[f_ix, h_ix]].T
    h = np.arange(max_h)[None, None, :]
    mask = h < counts[:, :, None]
    rho = np.full((n_f0, n_alpha), -np.inf)
    nz = counts > 0
    rho[nz] = (vals * mask).sum(axis=2)[nz] / counts[nz]
    return rho


def _np_exp_e1(v):
    """E1(v) = int_v^inf exp(-t)/t dt, elementwise for v > 0.

    Power series below 1, modified-Lentz continued fraction above.
    Nonpositive inputs map to +inf.
    """
    v = np.asarray(v, dtype=np.float64)
    out = np.full(v.shape, np.inf)

    small = (v > 0.0) & (v < 1.0)
    if np.any(small):
        x = v[small]
        s = -_EULER - np.log(x)
        term = np.ones_like(x)
        sign = 1.0
        for k in range(1, _SERIES_ITERS + 1):
            term = term * x / k
            s = s + sign * term / k
            sign = -sign
        out[small] = s

    large = v >= 1.0
    if np.any(large):
        x = v[large]
        b = x + 1.0
        c = np.full_like(x, 1.0 / _FPMIN)
        d = 1.0 / b
        h = d.copy()
        for i in range(1, _CF_ITERS + 1):
            a = -float(i * i)
            b = b + 2.0
            d = b + a * d
            np.copyto(d, _FPMIN, where=np.abs(d) < _FPMIN)
            d = 1.0 / d
            c = b + a / c
            np.copyto(c, _FPMIN, where=np.abs(c) < _FPMIN)
            h = h * c * d
        out[large] = h * np.exp(-x)
    return out


numpy_backend = types.SimpleNamespace(
    spline_coeffs=_np_spline_coeffs,
    spline_eval=_np_spline_eval,
    glogs_gather=_np_glogs_gather,
    exp_e1=_np_exp_e1,
)


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

def _build_numba_backend():
    from numba import njit

    @njit(cache=True)
    def spline_coeffs(y):
        n = y.shape[0]
        m = np.zeros(n)
        if n < 3:
            return m
        k = n - 2
        cp = np.empty(k)
        dp = np.empty(k)
        cp[0] = 1.0 / 4.0
        dp[0] = 6.0 * (y[2] - 2.0 * y[1] + y[0]) / 4.0
        for i in range(1, k):
            denom = 4.0 - cp[i - 1]
            cp[i] = 1.0 / denom
            dp[i] = (6.0 * (y[i + 2] - 2.0 * y[i + 1] + y[i]) - dp[i - 1]) / denom
        m[k] = dp[k - 1]
        for i in range(k - 2, -1, -1):
            m[i + 1] = dp[i] - cp[i] * m[i + 2]
        return m

    @njit(cache=True)
    def spline_eval(y, m, pos):
        n = y.shape[0]
        npos = pos.shape[0]
        out = np.zeros(npos)
        if n < 2:
            return out
        lo = -_EXTRAP
        hi = (n - 1) + _EXTRAP
        for j in range(npos):
            p = pos[j]
            if p < lo or p > hi:
                continue
            i = int(np.floor(p))
            if i < 0:
                i = 0
            elif i > n - 2:
                i = n - 2
            t = p - i
            u = 1.0 - t
            out[j] = (
                m[i] * u * u * u / 6.0
                + m[i + 1] * t * t * t / 6.0
                + (y[i] - m[i] / 6.0) * u
                + (y[i + 1] - m[i + 1] / 6.0) * t
            )
        return out

    @njit(cache=True)
    def glogs_gather(comp, idx, counts, halfw):
        n_f0, n_alpha = counts.shape
        n_bins = comp.shape[1]
        rho = np.empty((n_f0, n_alpha))
        for f in range(n_f0):
            for a in range(n_alpha):
                c = counts[f, a]
                if c == 0:
                    rho[f, a] = -np.inf
                    continue
                s = 0.0
                for h in range(c):
                    center = idx[f, h]
                    w = halfw[f, h]
                    lo = center - w
                    if lo < 0:
                        lo = 0
                    hi = center + w + 1
                    if hi > n_bins:
                        hi = n_bins
                    best = comp[a, lo]
                    for b in range(lo + 1, hi):
                        if comp[a, b] > best:
                            best = comp[a, b]
                    s += best
                rho[f, a] = s / c
        return rho

    @njit(cache=True)
    def _e1_scalar(x):
        if x <= 0.0:
            return np.inf
        if x < 1.0:
            s = -_EULER - np.log(x)
            term = 1.0
            sign = 1.0
            for k in range(1, _SERIES_ITERS + 1):
                term = term * x / k
                s = s + sign * term / k
                sign = -sign
                if term / k < 1e-18 * abs(s):
                    break
            return s
        b = x + 1.0
        c = 1.0 / _FPMIN
        d = 1.0 / b
        h = d
        for i in range(1, _CF_ITERS + 1):
            a = -float(i * i)
            b = b + 2.0
            d = b + a * d
            if abs(d) < _FPMIN:
                d = _FPMIN
            d = 1.0 / d
            cc = b + a / c
            if abs(cc) < _FPMIN:
                cc = _FPMIN
            c = cc
            delta = c * d
            h = h * delta
            if abs(delta - 1.0) < 1e-16:
                break
        return h * np.exp(-x)

    @njit(cache=True)
    def exp_e1(v):
        flat = v.ravel()
        out = np.empty(flat.shape[0])
        for j in range(flat.shape[0]):
            out[j] = _e1_scalar(flat[j])
        return out.reshape(v.shape)

    return types.SimpleNamespace(
        spline_coeffs=spline_coeffs,
        spline_eval=spline_eval,
        glogs_gather=glogs_gather,
        exp_e1=exp_e1,
    )


numba_backend = None
if not _env_disabled():
    try:
        numba_backend = _build_numba_backend()
    except ImportError:  # pragma: no cover - numba is a declared dependency
        numba_backend = None

USING_NUMBA = numba_backend is not None
_active = numba_backend if USING_NUMBA else numpy_backend

spline_coeffs = _active.spline_coeffs
spline_eval = _active.spline_eval
glogs_gather = _active.glogs_gather


def exp_e1(v):
    """E1 on arrays or scalars via the active backend."""
    arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    out = _active.exp_e1(arr)
    return float(out[0]) if np.isscalar(v) or np.ndim(v) == 0 else out.reshape(np.shape(v))
