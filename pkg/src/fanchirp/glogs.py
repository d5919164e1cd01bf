"""Per-frame chirp-rate and fundamental-frequency estimation by gathered-log-spectrum search.

For every candidate (f0, alpha) pair the frame is fan-chirp transformed at
alpha and the compressed magnitudes ln(1 + gamma |X|) at the harmonic bins
k * f0 are averaged over the N_h harmonics that fit below Nyquist throughout
the frame.  Octave errors are damped by subtracting half the score of the
double and half fundamental, rows are z-scored per f0 so scores are
comparable across fundamentals, and the maximizing cell gives the frame's
analysis chirp rate.

The grid search is the hot loop of the whole toolkit; the gather runs through
the kernels in ``_accel``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .errors import ConfigError
from .transform import FrameConfig, frame_signal

_STD_FLOOR = 1e-12


def _default_alphas() -> np.ndarray:
    return np.linspace(-4.0, 4.0, 21)


def _default_f0() -> np.ndarray:
    return np.geomspace(70.0, 400.0, 64)


@dataclass
class GlogsConfig:
    """Candidate grids and scoring constants for the chirp-rate search."""

    chirp_candidates: np.ndarray = field(default_factory=_default_alphas)
    f0_candidates: np.ndarray = field(default_factory=_default_f0)
    gamma: float = 10.0
    suppress_multiples: bool = True
    unvoiced_threshold: float = 0.5

    def __post_init__(self):
        self.chirp_candidates = np.sort(np.asarray(self.chirp_candidates, dtype=np.float64))
        self.f0_candidates = np.sort(np.asarray(self.f0_candidates, dtype=np.float64))
        a = self.chirp_candidates
        if a.size == 0 or not np.any(a == 0.0):
            raise ConfigError("chirp candidate set must contain 0")
        if not np.allclose(np.sort(-a), a):
            raise ConfigError("chirp candidate set must be symmetric about 0")
        if self.f0_candidates.size == 0 or np.any(self.f0_candidates <= 0):
            raise ConfigError("f0 candidates must be positive")
        if self.gamma <= 0:
            raise ConfigError("gamma must be positive")


@dataclass
class GlogsSurface:
    """Normalized score matrix [n_f0, n_alpha] for one frame."""

    values: np.ndarray
    frame_index: int = 0


@dataclass
class ChirpEstimate:
    alpha: float
    f0: float
    score: float
    voiced: bool


@dataclass
class ChirpTrack:
    """Per-frame GLogS results for a whole utterance."""

    alphas: np.ndarray
    f0s: np.ndarray
    scores: np.ndarray
    voiced: np.ndarray

    def effective_alphas(self, threshold: float = 0.5) -> np.ndarray:
        """Chirp rates with low-score frames forced to 0 (unvoiced fallback)."""
        keep = self.voiced & (self.scores >= threshold)
        return np.where(keep, self.alphas, 0.0)


def harmonic_count(f0: float, alpha: float, cfg: FrameConfig) -> int:
    """Number of harmonics of f0 that stay below Nyquist for the whole warp."""
    tw = cfg.warped_len / cfg.sample_rate
    return int(cfg.sample_rate / (2.0 * f0 * (1.0 + 0.5 * abs(alpha) * tw)))


class _SearchPlan:
    """Precomputed gather indices, windows and warp grids for one config pair."""

    def __init__(self, gcfg: GlogsConfig, fcfg: FrameConfig):
        self.gcfg = gcfg
        self.fcfg = fcfg
        f0s = gcfg.f0_candidates
        self.n_f0 = f0s.size
        # suppression scores are gathered directly at 2*f0 and f0/2, so the
        # extended fundamental list is [grid, doubles, halves]
        if gcfg.suppress_multiples:
            f0_ext = np.concatenate([f0s, 2.0 * f0s, 0.5 * f0s])
        else:
            f0_ext = f0s
        alphas = gcfg.chirp_candidates
        n_ext, n_a = f0_ext.size, alphas.size
        counts = np.zeros((n_ext, n_a), dtype=np.int32)
        for i, f0 in enumerate(f0_ext):
            for j, al in enumerate(alphas):
                counts[i, j] = max(harmonic_count(f0, al, fcfg), 0)
        max_h = max(int(counts.max()), 1)
        idx = np.zeros((n_ext, max_h), dtype=np.int64)
        halfw = np.zeros((n_ext, max_h), dtype=np.int64)
        top = fcfg.fft_len // 2
        scale = fcfg.fft_len / fcfg.sample_rate
        harm = np.arange(1, max_h + 1)
        # each harmonic is read as the max over a window wide enough to cover
        # half an f0-grid step, so off-grid fundamentals still hit their peaks
        rel_step = (f0s[-1] / f0s[0]) ** (1.0 / max(self.n_f0 - 1, 1)) - 1.0 if self.n_f0 > 1 else 0.0
        for i, f0 in enumerate(f0_ext):
            bins = np.minimum(np.round(harm * f0 * scale).astype(np.int64), top)
            idx[i] = bins
            halfw[i] = np.round(0.5 * rel_step * harm * f0 * scale).astype(np.int64)
        self.counts = counts
        self.idx = idx
        self.halfw = halfw

    def raw_surface(self, frame: np.ndarray) -> np.ndarray:
        """Suppressed (but unnormalized) score matrix for one frame."""
        from .transform import warp_time_axis  # local import to avoid cycle at module load

        fcfg = self.fcfg
        gcfg = self.gcfg
        alphas = gcfg.chirp_candidates
        comp = np.empty((alphas.size, fcfg.n_bins))
        win = fcfg.window
        coeffs = None
        frame = np.asarray(frame, dtype=np.float64)
        for j, al in enumerate(alphas):
            if al == 0.0 and fcfg.warped_len == fcfg.frame_len:
                warped = frame
            else:
                if coeffs is None:
                    coeffs = _accel.spline_coeffs(frame)
                from .transform import _grids
                fwd, _ = _grids(float(al), fcfg)
                warped = _accel.spline_eval(frame, coeffs, fwd)
            spec = np.fft.rfft(warped * win, n=fcfg.fft_len)
            comp[j] = np.log1p(gcfg.gamma * np.abs(spec))
        rho = _accel.glogs_gather(comp, self.idx, self.counts, self.halfw)
        n = self.n_f0
        if gcfg.suppress_multiples:
            return rho[:n] - 0.5 * rho[n:2 * n] - 0.5 * rho[2 * n:]
        return rho[:n]


_PLAN_CACHE: dict = {}


def _plan(gcfg: GlogsConfig, fcfg: FrameConfig) -> _SearchPlan:
    key = (gcfg.chirp_candidates.tobytes(), gcfg.f0_candidates.tobytes(),
           gcfg.gamma, gcfg.suppress_multiples,
           fcfg.frame_len, fcfg.warped_len, fcfg.fft_len, fcfg.sample_rate)
    plan = _PLAN_CACHE.get(key)
    if plan is None:
        plan = _SearchPlan(gcfg, fcfg)
        _PLAN_CACHE[key] = plan
    return plan


def _normalize_rows(stack: np.ndarray, f0s: np.ndarray) -> np.ndarray:
    """Z-score per f0 row with polynomial-smoothed per-utterance statistics.

    Row means and stds (over all frames and chirp rates of the utterance) are
    fitted with a cubic in log f0 and those smooth trends are divided out.
    Smoothing matters: raw per-row statistics let a pitch that persists
    through the utterance inflate its own row's mean and mask itself.
    """
    n_frames, n_f0, n_a = stack.shape
    flat = stack.transpose(1, 0, 2).reshape(n_f0, -1)
    finite = np.isfinite(flat)
    mean = np.zeros(n_f0)
    std = np.ones(n_f0)
    have = np.zeros(n_f0, dtype=bool)
    for i in range(n_f0):
        vals = flat[i][finite[i]]
        if vals.size:
            mean[i] = vals.mean()
            std[i] = vals.std()
            have[i] = True
    if have.sum() >= 8:
        logf = np.log(f0s)
        deg = 3
        cm = np.polynomial.polynomial.polyfit(logf[have], mean[have], deg)
        cs = np.polynomial.polynomial.polyfit(logf[have], std[have], deg)
        mean = np.polynomial.polynomial.polyval(logf, cm)
        std = np.polynomial.polynomial.polyval(logf, cs)
    std = np.maximum(std, _STD_FLOOR)
    return (stack - mean[None, :, None]) / std[None, :, None]


def _argmax_cell(surface: np.ndarray, gcfg: GlogsConfig):
    """Maximizing cell; ties prefer alpha nearest 0, then the lowest f0."""
    best = np.max(surface)
    if not np.isfinite(best):
        return 0, 0, -np.inf, False
    fi, ai = np.where(surface == best)
    order = np.lexsort((gcfg.f0_candidates[fi],
                        gcfg.chirp_candidates[ai],
                        np.abs(gcfg.chirp_candidates[ai])))
    k = order[0]
    return int(fi[k]), int(ai[k]), float(best), True


def glogs_surface(frame: np.ndarray, gcfg: GlogsConfig, fcfg: FrameConfig,
                  frame_index: int = 0) -> GlogsSurface:
    """Normalized score surface for a lone frame (self-normalized).

    When scoring a whole utterance use :func:`glogs_surfaces`, which shares
    the per-row normalization statistics across frames.
    """
    raw = _plan(gcfg, fcfg).raw_surface(frame)
    norm = _normalize_rows(raw[None], gcfg.f0_candidates)[0]
    return GlogsSurface(norm, frame_index)


def glogs_surfaces(x: np.ndarray, gcfg: GlogsConfig, fcfg: FrameConfig) -> list:
    """Normalized score surfaces for every frame of a signal."""
    plan = _plan(gcfg, fcfg)
    frames = frame_signal(x, fcfg)
    raw = np.stack([plan.raw_surface(frames[d]) for d in range(frames.shape[0])])
    norm = _normalize_rows(raw, gcfg.f0_candidates)
    return [GlogsSurface(norm[d], d) for d in range(frames.shape[0])]


def estimate_chirp_rate(frame: np.ndarray, gcfg: GlogsConfig, fcfg: FrameConfig) -> ChirpEstimate:
    """Best (alpha, f0) for one frame plus its normalized score."""
    surf = glogs_surface(frame, gcfg, fcfg)
    fi, ai, score, voiced = _argmax_cell(surf.values, gcfg)
    if not voiced:
        return ChirpEstimate(0.0, float(gcfg.f0_candidates[0]), -np.inf, False)
    return ChirpEstimate(float(gcfg.chirp_candidates[ai]), float(gcfg.f0_candidates[fi]),
                         score, True)


def estimate_chirp_track(x: np.ndarray, gcfg: GlogsConfig, fcfg: FrameConfig) -> ChirpTrack:
    """GLogS over a whole utterance with shared per-row normalization."""
    surfaces = glogs_surfaces(x, gcfg, fcfg)
    m = len(surfaces)
    alphas = np.zeros(m)
    f0s = np.zeros(m)
    scores = np.zeros(m)
    voiced = np.zeros(m, dtype=bool)
    for d, s in enumerate(surfaces):
        fi, ai, score, ok = _argmax_cell(s.values, gcfg)
        if ok:
            alphas[d] = gcfg.chirp_candidates[ai]
            f0s[d] = gcfg.f0_candidates[fi]
        else:
            f0s[d] = gcfg.f0_candidates[0]
            score = -np.inf
        scores[d] = score
        voiced[d] = ok
    return ChirpTrack(alphas, f0s, scores, voiced)
