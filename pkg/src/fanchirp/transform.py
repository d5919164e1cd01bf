"""Framing, forward/inverse STFT and fan-chirp transforms, overlap-add resynthesis.

The fan-chirp analysis of a frame is a time warp followed by an FFT: the frame
is resampled at the pre-images of a uniform grid under phi_a(t) = t + a t^2 / 2,
so a harmonic whose frequencies sweep linearly at normalized rate ``alpha``
becomes stationary before the Fourier transform.  ``alpha`` is the normalized
chirp rate in 1/seconds: a component at frequency f at frame center sweeps
f * alpha * T Hz over a frame of T seconds.

Conventions used throughout:

* The time origin of every frame is its center; the warped grid covers the
  image of the frame support under phi_a, so no content is truncated and the
  warped signal keeps unit sample spacing (FFT bin k is k * fs / fft_len Hz).
* The analysis window is applied after warping.
* Resynthesis is weighted overlap-add: frame estimates are weighted by the
  squared synthesis window and the accumulated weight is divided out, which
  makes the alpha = 0 round trip exact.
* Cubic splines (natural boundaries) do all interpolation, evaluated directly
  on the fractional warp grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _accel
from .errors import ConfigError, InvalidChirpError

_DEFAULT_HOP_S = 0.008
# Ratio of the paper-default 3262-point FFT to its 2048-sample frame; reused
# to scale the FFT length for other frame durations / sample rates.
_FFT_RATIO = 3262.0 / 2048.0


def hamming(n: int) -> np.ndarray:
    """Periodic Hamming window; strictly positive so it can be divided out."""
    return 0.54 - 0.46 * np.cos(2.0 * np.pi * np.arange(n) / n)


@dataclass(frozen=True)
class FrameConfig:
    """Analysis-synthesis frame geometry.

    frame_len:   pre-warp frame length T in samples
    hop:         frame hop R in samples
    warped_len:  post-warp length T_w in samples
    fft_len:     FFT size (>= warped_len); kept at 3262 for 2048-sample frames
    oversample:  interpolation design resolution U (used by the spatial ops)
    sample_rate: Hz; chirp rates are normalized per second
    """

    frame_len: int
    hop: int
    warped_len: int
    fft_len: int
    oversample: int = 8
    sample_rate: int = 16000
    window_kind: str = "hamming"

    def __post_init__(self):
        if self.hop > self.frame_len:
            raise ConfigError("hop must not exceed frame_len")
        if self.fft_len < self.warped_len:
            raise ConfigError("fft_len must be >= warped_len")
        if self.oversample < 1:
            raise ConfigError("oversample factor must be >= 1")
        if self.sample_rate <= 0:
            raise ConfigError("sample_rate must be positive")
        if self.window_kind != "hamming":
            raise ConfigError("only the Hamming window is supported (strictly positive)")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1

    @property
    def window(self) -> np.ndarray:
        return hamming(self.warped_len)

    # --- presets matching the reference processing chains -----------------
    @classmethod
    def stft_short(cls, sample_rate: int = 16000) -> "FrameConfig":
        t = int(round(0.032 * sample_rate))
        return cls(t, _hop(sample_rate), t, t, 8, sample_rate)

    @classmethod
    def stft_long(cls, sample_rate: int = 16000) -> "FrameConfig":
        t = int(round(0.128 * sample_rate))
        return cls(t, _hop(sample_rate), t, _fft_len(t), 8, sample_rate)

    @classmethod
    def stfcht(cls, sample_rate: int = 16000) -> "FrameConfig":
        return cls.stft_long(sample_rate)

    @classmethod
    def stfcht_iter(cls, sample_rate: int = 16000) -> "FrameConfig":
        t = int(round(0.096 * sample_rate))
        return cls(t, _hop(sample_rate), t, _fft_len(t), 8, sample_rate)


def _hop(sample_rate: int) -> int:
    return int(round(_DEFAULT_HOP_S * sample_rate))


def _fft_len(frame_len: int) -> int:
    return int(round(_FFT_RATIO * frame_len))


@dataclass
class TFFrame:
    """One frame's one-sided complex spectrum plus its warp metadata."""

    spectrum: np.ndarray  # complex, [fft_len // 2 + 1]
    alpha: float          # normalized chirp rate, 1/s (0 for plain STFT)
    frame_index: int
    warp_grid: np.ndarray  # pre-warp sample positions read by the forward warp


@dataclass
class TFSeries:
    frames: list
    config: FrameConfig
    original_len: int

    def spectra(self) -> np.ndarray:
        return np.stack([f.spectrum for f in self.frames])

    def alphas(self) -> np.ndarray:
        return np.array([f.alpha for f in self.frames])


# ---------------------------------------------------------------------------
# warp geometry
# ---------------------------------------------------------------------------

def chirp_warp(t, alpha):
    """phi_a(t) = t + a t^2 / 2 (seconds)."""
    return t + 0.5 * alpha * np.square(t)


def chirp_unwarp(tau, alpha):
    """Inverse of phi_a: (-1 + sqrt(1 + 2 a tau)) / a, identity at a = 0."""
    if alpha == 0.0:
        return np.asarray(tau, dtype=np.float64)
    disc = np.maximum(1.0 + 2.0 * alpha * np.asarray(tau, dtype=np.float64), 0.0)
    return (np.sqrt(disc) - 1.0) / alpha


def _check_monotone(alpha: float, cfg: FrameConfig) -> None:
    # phi'(t) = 1 + a t must stay positive over t in [-T/2, T/2]
    half = 0.5 * cfg.frame_len / cfg.sample_rate
    if 1.0 - abs(alpha) * half <= 0.0:
        raise InvalidChirpError(
            f"chirp rate {alpha} makes the warp non-monotone over a "
            f"{cfg.frame_len}-sample frame at {cfg.sample_rate} Hz")


_GRID_CACHE: dict = {}


def _grids(alpha: float, cfg: FrameConfig):
    """Forward/inverse warp grids in sample units (cached per config/alpha).

    Forward grid: pre-warp positions p_j such that warped[j] = frame(p_j).
    Inverse grid: warped-array positions q_n such that frame[n] = warped(q_n).
    Both are exact integers when alpha = 0.
    """
    key = (float(alpha), cfg.frame_len, cfg.warped_len, cfg.sample_rate)
    hit = _GRID_CACHE.get(key)
    if hit is not None:
        return hit
    t_len, w_len, fs = cfg.frame_len, cfg.warped_len, cfg.sample_rate
    half = t_len / 2
    extra = (w_len - t_len) / 2  # extra warped samples are split across both ends
    if alpha == 0.0:
        fwd = np.arange(w_len, dtype=np.float64) - extra
        inv = np.arange(t_len, dtype=np.float64) + extra
    else:
        a = alpha / fs  # per-sample chirp rate
        tau0 = (-half + 0.5 * a * half * half) - extra  # phi(-T/2) minus margin
        tau = tau0 + np.arange(w_len, dtype=np.float64)
        disc = np.maximum(1.0 + 2.0 * a * tau, 0.0)
        fwd = (np.sqrt(disc) - 1.0) / a + half
        m = np.arange(t_len, dtype=np.float64) - half
        inv = (m + 0.5 * a * m * m) - tau0
    _GRID_CACHE[key] = (fwd, inv)
    return fwd, inv


# ---------------------------------------------------------------------------
# per-frame transforms
# ---------------------------------------------------------------------------

def warp_time_axis(frame: np.ndarray, alpha: float, cfg: FrameConfig):
    """Resample a frame onto the uniform warped-time grid.

    Returns (warped [warped_len], warp_grid) where warp_grid holds the
    pre-warp sample positions that were read.  alpha = 0 reproduces the frame
    exactly (integer positions evaluate the spline at its knots).
    """
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape[0] != cfg.frame_len:
        raise ValueError(f"frame length {frame.shape[0]} != config frame_len {cfg.frame_len}")
    _check_monotone(alpha, cfg)
    fwd, _ = _grids(alpha, cfg)
    if alpha == 0.0 and cfg.warped_len == cfg.frame_len:
        return frame.copy(), fwd
    coeffs = _accel.spline_coeffs(frame)
    return _accel.spline_eval(frame, coeffs, fwd), fwd


def forward_frame(frame: np.ndarray, alpha: float, cfg: FrameConfig, frame_index: int = 0) -> TFFrame:
    """Warp, window (after warping), FFT; returns the one-sided spectrum."""
    warped, grid = warp_time_axis(frame, alpha, cfg)
    spec = np.fft.rfft(warped * cfg.window, n=cfg.fft_len)
    return TFFrame(spec, float(alpha), frame_index, grid)


def inverse_frame(tf: TFFrame, cfg: FrameConfig) -> np.ndarray:
    """Invert forward_frame: inverse FFT, divide out the window, unwarp."""
    warped = np.fft.irfft(tf.spectrum, n=cfg.fft_len)[: cfg.warped_len] / cfg.window
    _, inv = _grids(tf.alpha, cfg)
    if tf.alpha == 0.0 and cfg.warped_len == cfg.frame_len:
        return warped
    coeffs = _accel.spline_coeffs(warped)
    return _accel.spline_eval(warped, coeffs, inv)


# ---------------------------------------------------------------------------
# utterance-level framing and resynthesis
# ---------------------------------------------------------------------------

def n_frames(n_samples: int, cfg: FrameConfig) -> int:
    """Frame count under symmetric zero-padding of frame_len - hop per side."""
    if n_samples < 1:
        raise ValueError("empty signal")
    return math.ceil((n_samples + cfg.frame_len - cfg.hop) / cfg.hop)


def frame_signal(x: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Padded frame matrix [n_frames, frame_len]; every sample is covered."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a single-channel signal")
    m = n_frames(x.shape[0], cfg)
    pad_front = cfg.frame_len - cfg.hop
    total = (m - 1) * cfg.hop + cfg.frame_len
    padded = np.zeros(total)
    padded[pad_front:pad_front + x.shape[0]] = x
    stride = padded.strides[0]
    frames = np.lib.stride_tricks.as_strided(
        padded, shape=(m, cfg.frame_len), strides=(cfg.hop * stride, stride))
    return frames.copy()


def frame_centers(n_samples: int, cfg: FrameConfig) -> np.ndarray:
    """Frame-center positions in original-signal sample coordinates."""
    m = n_frames(n_samples, cfg)
    return np.arange(m) * cfg.hop + cfg.hop - cfg.frame_len / 2


def analyze(x: np.ndarray, cfg: FrameConfig, alphas=None) -> TFSeries:
    """Transform a single-channel signal; frame d uses chirp rate alphas[d].

    alphas may be None (all zero, plain STFT) or a per-frame sequence.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] == 0:
        raise ValueError("analyze expects a nonempty single-channel signal")
    frames = frame_signal(x, cfg)
    m = frames.shape[0]
    if alphas is None:
        alphas = np.zeros(m)
    else:
        alphas = np.asarray(alphas, dtype=np.float64)
        if alphas.shape[0] != m:
            raise ValueError(f"got {alphas.shape[0]} chirp rates for {m} frames")
    out = [forward_frame(frames[d], alphas[d], cfg, frame_index=d) for d in range(m)]
    return TFSeries(out, cfg, x.shape[0])


def synthesize(tfs: TFSeries) -> np.ndarray:
    """Weighted overlap-add of inverse frames back to a signal of original length."""
    cfg = tfs.config
    m = len(tfs.frames)
    if m == 0:
        raise ValueError("empty TFSeries")
    for d, f in enumerate(tfs.frames):
        if f.spectrum.shape[0] != cfg.n_bins:
            raise ValueError("frame spectrum size inconsistent with config")
        if f.frame_index != d:
            raise ValueError("frame indices must be consecutive from 0")
    w_syn = hamming(cfg.frame_len)
    w2 = w_syn * w_syn
    total = (m - 1) * cfg.hop + cfg.frame_len
    num = np.zeros(total)
    den = np.zeros(total)
    for d, f in enumerate(tfs.frames):
        est = inverse_frame(f, cfg)
        k = d * cfg.hop
        num[k:k + cfg.frame_len] += w2 * est
        den[k:k + cfg.frame_len] += w2
    out = num / np.maximum(den, 1e-300)
    pad_front = cfg.frame_len - cfg.hop
    return out[pad_front:pad_front + tfs.original_len]
