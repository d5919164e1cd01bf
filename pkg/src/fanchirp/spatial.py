"""Direction-of-arrival estimation and beamforming front ends.

DOA comes from cross-correlating oversampled channel pairs; the delay vector
is inverted through the array geometry (referenced to the first element) for
a unit direction vector.  Eight-channel data goes through a frequency-domain
MVDR beamformer with snapshot covariance estimates; two-channel data uses a
delay-and-sum beamformer with fractional-delay alignment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .audio_io import MultichannelSignal
from .errors import ConfigError
from .transform import FrameConfig, TFFrame, TFSeries, analyze, synthesize

SPEED_OF_SOUND = 340.0  # m/s


@dataclass
class ArrayGeometry:
    """Cartesian element coordinates [n_channels, 3] in meters."""

    positions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions, dtype=np.float64))
        if self.positions.shape[1] != 3:
            raise ConfigError("geometry rows must be x y z triples")
        if self.positions.shape[0] < 2:
            raise ConfigError("need at least two elements")
        d = self.positions[:, None, :] - self.positions[None, :, :]
        if np.any((np.linalg.norm(d, axis=2) + np.eye(self.positions.shape[0])) == 0):
            raise ConfigError("element positions must be distinct")

    @property
    def n_channels(self) -> int:
        return self.positions.shape[0]

    @property
    def relative(self) -> np.ndarray:
        """Positions referenced to the first element (the delay reference)."""
        return self.positions - self.positions[0]

    def max_delay(self) -> float:
        """Largest inter-element travel time in seconds."""
        d = self.positions[:, None, :] - self.positions[None, :, :]
        return float(np.linalg.norm(d, axis=2).max() / self.speed_of_sound)

    @classmethod
    def circular(cls, n_channels: int = 8, radius: float = 0.1) -> "ArrayGeometry":
        """Uniform circular array in the xy-plane, element i at angle i*2pi/n."""
        i = np.arange(n_channels)
        ang = 2.0 * np.pi * i / n_channels
        p = np.stack([radius * np.cos(ang), radius * np.sin(ang), np.zeros(n_channels)], axis=1)
        return cls(p)

    @classmethod
    def from_file(cls, path) -> "ArrayGeometry":
        rows = []
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                vals = line.split()
                if len(vals) != 3:
                    raise ConfigError(f"geometry line {line!r} is not 'x y z'")
                rows.append([float(v) for v in vals])
        return cls(np.array(rows))


@dataclass
class DoaEstimate:
    direction: np.ndarray      # unit 3-vector
    delays: np.ndarray         # seconds, first channel is the 0 reference
    ambiguous: bool = False

    def __post_init__(self):
        if abs(self.delays[0]) > 1e-15:
            raise ValueError("reference-channel delay must be 0")


@dataclass
class MvdrConfig:
    frame_len: int = 512
    overlap: float = 0.25
    fft_len: int = 512
    snapshots: int = 24
    loading: float = 1e-3

    @property
    def hop(self) -> int:
        return int(round(self.frame_len * (1.0 - self.overlap)))


def _oversample(x: np.ndarray, factor: int) -> np.ndarray:
    if factor <= 1:
        return np.asarray(x, dtype=np.float64)
    coeffs = _accel.spline_coeffs(np.asarray(x, dtype=np.float64))
    pos = np.arange(x.shape[0] * factor, dtype=np.float64) / factor
    return _accel.spline_eval(np.asarray(x, dtype=np.float64), coeffs, pos)


def estimate_delays(signal: MultichannelSignal, oversample: int = 8,
                    max_delay: float | None = None):
    """Inter-channel delays by cross-correlation peaks on oversampled data.

    Returns (delays [s], confidence) with the first channel as reference;
    d[i] > 0 means channel i receives the signal d[i] seconds later than
    channel 0.  The peak search can be restricted to |lag| <= max_delay
    seconds; confidence is the normalized (signed) correlation peak, 0 for
    dead channels.
    """
    if signal.n_channels < 2:
        raise ValueError("need at least two channels")
    if oversample < 1:
        raise ValueError("oversample factor must be >= 1")
    fs_up = signal.sample_rate * oversample
    ref = _oversample(signal.channel(0), oversample)
    n = ref.shape[0]
    nfft = 1 << int(np.ceil(np.log2(2 * n - 1)))
    ref_f = np.fft.rfft(ref, nfft)
    ref_e = float(np.sum(ref * ref))

    window = n - 1 if max_delay is None else min(int(round(max_delay * fs_up)), n - 1)
    delays = np.zeros(signal.n_channels)
    conf = np.zeros(signal.n_channels)
    conf[0] = 1.0
    for i in range(1, signal.n_channels):
        ch = _oversample(signal.channel(i), oversample)
        ch_e = float(np.sum(ch * ch))
        if ref_e == 0.0 or ch_e == 0.0:
            continue  # dead channel: zero delay, zero confidence
        # corr[k] = sum_n ref[n] ch[n + k]: peak at k = +delay of channel i
        corr = np.fft.irfft(np.conj(ref_f) * np.fft.rfft(ch, nfft), nfft)
        lags = np.concatenate([np.arange(-window, 0), np.arange(window + 1)])
        vals = corr[lags]
        best = int(np.argmax(vals))
        delays[i] = lags[best] / fs_up
        conf[i] = float(vals[best] / np.sqrt(ref_e * ch_e))
    return delays, conf


def solve_doa(delays: np.ndarray, geometry: ArrayGeometry) -> DoaEstimate:
    """Least-squares direction from delays, then normalized to unit length.

    An element closer to the source along direction a receives the wave
    earlier, so (P - p1) a = -c d with later-arrival-positive delays.
    Rank-deficient geometries (any planar array) leave the out-of-plane
    component undetermined; the minimum-norm solution is returned with the
    ambiguous flag set.  Zero delays on a planar array resolve to the plane
    normal (sign chosen upward).
    """
    delays = np.asarray(delays, dtype=np.float64)
    rel = geometry.relative
    rhs = -geometry.speed_of_sound * delays
    sol, _, rank, _ = np.linalg.lstsq(rel, rhs, rcond=None)
    ambiguous = rank < 3
    norm = np.linalg.norm(sol)
    if norm < 1e-12:
        # direction orthogonal to the array span: smallest right singular vector
        _, s, vt = np.linalg.svd(rel)
        direction = vt[-1]
        if direction[2] < 0 or (direction[2] == 0 and direction[0] < 0):
            direction = -direction
        return DoaEstimate(direction, delays, True)
    return DoaEstimate(sol / norm, delays, ambiguous)


def steering_vector(f: float, direction: np.ndarray, geometry: ArrayGeometry) -> np.ndarray:
    """Plane-wave array response exp(j 2 pi f / c * (P - p1) a).

    Referenced to the first element so that a distortionless beamformer
    reproduces the reference channel.
    """
    phase = 2.0 * np.pi * f / geometry.speed_of_sound * (geometry.relative @ direction)
    return np.exp(1j * phase)


def mvdr_weights(s_yy: np.ndarray, v: np.ndarray, loading: float = 1e-3) -> np.ndarray:
    """Distortionless minimum-variance weights v^H S^-1 / (v^H S^-1 v).

    The covariance is diagonally loaded with loading * tr(S)/n before the
    solve; a singular matrix falls back to delay-and-sum weights.
    """
    n = v.shape[0]
    tr = float(np.real(np.trace(s_yy)))
    s = s_yy + (loading * max(tr, 1e-30) / n) * np.eye(n)
    try:
        w = np.linalg.solve(s, v)
    except np.linalg.LinAlgError:
        warnings.warn("singular spatial covariance; using delay-and-sum weights")
        return v / n
    denom = np.vdot(v, w)
    if not np.isfinite(denom) or abs(denom) < 1e-30:
        warnings.warn("degenerate spatial covariance; using delay-and-sum weights")
        return v / n
    return w / denom


def _stft_stack(signal: MultichannelSignal, cfg: FrameConfig):
    series = [analyze(signal.channel(i), cfg) for i in range(signal.n_channels)]
    spectra = np.stack([s.spectra() for s in series])  # [ch, frames, bins]
    return series, spectra


def mvdr_beamform(signal: MultichannelSignal, doa: DoaEstimate,
                  geometry: ArrayGeometry, config: MvdrConfig | None = None) -> np.ndarray:
    """Frequency-domain MVDR with sliding snapshot covariances.

    Covariance at frame d and frequency f averages the outer products of the
    snapshots centered on d; edge frames use the available subset.  Utterances
    shorter than one covariance window fall back to delay-and-sum.
    """
    config = config or MvdrConfig()
    if geometry.n_channels != signal.n_channels:
        raise ConfigError("geometry channel count does not match the signal")
    fcfg = FrameConfig(config.frame_len, config.hop, config.frame_len,
                       config.fft_len, 1, signal.sample_rate)
    series, spectra = _stft_stack(signal, fcfg)
    n_ch, n_frames, n_bins = spectra.shape
    if n_frames < config.snapshots:
        return dsb_beamform(signal, doa.delays)

    freqs = np.arange(n_bins) * signal.sample_rate / config.fft_len
    v = np.stack([steering_vector(f, doa.direction, geometry) for f in freqs])  # [bins, ch]

    half = config.snapshots // 2
    out = np.empty((n_frames, n_bins), dtype=complex)
    eye = np.eye(n_ch)
    for d in range(n_frames):
        lo = max(d - half, 0)
        hi = min(d + half, n_frames)
        snap = spectra[:, lo:hi, :]  # [ch, n, bins]
        s_yy = np.einsum("cnb,enb->bce", snap, np.conj(snap)) / (hi - lo)
        tr = np.real(np.einsum("bcc->b", s_yy))
        s_yy += (config.loading * np.maximum(tr, 1e-30) / n_ch)[:, None, None] * eye
        w = np.linalg.solve(s_yy, v[:, :, None])[:, :, 0]  # [bins, ch]
        denom = np.einsum("bc,bc->b", np.conj(v), w)
        w = w / denom[:, None]
        out[d] = np.einsum("bc,cb->b", np.conj(w), spectra[:, d, :])

    frames = [TFFrame(out[d], 0.0, d, series[0].frames[d].warp_grid)
              for d in range(n_frames)]
    return synthesize(TFSeries(frames, fcfg, signal.n_samples))


def fractional_delay(x: np.ndarray, delay_samples: float) -> np.ndarray:
    """Shift a signal by a (possibly fractional) number of samples via splines."""
    x = np.asarray(x, dtype=np.float64)
    if delay_samples == 0.0:
        return x.copy()
    coeffs = _accel.spline_coeffs(x)
    pos = np.arange(x.shape[0], dtype=np.float64) + delay_samples
    return _accel.spline_eval(x, coeffs, pos)


def dsb_beamform(signal: MultichannelSignal, delays: np.ndarray) -> np.ndarray:
    """Delay-and-sum: align every channel to the reference and average."""
    delays = np.asarray(delays, dtype=np.float64)
    acc = np.zeros(signal.n_samples)
    for i in range(signal.n_channels):
        acc += fractional_delay(signal.channel(i), delays[i] * signal.sample_rate)
    return acc / signal.n_channels
