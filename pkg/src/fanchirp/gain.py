"""Statistically optimal spectral gains for joint noise and late-reverberation suppression.

Per frame, the enhancer estimates a priori / a posteriori signal-to-
interference ratios (interference = late reverberation + noise), runs a
likelihood-ratio voice activity check that gates the noise tracker, maps the
SIRs through the log-spectral-amplitude gain with a speech-presence-weighted,
time-frequency-dependent gain floor, and scales the noisy magnitudes while
keeping the noisy phase.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _accel
from .reverb import ReverbParams, ReverbState, adapt_drr
from .transform import TFFrame

_DENOM_FLOOR_REL = 1e-12
_GAMMA_LOG_FLOOR = 1e-12


@dataclass
class GainConfig:
    """Constants of the gain chain.

    g_min_late / g_min_noise: gain floors for late reverberation and noise.
    dd_alpha: decision-directed smoothing of the a priori SIR.
    mu_noise: noise-variance smoothing (0.98).
    eta_thresh: VAD threshold (0.15); frames below update the noise.
    xi_min: a priori SIR floor (-25 dB).
    xi_p0: speech-presence knee; p = xi / (xi + xi_p0) after 3-bin smoothing.
    g_cap: cap on the LSA gain, bounding the small-v divergence.
    """

    g_min_late: float = 0.05
    g_min_noise: float = 0.1
    dd_alpha: float = 0.98
    mu_noise: float = 0.98
    eta_thresh: float = 0.15
    xi_min: float = 10.0 ** (-2.5)
    xi_p0: float = 0.3
    spp_smooth_bins: int = 3
    g_cap: float = 10.0
    noise_init_frames: int = 6

    def __post_init__(self):
        for name in ("g_min_late", "g_min_noise"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must be in (0, 1)")
        if not 0.0 < self.dd_alpha < 1.0:
            raise ValueError("dd_alpha must be in (0, 1)")


class GainState:
    """Per-utterance recursive state of the enhancer."""

    def __init__(self, n_bins: int, reverb_params: ReverbParams,
                 config: GainConfig, lambda_v0=None):
        self.config = config
        self.lambda_v = np.full(n_bins, 1e-12) if lambda_v0 is None \
            else np.maximum(np.asarray(lambda_v0, dtype=np.float64), 1e-12)
        self.a_prev = np.zeros(n_bins)
        self.reverb = ReverbState(n_bins, reverb_params)
        self.drr_inverse = reverb_params.drr_inverse

    @classmethod
    def from_leading_frames(cls, powers: np.ndarray, reverb_params: ReverbParams,
                            config: GainConfig) -> "GainState":
        """Initialize the noise variance from leading (assumed speech-free) frames."""
        lam0 = powers.mean(axis=0) if powers.size else None
        return cls(powers.shape[1], reverb_params, config, lam0)


def lsa_gain(xi, gamma, g_cap: float = 10.0):
    """Log-spectral-amplitude gain: xi/(1+xi) * exp(E1(v)/2), v = gamma xi/(1+xi).

    E1 is the exponential integral evaluated by the series / continued-fraction
    kernel; the gain is capped at g_cap since E1 diverges as v -> 0.
    """
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    pref = xi / (1.0 + xi)
    v = np.maximum(pref * gamma, 1e-10)
    g = pref * np.exp(0.5 * _accel.exp_e1(v))
    return np.minimum(g, g_cap)


def om_lsa_gain(g_lsa, p, g_min):
    """Speech-presence weighted gain: G_lsa^p * G_min^(1-p)."""
    g_lsa = np.asarray(g_lsa, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    g_min = np.asarray(g_min, dtype=np.float64)
    return np.power(g_lsa, p) * np.power(g_min, 1.0 - p)


def gmin_tf(lambda_late, lambda_noise, config: GainConfig):
    """Interference-weighted gain floor per bin.

    Blends the late-reverberation and noise floors by their variance shares;
    falls back to the noise floor where both variances vanish.
    """
    lambda_late = np.asarray(lambda_late, dtype=np.float64)
    lambda_noise = np.asarray(lambda_noise, dtype=np.float64)
    den = lambda_late + lambda_noise
    num = config.g_min_late * lambda_late + config.g_min_noise * lambda_noise
    return np.where(den > 0, num / np.maximum(den, 1e-300), config.g_min_noise)


def compute_sirs(power: np.ndarray, state: GainState):
    """A priori / a posteriori SIRs for one frame (advances the reverb state).

    The interference variance is the late-reverberant variance plus the noise
    variance; the a priori SIR is the decision-directed blend of the previous
    enhanced amplitudes and the instantaneous SIR excess.
    """
    cfg = state.config
    state.reverb.advance(state.a_prev ** 2, state.drr_inverse)
    lambda_late = state.reverb.late_variance()
    denom = lambda_late + state.lambda_v
    floor = max(_DENOM_FLOOR_REL * float(power.mean()), 1e-300)
    denom = np.maximum(denom, floor)
    gamma = power / denom
    xi = cfg.dd_alpha * (state.a_prev ** 2) / denom \
        + (1.0 - cfg.dd_alpha) * np.maximum(gamma - 1.0, 0.0)
    xi = np.maximum(xi, cfg.xi_min)
    return xi, gamma, lambda_late


def vad_statistic(xi, gamma) -> float:
    """Frame speech score: sum_k ln(gamma) xi/(1+xi) - ln(1+xi)."""
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.maximum(np.asarray(gamma, dtype=np.float64), _GAMMA_LOG_FLOOR)
    return float(np.sum(np.log(gamma) * xi / (1.0 + xi) - np.log1p(xi)))


def update_noise(state: GainState, power: np.ndarray, eta: float) -> None:
    """Exponentially update the noise variance on noise-only frames."""
    cfg = state.config
    if eta < cfg.eta_thresh:
        state.lambda_v = cfg.mu_noise * state.lambda_v + (1.0 - cfg.mu_noise) * power


def _smooth_bins(x: np.ndarray, width: int) -> np.ndarray:
    if width <= 1:
        return x
    kernel = np.ones(width) / width
    return np.convolve(x, kernel, mode="same")


def speech_presence(xi: np.ndarray, config: GainConfig) -> np.ndarray:
    """Monotone speech-presence proxy from the bin-smoothed a priori SIR."""
    xs = _smooth_bins(xi, config.spp_smooth_bins)
    return xs / (xs + config.xi_p0)


def enhance_frame(tf: TFFrame, state: GainState) -> TFFrame:
    """Apply the full gain chain to one frame and advance the state.

    Output magnitudes are gain-scaled, phase is the noisy phase (real,
    positive gains on the complex spectrum keep angles untouched).
    """
    cfg = state.config
    power = np.abs(tf.spectrum) ** 2
    xi, gamma, lambda_late = compute_sirs(power, state)
    eta = vad_statistic(xi, gamma)
    update_noise(state, power, eta)
    p = speech_presence(xi, cfg)
    g_lsa = lsa_gain(xi, gamma, cfg.g_cap)
    g_min = gmin_tf(lambda_late, state.lambda_v, cfg)
    g = om_lsa_gain(g_lsa, p, g_min)
    amp = g * np.abs(tf.spectrum)

    active = float(power.mean()) > 10.0 ** (state.reverb.params.drr_gate_db / 10.0) \
        * float(np.mean(lambda_late + state.lambda_v))
    state.drr_inverse = adapt_drr(state.drr_inverse, float(np.mean(amp ** 2)),
                                  float(np.mean(state.reverb.lambda_xr)),
                                  state.reverb.params.mu_drr, active)
    state.a_prev = amp
    return TFFrame(g * tf.spectrum, tf.alpha, tf.frame_index, tf.warp_grid)
