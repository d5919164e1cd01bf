"""Statistical room-reverberation model.

A room impulse response is modeled as white Gaussian noise under an
exponential decay, split into a direct part (first n_d samples) and a
reverberant tail.  The per-frame recursion propagates the reverberant
spectral variance from frame to frame; the late-reverberant variance used by
the suppression gain is a delayed, extra-decayed copy of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def zeta_from_t60(t60: float, sample_rate: float) -> float:
    """Decay constant in nepers/sample: 3 ln(10) / (T60 * fs)."""
    if t60 <= 0 or sample_rate <= 0:
        raise ValueError("t60 and sample_rate must be positive")
    return 3.0 * math.log(10.0) / (t60 * sample_rate)


@dataclass
class ReverbParams:
    """Decay and energy-split parameters derived from T60.

    n_e: early/late split in samples, must be a multiple of the frame hop.
    n_d: direct-part length in samples.
    drr_inverse: E_r/E_d, reverberant-to-direct energy ratio (adapted online).
    sigma_d2 / sigma_r2: model variances, used only to synthesize test RIRs.
    """

    t60: float
    sample_rate: int
    hop: int
    n_e: int
    n_d: int
    drr_inverse: float = 1.0
    sigma_d2: float = 1.0
    sigma_r2: float = 1.0
    mu_drr: float = 0.95
    drr_gate_db: float = 3.0

    def __post_init__(self):
        if self.t60 <= 0:
            raise ConfigError("t60 must be positive")
        if self.n_e < self.hop or self.n_e % self.hop != 0:
            raise ConfigError("n_e must be a positive multiple of the hop")
        if self.n_d < 0:
            raise ConfigError("n_d must be nonnegative")
        if self.drr_inverse < 0:
            raise ConfigError("drr_inverse must be nonnegative")

    @property
    def zeta(self) -> float:
        return zeta_from_t60(self.t60, self.sample_rate)

    @property
    def frame_decay(self) -> float:
        """exp(-2 zeta R): reverberant-variance decay per frame hop."""
        return math.exp(-2.0 * self.zeta * self.hop)

    @property
    def late_decay(self) -> float:
        """exp(-2 zeta (n_e - R)): extra decay between total and late variance."""
        return math.exp(-2.0 * self.zeta * (self.n_e - self.hop))

    @property
    def history_depth(self) -> int:
        return self.n_e // self.hop

    @classmethod
    def from_t60(cls, t60: float, sample_rate: int, hop: int,
                 n_e_ms: float = 50.0, n_d_ms: float = 8.0,
                 drr_inverse: float = 1.0, **kw) -> "ReverbParams":
        """Build params with the early/late split rounded to a hop multiple."""
        n_e = max(1, round(n_e_ms * sample_rate / 1000.0 / hop)) * hop
        n_d = int(round(n_d_ms * sample_rate / 1000.0))
        return cls(t60, sample_rate, hop, n_e, n_d, drr_inverse, **kw)


class ReverbState:
    """Per-utterance recursion state: current reverberant variance per bin
    plus the ring buffer of past values needed for the late-variance delay."""

    def __init__(self, n_bins: int, params: ReverbParams):
        self.params = params
        self.lambda_xr = np.zeros(n_bins)
        depth = params.history_depth
        self.history = np.zeros((depth, n_bins))
        self._pos = 0

    def advance(self, lambda_xd_prev: np.ndarray, drr_inverse: float | None = None) -> np.ndarray:
        """One-frame update of the reverberant variance.

        lambda_xd_prev is the previous frame's direct-component variance
        estimate.  Returns (and stores) the new per-bin reverberant variance;
        the value is also pushed into the delay history.  drr_inverse
        overrides the configured E_r/E_d (the enhancer adapts it online).
        """
        if np.any(lambda_xd_prev < 0) or np.any(self.lambda_xr < 0):
            raise ValueError("variances must be nonnegative")
        p = self.params
        if drr_inverse is None:
            drr_inverse = p.drr_inverse
        decay = p.frame_decay
        self.lambda_xr = decay * self.lambda_xr \
            + drr_inverse * (1.0 - decay) * lambda_xd_prev
        self.history[self._pos] = self.lambda_xr
        self._pos = (self._pos + 1) % self.history.shape[0]
        return self.lambda_xr

    def late_variance(self) -> np.ndarray:
        """Late-reverberant variance: delayed lambda_xr with extra decay.

        After advance() at frame d, the oldest history entry is the
        reverberant variance of frame d - n_e/R + 1.
        """
        oldest = self.history[self._pos]
        return self.params.late_decay * oldest


def update_reverb_variance(state: ReverbState, lambda_xd_prev: np.ndarray) -> np.ndarray:
    """Functional wrapper around ReverbState.advance (mutates state)."""
    return state.advance(np.asarray(lambda_xd_prev, dtype=np.float64))


def late_reverb_variance(state: ReverbState) -> np.ndarray:
    """Functional wrapper around ReverbState.late_variance."""
    return state.late_variance()


def adapt_drr(drr_inverse: float, direct_est: float, reverb_est: float,
              mu: float = 0.95, active: bool = True) -> float:
    """Exponentially smoothed E_r/E_d update, clamped so the DRR stays <= 1.

    Updated only when the direct signal is detected active; degenerate
    estimates are absorbed by the clamp.
    """
    if not active or direct_est <= 0:
        return drr_inverse
    target = max(reverb_est, 0.0) / direct_est
    new = mu * drr_inverse + (1.0 - mu) * target
    return max(new, 1.0)


def rir_energy_envelope(params: ReverbParams, n) -> np.ndarray:
    """Expected energy of the model RIR at sample offsets n (0 for n < 0)."""
    n = np.asarray(n, dtype=np.float64)
    env = np.where(n < params.n_d, params.sigma_d2, params.sigma_r2) \
        * np.exp(-2.0 * params.zeta * n)
    return np.where(n < 0, 0.0, env)


def simulate_rir(params: ReverbParams, length: int, rng: np.random.Generator) -> np.ndarray:
    """Draw one RIR from the model: white Gaussian noise times the decay."""
    n = np.arange(length)
    sigma = np.where(n < params.n_d, math.sqrt(params.sigma_d2), math.sqrt(params.sigma_r2))
    return rng.standard_normal(length) * sigma * np.exp(-params.zeta * n)


def split_energies(params: ReverbParams, length: int) -> tuple:
    """Expected direct (n < n_d) and reverberant (n >= n_d) RIR energies."""
    n = np.arange(length)
    env = rir_energy_envelope(params, n)
    direct = float(env[: params.n_d].sum())
    late = float(env[params.n_d:].sum())
    return direct, late
