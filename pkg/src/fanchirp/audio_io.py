"""Multichannel WAV reading/writing (PCM-16 and IEEE float-32 only)."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import FormatError

_PCM16_SCALE = 32768.0


@dataclass
class MultichannelSignal:
    """Sampled audio, channels x samples, with its sample rate.

    Samples are float64 regardless of the file precision; the gain recursions
    downstream are numerically sensitive.
    """

    samples: np.ndarray  # [n_channels, n_samples]
    sample_rate: int

    def __post_init__(self):
        self.samples = np.atleast_2d(np.asarray(self.samples, dtype=np.float64))
        if self.samples.ndim != 2:
            raise ValueError("samples must be a [channels, samples] matrix")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        self.sample_rate = int(self.sample_rate)
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("samples must be finite")

    @property
    def n_channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, i: int) -> np.ndarray:
        return self.samples[i]


def read_wav(path) -> MultichannelSignal:
    """Read a PCM-16 or float-32 WAV file.

    PCM-16 samples are normalized by 32768 to [-1, 1); float data is taken
    as-is. Channels keep file order.
    """
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        # scipy raises ValueError both for truncated RIFF chunks and for
        # unsupported encodings; tell them apart by message.
        msg = str(exc).lower()
        if "unsupported" in msg or "unknown wave file format" in msg or "mu-law" in msg:
            raise FormatError(f"{path}: {exc}") from exc
        raise OSError(f"{path}: {exc}") from exc

    if data.dtype == np.int16:
        samples = data.astype(np.float64) / _PCM16_SCALE
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    elif data.dtype == np.float64:
        samples = data
    else:
        raise FormatError(f"{path}: unsupported sample encoding {data.dtype}; "
                          "only PCM-16 and IEEE float-32 are handled")

    if samples.ndim == 1:
        samples = samples[None, :]
    else:
        samples = samples.T  # wavfile gives [samples, channels]
    return MultichannelSignal(samples, int(rate))


def write_wav(signal: MultichannelSignal, path, encoding: str = "float32") -> None:
    """Write a signal as WAV. Samples beyond [-1, 1] are clipped with a warning."""
    if signal.n_samples == 0:
        raise ValueError("cannot write an empty signal")
    data = signal.samples
    peak = np.max(np.abs(data)) if data.size else 0.0
    if peak > 1.0:
        warnings.warn(f"samples exceed [-1, 1] (peak {peak:.3f}); clipping on write")
        data = np.clip(data, -1.0, 1.0)

    if encoding == "float32":
        out = data.astype(np.float32)
    elif encoding == "pcm16":
        q = np.round(data * _PCM16_SCALE)
        out = np.clip(q, -32768, 32767).astype(np.int16)
    else:
        raise FormatError(f"unsupported encoding {encoding!r}; use 'pcm16' or 'float32'")

    out = out.T if signal.n_channels > 1 else out[0]
    wavfile.write(path, signal.sample_rate, out)
