"""Short-time Fourier machinery: framing, Hann windowing, radix-2 FFT,
and the power spectrogram that feeds the mel filterbank.

Conventions are fixed so that a 3 s, 44.1 kHz clip at frame 1024 /
hop 512 produces exactly 259 frames: periodic (DFT-even) Hann window,
centered framing with reflection padding, power = |X|^2 over bins
0..frame_size/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .audio_io import AudioClip


class SignalTooShort(ValueError):
    """Signal shorter than the framing mode can handle."""


@dataclass(frozen=True)
class FramePlan:
    """Analysis geometry: frame length, hop, and centering."""

    frame_size: int = 1024
    hop_size: int = 512
    centered: bool = True

    def __post_init__(self):
        if self.frame_size < 2 or self.frame_size & (self.frame_size - 1):
            raise ValueError(f"frame_size must be a power of two >= 2, got {self.frame_size}")
        if not 0 < self.hop_size <= self.frame_size:
            raise ValueError(f"hop_size must be in [1, frame_size], got {self.hop_size}")

    @property
    def n_bins(self) -> int:
        return self.frame_size // 2 + 1


@dataclass(frozen=True, eq=False)
class PowerSpectrogram:
    """Frames x bins matrix of |FFT|^2 values plus the bin frequencies."""

    values: np.ndarray        # (n_frames, n_bins), non-negative
    bin_freqs_hz: np.ndarray  # bin_freqs_hz[k] = k * sample_rate / frame_size
    frame_size: int
    hop_size: int
    sample_rate_hz: int

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    @property
    def n_bins(self) -> int:
        return self.values.shape[1]


@lru_cache(maxsize=16)
def hann_window(n: int) -> np.ndarray:
    """Periodic Hann window w[i] = 0.5 * (1 - cos(2*pi*i/n))."""
    if n < 2:
        raise ValueError(f"window length must be >= 2, got {n}")
    w = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    w.setflags(write=False)
    return w


@lru_cache(maxsize=16)
def _fft_plan(n: int) -> tuple[np.ndarray, tuple[np.ndarray, ...]]:
    """Bit-reversal permutation and per-stage twiddle factors for size n."""
    perm = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        perm[i] = perm[i >> 1] >> 1 | ((i & 1) * (n >> 1))
    stages = []
    half = 1
    while half < n:
        stages.append(np.exp(-2j * np.pi * np.arange(half) / (2 * half)))
        half *= 2
    return perm, tuple(stages)


def _is_pow2(n: int) -> bool:
    return n >= 2 and n & (n - 1) == 0


def _fft_batch(x: np.ndarray) -> np.ndarray:
    """Iterative decimation-in-time FFT over the last axis of a 2-D array."""
    n = x.shape[-1]
    perm, stages = _fft_plan(n)
    out = np.ascontiguousarray(x[..., perm], dtype=np.complex128)
    half = 1
    for tw in stages:
        m = 2 * half
        v = out.reshape(out.shape[0], n // m, m)
        hi = v[:, :, half:] * tw
        # order matters: the second half is overwritten first, the first
        # half still holds the untouched "even" terms
        v[:, :, half:] = v[:, :, :half] - hi
        v[:, :, :half] += hi
        half = m
    return out


def fft(x) -> np.ndarray:
    """Radix-2 FFT of a power-of-two-length sequence.

    X[m] = sum_n x[n] * exp(-2j*pi*m*n/N).
    """
    arr = np.asarray(x, dtype=np.complex128)
    if arr.ndim != 1:
        raise ValueError("fft expects a 1-D sequence")
    if not _is_pow2(arr.size):
        raise ValueError(f"length must be a power of two >= 2, got {arr.size}")
    return _fft_batch(arr[None, :])[0]


def frame_signal(clip: AudioClip, plan: FramePlan) -> np.ndarray:
    """Slice a clip into overlapping frames, shape (n_frames, frame_size).

    Centered mode reflection-pads frame_size/2 samples on each side
    (mirror without repeating the edge sample) and yields
    1 + floor(len/hop) frames; non-centered mode takes only full frames
    from the raw signal.
    """
    x = clip.samples
    n = x.size
    if plan.centered:
        pad = plan.frame_size // 2
        if n <= pad:
            raise SignalTooShort(
                f"centered framing needs more than {pad} samples to reflect, got {n}"
            )
        padded = np.pad(x, pad, mode="reflect")
        n_frames = 1 + n // plan.hop_size
    else:
        if n < plan.frame_size:
            raise SignalTooShort(f"signal of {n} samples shorter than frame {plan.frame_size}")
        padded = x
        n_frames = 1 + (n - plan.frame_size) // plan.hop_size
    starts = np.arange(n_frames) * plan.hop_size
    idx = starts[:, None] + np.arange(plan.frame_size)[None, :]
    return padded[idx]


def power_spectrogram(clip: AudioClip, plan: FramePlan) -> PowerSpectrogram:
    """Hann-windowed power spectrogram over bins 0..frame_size/2."""
    frames = frame_signal(clip, plan)
    spectra = _fft_batch(frames * hann_window(plan.frame_size))
    kept = spectra[:, : plan.n_bins]
    values = kept.real**2 + kept.imag**2
    bin_freqs = np.arange(plan.n_bins) * (clip.sample_rate_hz / plan.frame_size)
    return PowerSpectrogram(values, bin_freqs, plan.frame_size, plan.hop_size, clip.sample_rate_hz)
