"""Per-clip feature extraction: 13 MFCC means plus four spectral
descriptors (zero-crossing rate, centroid, bandwidth, rolloff).

MFCC path: power spectrogram -> triangular mel filterbank (peak 1,
unnormalized) -> natural log with a floor -> orthonormal DCT-II, keep
coefficients 0..12.  Descriptors are computed per frame and averaged,
with centroid/bandwidth weighted by magnitude (sqrt of power) and
rolloff accumulated over power.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .audio_io import AudioClip
from .spectral import FramePlan, PowerSpectrogram, frame_signal, power_spectrogram

N_DESCRIPTORS = 4


def feature_names(n_mfcc: int = 13) -> tuple[str, ...]:
    return tuple(f"mfcc_{i}" for i in range(n_mfcc)) + ("zcr", "centroid", "bandwidth", "rolloff")


@dataclass(frozen=True, eq=False)
class MelFilterbank:
    """Triangular filters with centers equally spaced on the mel axis."""

    weights: np.ndarray        # (n_mels, n_bins), non-negative, peak 1
    break_freqs_hz: np.ndarray  # n_mels + 2 band edges in Hz
    f_min_hz: float
    f_max_hz: float

    @property
    def n_mels(self) -> int:
        return self.weights.shape[0]

    @property
    def n_bins(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class ExtractionConfig:
    """Everything that parameterizes a clip -> FeatureVector run."""

    plan: FramePlan = field(default_factory=FramePlan)
    n_mels: int = 40
    n_mfcc: int = 13
    rolloff_fraction: float = 0.85
    log_floor: float = 1e-10

    def __post_init__(self):
        if self.n_mels < 1:
            raise ValueError("n_mels must be >= 1")
        if not 1 <= self.n_mfcc <= self.n_mels:
            raise ValueError("n_mfcc must be in [1, n_mels]")
        if not 0.0 < self.rolloff_fraction < 1.0:
            raise ValueError("rolloff_fraction must be in (0, 1)")
        if self.log_floor <= 0.0:
            raise ValueError("log_floor must be positive")


@dataclass(frozen=True, eq=False)
class FeatureVector:
    """Condensed per-clip features: MFCC means plus descriptor means."""

    mfcc: np.ndarray
    zcr: float
    centroid_hz: float
    bandwidth_hz: float
    rolloff_hz: float

    def __post_init__(self):
        if not 0.0 <= self.zcr <= 1.0:
            raise ValueError(f"zcr out of [0, 1]: {self.zcr}")
        if min(self.centroid_hz, self.bandwidth_hz, self.rolloff_hz) < 0.0:
            raise ValueError("spectral descriptors must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.concatenate(
            [self.mfcc, [self.zcr, self.centroid_hz, self.bandwidth_hz, self.rolloff_hz]]
        )


def hz_to_mel(f):
    """m = 2595 * log10(1 + f/700)."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be non-negative")
    out = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(out) if out.ndim == 0 else out


def mel_to_hz(m):
    """Exact algebraic inverse of hz_to_mel."""
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("mel value must be non-negative")
    out = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(out) if out.ndim == 0 else out


def build_mel_filterbank(
    n_mels: int,
    n_bins: int,
    sample_rate_hz: int,
    f_min_hz: float = 0.0,
    f_max_hz: float | None = None,
) -> MelFilterbank:
    """Construct n_mels triangles from n_mels + 2 mel-equidistant breaks.

    Filter j rises linearly from break j to break j+1 and falls to
    break j+2, sampled at the FFT bin frequencies.  Rows are not
    area-normalized (peak 1).

    Raises:
        ValueError: when so many filters are requested that adjacent
            breaks collapse onto the same bin and a row ends up empty.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    if f_max_hz is None:
        f_max_hz = sample_rate_hz / 2.0
    if not 0.0 <= f_min_hz < f_max_hz:
        raise ValueError("need 0 <= f_min < f_max")
    breaks_mel = np.linspace(hz_to_mel(f_min_hz), hz_to_mel(f_max_hz), n_mels + 2)
    breaks_hz = mel_to_hz(breaks_mel)

    # bin spacing of the spectrogram this bank will be applied to
    bin_freqs = np.arange(n_bins) * (sample_rate_hz / ((n_bins - 1) * 2))
    lower = breaks_hz[:-2, None]
    center = breaks_hz[1:-1, None]
    upper = breaks_hz[2:, None]
    if np.any(center - lower <= 0) or np.any(upper - center <= 0):
        raise ValueError(f"too many filters: {n_mels} breaks collapse in [{f_min_hz}, {f_max_hz}]")
    rise = (bin_freqs[None, :] - lower) / (center - lower)
    fall = (upper - bin_freqs[None, :]) / (upper - center)
    weights = np.clip(np.minimum(rise, fall), 0.0, None)
    if np.any(weights.max(axis=1) <= 0.0):
        empty = int(np.argmin(weights.max(axis=1)))
        raise ValueError(
            f"too many filters: filter {empty} covers no FFT bin "
            f"(n_mels={n_mels}, n_bins={n_bins})"
        )
    weights.setflags(write=False)
    return MelFilterbank(weights, breaks_hz, f_min_hz, float(f_max_hz))


@lru_cache(maxsize=16)
def dct_ii_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II matrix T with T @ T.T = identity."""
    k = np.arange(n)[:, None]
    grid = np.pi * k * (2 * np.arange(n)[None, :] + 1) / (2 * n)
    t = np.cos(grid) * np.sqrt(2.0 / n)
    t[0, :] = np.sqrt(1.0 / n)
    t.setflags(write=False)
    return t


def mfcc_frames(
    spec: PowerSpectrogram,
    fb: MelFilterbank,
    n_mfcc: int = 13,
    log_floor: float = 1e-10,
) -> np.ndarray:
    """Per-frame MFCCs, shape (n_frames, n_mfcc).

    Per frame: mel energies e = weights @ power_bins, l = ln(max(e,
    floor)), coefficients = first n_mfcc rows of the orthonormal DCT-II
    of l.
    """
    if fb.n_bins != spec.n_bins:
        raise ValueError(f"filterbank has {fb.n_bins} bins, spectrogram has {spec.n_bins}")
    if not 1 <= n_mfcc <= fb.n_mels:
        raise ValueError("n_mfcc must be in [1, n_mels]")
    energies = spec.values @ fb.weights.T
    logs = np.log(np.maximum(energies, log_floor))
    return logs @ dct_ii_matrix(fb.n_mels)[:n_mfcc].T


def zero_crossing_rate(frame) -> float:
    """Fraction of adjacent pairs whose signs differ (0 counts as non-negative)."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.size < 2:
        raise ValueError("zero-crossing rate needs at least 2 samples")
    nonneg = frame >= 0.0
    return float(np.count_nonzero(nonneg[1:] != nonneg[:-1])) / (frame.size - 1)


def spectral_centroid(power_bins, bin_freqs_hz) -> float:
    """Magnitude-weighted mean frequency; 0 for an all-zero spectrum."""
    power_bins = np.asarray(power_bins, dtype=np.float64)
    bin_freqs_hz = np.asarray(bin_freqs_hz, dtype=np.float64)
    if power_bins.shape != bin_freqs_hz.shape:
        raise ValueError("power and frequency arrays must have equal length")
    mags = np.sqrt(power_bins)
    total = mags.sum()
    if total == 0.0:
        return 0.0
    return float((bin_freqs_hz * mags).sum() / total)


def spectral_bandwidth(power_bins, bin_freqs_hz, centroid_hz: float) -> float:
    """Magnitude-weighted standard deviation of frequency around the centroid."""
    power_bins = np.asarray(power_bins, dtype=np.float64)
    bin_freqs_hz = np.asarray(bin_freqs_hz, dtype=np.float64)
    if power_bins.shape != bin_freqs_hz.shape:
        raise ValueError("power and frequency arrays must have equal length")
    mags = np.sqrt(power_bins)
    total = mags.sum()
    if total == 0.0:
        return 0.0
    return float(np.sqrt((mags * (bin_freqs_hz - centroid_hz) ** 2).sum() / total))


def spectral_rolloff(power_bins, bin_freqs_hz, q: float) -> float:
    """Frequency of the first bin where cumulative power reaches q of the total."""
    if not 0.0 < q < 1.0:
        raise ValueError("rolloff fraction must be in (0, 1)")
    power_bins = np.asarray(power_bins, dtype=np.float64)
    bin_freqs_hz = np.asarray(bin_freqs_hz, dtype=np.float64)
    if power_bins.shape != bin_freqs_hz.shape:
        raise ValueError("power and frequency arrays must have equal length")
    cum = np.cumsum(power_bins)
    total = cum[-1]  # threshold against the running sum's own total
    if total == 0.0:
        return 0.0
    idx = int(np.argmax(cum >= q * total))
    return float(bin_freqs_hz[idx])


@lru_cache(maxsize=8)
def _cached_filterbank(n_mels: int, n_bins: int, sample_rate_hz: int) -> MelFilterbank:
    return build_mel_filterbank(n_mels, n_bins, sample_rate_hz)


def extract_clip_features(clip: AudioClip, cfg: ExtractionConfig | None = None) -> FeatureVector:
    """Full per-clip pipeline: frame, transform, and average over frames.

    ZCR is computed on the same centered frames as the spectrogram but
    from unwindowed time-domain samples, keeping all five feature
    families aligned in frame count.
    """
    if cfg is None:
        cfg = ExtractionConfig()
    spec = power_spectrogram(clip, cfg.plan)
    fb = _cached_filterbank(cfg.n_mels, spec.n_bins, clip.sample_rate_hz)
    mfcc_mean = mfcc_frames(spec, fb, cfg.n_mfcc, cfg.log_floor).mean(axis=0)

    time_frames = frame_signal(clip, cfg.plan)
    nonneg = time_frames >= 0.0
    crossings = np.count_nonzero(nonneg[:, 1:] != nonneg[:, :-1], axis=1)
    zcr = float(crossings.mean()) / (cfg.plan.frame_size - 1)

    mags = np.sqrt(spec.values)
    totals = mags.sum(axis=1)
    safe = np.where(totals == 0.0, 1.0, totals)
    centroids = np.where(totals == 0.0, 0.0, (mags * spec.bin_freqs_hz).sum(axis=1) / safe)
    deviations = (spec.bin_freqs_hz[None, :] - centroids[:, None]) ** 2
    bandwidths = np.where(totals == 0.0, 0.0, np.sqrt((mags * deviations).sum(axis=1) / safe))

    cum = np.cumsum(spec.values, axis=1)
    power_totals = cum[:, -1]
    rolloff_idx = np.argmax(cum >= cfg.rolloff_fraction * power_totals[:, None], axis=1)
    rolloffs = np.where(power_totals == 0.0, 0.0, spec.bin_freqs_hz[rolloff_idx])

    return FeatureVector(
        mfcc=mfcc_mean,
        zcr=zcr,
        centroid_hz=float(centroids.mean()),
        bandwidth_hz=float(bandwidths.mean()),
        rolloff_hz=float(rolloffs.mean()),
    )
