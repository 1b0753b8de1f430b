"""RIFF/WAVE decoding for the classification pipeline.

Only the corpus format is accepted: PCM (format tag 1), 16 bits per
sample, one or two channels, 44.1 kHz.  Anything else is rejected
instead of converted; resampling is deliberately out of scope.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PIPELINE_SAMPLE_RATE = 44100
FULL_SCALE = 32768.0


class WavError(ValueError):
    """A WAV payload that cannot be decoded into pipeline audio."""


class MalformedHeader(WavError):
    """Container is not RIFF/WAVE or a required chunk is missing."""


class UnsupportedEncoding(WavError):
    """Codec or sample width outside the supported 16-bit PCM subset."""


class TruncatedData(WavError):
    """A chunk body is shorter than its declared size."""


class UnsupportedChannelCount(WavError):
    """More channels than the mono/stereo downmix handles."""


class UnsupportedFormat(WavError):
    """Valid WAV, but not at the pipeline's 44.1 kHz rate."""


@dataclass(frozen=True, eq=False)
class RawPcm:
    """Decoded PCM payload before downmixing and normalization."""

    channels: int
    bits_per_sample: int
    sample_rate_hz: int
    samples: np.ndarray  # int16, shape (n_frames, channels)


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono waveform normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate_hz: int
    source_path: str = ""

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("clip must contain at least one sample")
        if self.sample_rate_hz <= 0:
            raise ValueError("sample rate must be positive")
        peak = float(np.max(np.abs(samples)))
        if peak > 1.0:
            raise ValueError(f"sample amplitude {peak} exceeds full scale")

    @property
    def duration_seconds(self) -> float:
        return self.samples.size / self.sample_rate_hz


def decode_wav(data: bytes) -> RawPcm:
    """Parse a RIFF/WAVE byte string into raw 16-bit PCM.

    The format chunk must precede the data chunk; unknown chunks are
    skipped (with RIFF's even-byte padding).

    Raises:
        MalformedHeader: magic bytes wrong, fmt missing, or no data chunk.
        UnsupportedEncoding: compressed payloads or non-16-bit samples.
        TruncatedData: declared chunk sizes run past the end of the file.
    """
    if len(data) < 12:
        raise MalformedHeader("file too short for a RIFF header")
    if data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader("not a RIFF/WAVE file")

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body_start = pos + 8
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise MalformedHeader("fmt chunk too small")
            if body_start + 16 > len(data):
                raise TruncatedData("fmt chunk runs past end of file")
            fmt = struct.unpack_from("<HHIIHH", data, body_start)
        elif chunk_id == b"data":
            if fmt is None:
                raise MalformedHeader("data chunk appears before fmt chunk")
            audio_format, channels, rate, _byte_rate, _block_align, bits = fmt
            if audio_format != 1:
                raise UnsupportedEncoding(f"only PCM supported, got format tag {audio_format}")
            if bits != 16:
                raise UnsupportedEncoding(f"only 16-bit samples supported, got {bits}")
            if channels < 1:
                raise MalformedHeader("fmt chunk declares zero channels")
            body = data[body_start : body_start + chunk_size]
            if len(body) < chunk_size:
                raise TruncatedData(
                    f"data chunk declares {chunk_size} bytes, only {len(body)} present"
                )
            if chunk_size % (2 * channels) != 0:
                raise TruncatedData("data chunk ends mid-frame")
            samples = np.frombuffer(body, dtype="<i2").reshape(-1, channels)
            return RawPcm(channels, bits, rate, samples)
        # skip unknown chunk, honoring the pad byte on odd sizes
        pos = body_start + chunk_size + (chunk_size & 1)
        continue
    raise MalformedHeader("no data chunk found")


def downmix_to_mono(pcm: RawPcm, source_path: str = "") -> AudioClip:
    """Average stereo channels and rescale int16 to [-1, 1].

    The divisor is 32768 so that -32768 maps to -1.0 exactly; +32767
    lands just below +1.0.
    """
    if pcm.bits_per_sample != 16:
        raise UnsupportedEncoding(f"only 16-bit samples supported, got {pcm.bits_per_sample}")
    if pcm.channels not in (1, 2):
        raise UnsupportedChannelCount(f"cannot downmix {pcm.channels} channels")
    if pcm.channels == 2:
        mixed = pcm.samples.astype(np.float64).mean(axis=1)
    else:
        mixed = pcm.samples[:, 0].astype(np.float64)
    return AudioClip(mixed / FULL_SCALE, pcm.sample_rate_hz, source_path)


def load_clip(path: str | Path) -> AudioClip:
    """Decode a WAV file into a pipeline-ready mono clip at 44.1 kHz."""
    raw = decode_wav(Path(path).read_bytes())
    clip = downmix_to_mono(raw, source_path=str(path))
    if clip.sample_rate_hz != PIPELINE_SAMPLE_RATE:
        raise UnsupportedFormat(
            f"{path}: sample rate {clip.sample_rate_hz} Hz, pipeline requires "
            f"{PIPELINE_SAMPLE_RATE} Hz"
        )
    return clip


def encode_wav(clip: AudioClip) -> bytes:
    """Write a mono clip back to 16-bit PCM WAV bytes.

    Re-decoding reproduces each sample within 1/32768.
    """
    ints = np.clip(np.rint(clip.samples * FULL_SCALE), -32768, 32767).astype("<i2")
    body = ints.tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(body)) + b"WAVE"
    fmt = b"fmt " + struct.pack(
        "<IHHIIHH", 16, 1, 1, clip.sample_rate_hz, clip.sample_rate_hz * 2, 2, 16
    )
    return header + fmt + b"data" + struct.pack("<I", len(body)) + body
