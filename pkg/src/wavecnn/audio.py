"""WAV ingestion: decode, resample to 8 kHz, cut 1-second clips, standardize.

Supported input: RIFF/WAVE containers with PCM 8/16/24-bit or IEEE float32
payloads, mono or stereo.  Everything downstream of :func:`load_wav` works on
float arrays scaled to [-1, 1]; stereo is averaged to mono at load time.

The clip cache stores one file per standardized clip: 8000 raw little-endian
float32 values, named ``<sha1 of "source@offset">.f32``.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SAMPLE_RATE = 8000
CLIP_SAMPLES = 8000
ANTI_ALIAS_CUTOFF_HZ = 3600.0
ANTI_ALIAS_TAPS = 65  # odd tap count gives an integer group delay
MIN_KEEP_FRACTION = 0.5  # trailing remainder >= 0.5 s is kept and zero-padded


class WavFormatError(ValueError):
    """Malformed or unsupported WAV input."""


@dataclass
class AudioClip:
    """One standardized 1-second clip plus provenance."""

    samples: np.ndarray          # exactly 8000 float32 values
    source_path: str = ""
    source_offset_s: float = 0.0
    sample_rate: int = field(default=SAMPLE_RATE)

    def __post_init__(self):
        if self.samples.shape != (CLIP_SAMPLES,):
            raise WavFormatError(f"clip must hold {CLIP_SAMPLES} samples, "
                                 f"got shape {self.samples.shape}")


# -- RIFF/WAVE decode and encode ---------------------------------------------

_PCM = 1
_IEEE_FLOAT = 3


def load_wav(path) -> tuple[np.ndarray, int, int]:
    """Decode a WAV file to (mono float64 samples in [-1, 1], rate, channels)."""
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: not a RIFF/WAVE file")
    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise WavFormatError(f"{path}: fmt chunk truncated ({len(body)} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise WavFormatError(f"{path}: data chunk shorter than declared "
                                     f"({len(body)} < {chunk_size} bytes)")
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned
    if fmt is None:
        raise WavFormatError(f"{path}: missing fmt chunk")
    if data is None:
        raise WavFormatError(f"{path}: missing data chunk")
    audio_format, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise WavFormatError(f"{path}: {channels} channels unsupported (want 1 or 2)")
    if audio_format == _PCM and bits == 8:
        samples = (np.frombuffer(data, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    elif audio_format == _PCM and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == _PCM and bits == 24:
        triples = np.frombuffer(data, dtype=np.uint8)
        triples = triples[:len(triples) - len(triples) % 3].reshape(-1, 3).astype(np.int32)
        value = triples[:, 0] | (triples[:, 1] << 8) | (triples[:, 2] << 16)
        value -= (value & 0x800000) << 1  # sign extend
        samples = value.astype(np.float64) / float(1 << 23)
    elif audio_format == _IEEE_FLOAT and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported format code {audio_format} "
                             f"at {bits} bits")
    if channels == 2:
        samples = samples[:len(samples) - len(samples) % 2].reshape(-1, 2).mean(axis=1)
    return samples, rate, channels


def write_wav(path, samples: np.ndarray, rate: int = SAMPLE_RATE) -> None:
    """Write mono 16-bit PCM; round-trips 16-bit content bit-exactly."""
    quantized = np.clip(np.round(np.asarray(samples, dtype=np.float64) * 32768.0),
                        -32768, 32767).astype("<i2")
    payload = quantized.tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI",
                         b"RIFF", 36 + len(payload), b"WAVE",
                         b"fmt ", 16, _PCM, 1, rate, rate * 2, 2, 16,
                         b"data", len(payload))
    Path(path).write_bytes(header + payload)


# -- resampling ----------------------------------------------------------------

def _anti_alias_taps(rate: int) -> np.ndarray:
    n = np.arange(ANTI_ALIAS_TAPS) - (ANTI_ALIAS_TAPS - 1) / 2
    taps = 2.0 * ANTI_ALIAS_CUTOFF_HZ / rate * np.sinc(2.0 * ANTI_ALIAS_CUTOFF_HZ / rate * n)
    taps *= np.hamming(ANTI_ALIAS_TAPS)
    return taps / taps.sum()


def resample_to_8k(samples: np.ndarray, rate: int) -> np.ndarray:
    """Low-pass at 3.6 kHz then linearly interpolate down to 8 kHz.

    Output length is round(len * 8000 / rate).  Upsampling is out of scope:
    rates below 8 kHz are rejected.
    """
    if rate < SAMPLE_RATE:
        raise WavFormatError(f"cannot upsample from {rate} Hz; need >= {SAMPLE_RATE}")
    samples = np.asarray(samples, dtype=np.float64)
    if rate == SAMPLE_RATE:
        return samples.copy()
    filtered = np.convolve(samples, _anti_alias_taps(rate), mode="same")
    out_len = int(round(len(samples) * SAMPLE_RATE / rate))
    positions = np.arange(out_len) * (rate / SAMPLE_RATE)
    return np.interp(positions, np.arange(len(samples)), filtered)


# -- clip extraction and standardization --------------------------------------

def extract_clips(samples_8k: np.ndarray, segments, source_path: str = "") -> list[AudioClip]:
    """Tile each (start_s, end_s) segment into consecutive 1-second clips.

    A trailing remainder of at least 0.5 s is zero-padded to a full second;
    shorter remainders are dropped.
    """
    total_s = len(samples_8k) / SAMPLE_RATE
    clips = []
    for start_s, end_s in segments:
        if start_s < 0 or end_s > total_s or start_s >= end_s:
            raise WavFormatError(f"segment ({start_s}, {end_s}) outside signal "
                                 f"of {total_s:.3f} s")
        begin = int(round(start_s * SAMPLE_RATE))
        end = int(round(end_s * SAMPLE_RATE))
        pos = begin
        while pos + CLIP_SAMPLES <= end:
            window = samples_8k[pos:pos + CLIP_SAMPLES]
            clips.append(AudioClip(np.asarray(window, dtype=np.float32).copy(),
                                   source_path, pos / SAMPLE_RATE))
            pos += CLIP_SAMPLES
        remainder = end - pos
        if remainder >= CLIP_SAMPLES * MIN_KEEP_FRACTION:
            window = np.zeros(CLIP_SAMPLES, dtype=np.float32)
            window[:remainder] = samples_8k[pos:end]
            clips.append(AudioClip(window, source_path, pos / SAMPLE_RATE))
    return clips


def standardize_samples(samples: np.ndarray) -> np.ndarray:
    """(x - mean) / max(std, 1e-8) with population std; float32 output.

    A constant signal comes back as all zeros via the epsilon floor.
    """
    x = np.asarray(samples)
    mean = x.mean(dtype=np.float64)
    std = x.std(dtype=np.float64)
    return ((x - mean) / max(std, 1e-8)).astype(np.float32)


def standardize(clip: AudioClip) -> AudioClip:
    return AudioClip(standardize_samples(clip.samples),
                     clip.source_path, clip.source_offset_s)


# -- clip cache ----------------------------------------------------------------

def clip_cache_name(source_path: str, offset_s: float) -> str:
    key = f"{source_path}@{offset_s:.3f}".encode()
    return hashlib.sha1(key).hexdigest() + ".f32"


def write_clip_cache(cache_dir, clip: AudioClip) -> Path:
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / clip_cache_name(clip.source_path, clip.source_offset_s)
    path.write_bytes(clip.samples.astype("<f4", copy=False).tobytes())
    return path


def read_clip_cache(path) -> np.ndarray:
    blob = Path(path).read_bytes()
    if len(blob) != 4 * CLIP_SAMPLES:
        raise WavFormatError(f"{path}: cache file holds {len(blob)} bytes, "
                             f"expected {4 * CLIP_SAMPLES}")
    return np.frombuffer(blob, dtype="<f4").astype(np.float32)


def load_clip(path) -> np.ndarray:
    """Load one standardized 8000-sample clip from a .f32 cache file or a WAV.

    WAV inputs are resampled to 8 kHz; longer signals are truncated to the
    first second and shorter ones (>= 0.5 s) zero-padded, mirroring the
    extraction policy.  Cache files are assumed already standardized.
    """
    path = Path(path)
    if path.suffix == ".f32":
        return read_clip_cache(path)
    samples, rate, _ = load_wav(path)
    samples_8k = resample_to_8k(samples, rate)
    if len(samples_8k) < CLIP_SAMPLES * MIN_KEEP_FRACTION:
        raise WavFormatError(f"{path}: {len(samples_8k) / SAMPLE_RATE:.2f} s of audio "
                             f"is too short for a 1-second clip")
    window = np.zeros(CLIP_SAMPLES, dtype=np.float32)
    usable = min(len(samples_8k), CLIP_SAMPLES)
    window[:usable] = samples_8k[:usable]
    return standardize_samples(window)
