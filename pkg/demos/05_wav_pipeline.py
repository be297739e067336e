#!/usr/bin/env python3
"""Follow one recording through the ingestion pipeline.

Writes a 2.7-second 16 kHz WAV, then: decode -> anti-alias + resample to
8 kHz -> cut into 1-second clips -> standardize -> cache as raw float32.
"""

import tempfile
from pathlib import Path

import numpy as np

from wavecnn import audio

work = Path(tempfile.mkdtemp(prefix="wavecnn_wav_"))
rate_in = 16000
t = np.arange(int(2.7 * rate_in)) / rate_in
signal = 0.6 * np.sin(2 * np.pi * 700 * t) * (1 + 0.3 * np.sin(2 * np.pi * 3 * t))
source = work / "recording.wav"
audio.write_wav(source, signal, rate_in)
print(f"wrote {source} ({len(signal)} samples at {rate_in} Hz)")

samples, rate, channels = audio.load_wav(source)
print(f"decoded: {len(samples)} samples, {rate} Hz, {channels} channel(s), "
      f"peak {np.abs(samples).max():.3f}")

resampled = audio.resample_to_8k(samples, rate)
print(f"resampled: {len(resampled)} samples at 8000 Hz "
      f"(= round({len(samples)} * 8000 / {rate}))")

clips = audio.extract_clips(resampled, [(0.0, len(resampled) / 8000)],
                            source_path=str(source))
print(f"clips: {len(clips)} x 8000 samples "
      f"(2.7 s -> two full seconds + 0.7 s remainder kept and zero-padded)")

for clip in clips:
    z = audio.standardize(clip)
    cached = audio.write_clip_cache(work / "cache", z)
    mean = z.samples.mean(dtype=np.float64)
    std = z.samples.std(dtype=np.float64)
    print(f"  offset {clip.source_offset_s:3.1f} s: mean {mean:+.2e}, "
          f"std {std:.4f} -> {cached.name}")

back = audio.read_clip_cache(sorted((work / 'cache').glob('*.f32'))[0])
print(f"cache round-trip ok: {back.shape == (8000,)}")
