"""Synthetic labeled audio corpora with controllable class separability.

Each synthetic class is an amplitude-modulated tone: the carrier frequency
band separates classes spectrally, the AM rate adds temporal structure, and
white noise at a configurable floor sets the difficulty.  Families imprint a
first-order filter coloration so family leakage is detectable by splits that
should catch it.  Classes are assigned the five raw labels round-robin, so
generated manifests drop straight into the dataset tooling.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import CLIP_SAMPLES, SAMPLE_RATE, write_wav
from .data import AGES_MONTHS, RAW_LABELS, write_manifest

NYQUIST_HZ = SAMPLE_RATE / 2


@dataclass
class SynthSpec:
    num_classes: int = 3
    clips_per_class: int = 50
    carrier_bands_hz: list[tuple[float, float]] = field(default_factory=list)
    am_bands_hz: list[tuple[float, float]] = field(default_factory=list)
    noise_floor: float = 0.1          # noise amplitude relative to the unit tone
    families: int = 3
    family_coloration: float = 0.4    # first-order filter coefficient range
    ages: tuple[int, ...] = AGES_MONTHS
    seed: int = 0
    peak: float = 0.9                 # post-normalization waveform peak

    def __post_init__(self):
        if self.num_classes < 1 or self.clips_per_class < 1:
            raise ValueError("num_classes and clips_per_class must be >= 1")
        if self.families < 1:
            raise ValueError("families must be >= 1")
        if not self.carrier_bands_hz:
            centers = np.linspace(400.0, 3200.0, self.num_classes)
            self.carrier_bands_hz = [(c - 100.0, c + 100.0) for c in centers]
        if not self.am_bands_hz:
            rates = np.linspace(2.0, 12.0, self.num_classes)
            self.am_bands_hz = [(r - 0.5, r + 0.5) for r in rates]
        for lo, hi in self.carrier_bands_hz:
            if not 0.0 < lo < hi < NYQUIST_HZ:
                raise ValueError(f"carrier band ({lo}, {hi}) outside (0, {NYQUIST_HZ}) Hz")


def synth_clip(spec: SynthSpec, cls: int, family_coeff: float,
               rng: np.random.Generator) -> np.ndarray:
    """One second of AM tone + noise for the given class, family-colored."""
    t = np.arange(CLIP_SAMPLES) / SAMPLE_RATE
    lo, hi = spec.carrier_bands_hz[cls]
    carrier_hz = rng.uniform(lo, hi)
    am_lo, am_hi = spec.am_bands_hz[cls]
    am_hz = rng.uniform(am_lo, am_hi)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    am_phase = rng.uniform(0.0, 2.0 * np.pi)
    tone = np.sin(2.0 * np.pi * carrier_hz * t + phase)
    tone *= 0.6 + 0.4 * np.sin(2.0 * np.pi * am_hz * t + am_phase)
    x = tone + spec.noise_floor * rng.standard_normal(CLIP_SAMPLES)
    colored = x.copy()
    colored[1:] += family_coeff * x[:-1]
    return colored * (spec.peak / np.max(np.abs(colored)))


def generate(spec: SynthSpec, out_dir) -> Path:
    """Write WAV clips plus a manifest.csv; returns the manifest path.

    Fully determined by the SynthSpec: the same settings and seed produce a
    bit-identical corpus.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    family_coeffs = rng.uniform(-spec.family_coloration, spec.family_coloration,
                                size=spec.families)
    rows = []
    for cls in range(spec.num_classes):
        label = RAW_LABELS[cls % len(RAW_LABELS)]
        for i in range(spec.clips_per_class):
            family = int(rng.integers(spec.families))
            age = int(spec.ages[rng.integers(len(spec.ages))])
            clip = synth_clip(spec, cls, family_coeffs[family], rng)
            name = f"class{cls}_{i:04d}.wav"
            write_wav(out_dir / name, clip, SAMPLE_RATE)
            rows.append((name, label, age, f"F{family:02d}"))
    manifest = out_dir / "manifest.csv"
    write_manifest(manifest, rows)
    return manifest
