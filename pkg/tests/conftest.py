"""Shared helpers: a cheap shallow architecture and in-memory tone corpora, so
trainer tests exercise the real loop without paying full-architecture compute."""

import numpy as np
import pytest

from wavecnn.audio import CLIP_SAMPLES, SAMPLE_RATE, standardize_samples
from wavecnn.data import AGES_MONTHS, Sample
from wavecnn.layers import LayerSpec
from wavecnn.model import build_from_specs


def tiny_specs(num_classes):
    return [
        LayerSpec("conv1d", channels=8, kernel=(64,), stride=(16,), padding="same"),
        LayerSpec("relu"),
        LayerSpec("conv1d", channels=num_classes, kernel=(8,), stride=(8,), padding="same"),
        LayerSpec("class_head", channels=num_classes),
    ]


def tiny_model(num_classes, seed=0):
    return build_from_specs(tiny_specs(num_classes), num_classes, seed=seed)


def tone_clip(freq_hz, rng, noise=0.05):
    t = np.arange(CLIP_SAMPLES) / SAMPLE_RATE
    phase = rng.uniform(0, 2 * np.pi)
    x = np.sin(2 * np.pi * freq_hz * t + phase) + noise * rng.standard_normal(CLIP_SAMPLES)
    return standardize_samples(x)


def tone_corpus(n_per_class, freqs_by_label, families=("F00",), seed=0,
                freq_override=None):
    """In-memory corpus: Sample list plus {clip_path: waveform} dict.

    freqs_by_label maps raw labels to tone frequencies; freq_override, when
    given, is called as (label, family) -> frequency to build family-dependent
    corpora.
    """
    rng = np.random.default_rng(seed)
    samples, clips = [], {}
    i = 0
    for label, freq in freqs_by_label.items():
        for _ in range(n_per_class):
            family = families[i % len(families)]
            hz = freq_override(label, family) if freq_override else freq
            path = f"mem://clip{i:04d}"
            samples.append(Sample(path, label,
                                  int(AGES_MONTHS[i % len(AGES_MONTHS)]), family))
            clips[path] = tone_clip(hz, rng)
            i += 1
    return samples, clips


@pytest.fixture
def two_tone_corpus():
    return tone_corpus(8, {"ids": 500.0, "ads": 2500.0})
