"""Deterministic synthetic dataset generator.

Produces a desk-scale analog of a presentation-attack-detection task:
bona fide samples are smooth low-frequency textures (Gaussian-filtered
noise); attack samples add a localized high-frequency ring artifact at a
random in-bounds position. Each attack sample carries a ground-truth
fine-grained saliency map (a 255-peak Gaussian bump centered on the
artifact, sigma = artifact radius) plus simulated multi-annotator maps
(jittered copies, each flagged incorrect with a configurable probability).

The test split is distribution-shifted to emulate unknown attack variants:
either the artifact moves to a held-out image region or its amplitude is
scaled down. Everything is reproducible per seed; each sample draws from a
seed derived from (config seed, split, index), so generation may run in
parallel.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigInvalid
from .saliency import AnnotationSet, SaliencyMap, round_half_away_from_zero


class ShiftMode(Enum):
    ARTIFACT_MOVED = "artifact_moved"
    ARTIFACT_WEAKENED = "artifact_weakened"


@dataclass(frozen=True)
class SynthConfig:
    image_size: int = 32
    n_train: int = 100
    n_val: int = 60
    n_test: int = 160
    n_annotators: int = 3
    annotator_jitter: int = 2
    annotator_error_rate: float = 0.1
    shift_mode: ShiftMode = ShiftMode.ARTIFACT_WEAKENED
    seed: int = 7
    # texture / artifact shape; the shipped values are the frozen calibration
    texture_sigma: float = 1.2
    texture_contrast: float = 0.22
    artifact_radius: float = 3.0
    artifact_width: float = 1.1
    artifact_amplitude: float = 0.45
    weaken_factor: float = 0.5

    def validate(self):
        if self.image_size < 16:
            raise ConfigInvalid("image_size must be at least 16")
        for name in ("n_train", "n_val", "n_test"):
            n = getattr(self, name)
            if n < 4:
                raise ConfigInvalid(f"{name} must be at least 4 (2 per class)")
        if self.n_annotators < 1:
            raise ConfigInvalid("n_annotators must be at least 1")
        if self.annotator_jitter < 0:
            raise ConfigInvalid("annotator_jitter must be nonnegative")
        if not 0.0 <= self.annotator_error_rate <= 1.0:
            raise ConfigInvalid("annotator_error_rate must lie in [0, 1]")
        if not isinstance(self.shift_mode, ShiftMode):
            raise ConfigInvalid(f"unknown shift_mode {self.shift_mode!r}")
        for name in ("texture_sigma", "artifact_radius", "artifact_width",
                     "artifact_amplitude"):
            if getattr(self, name) <= 0:
                raise ConfigInvalid(f"{name} must be positive")
        if not 0.0 < self.weaken_factor <= 1.0:
            raise ConfigInvalid("weaken_factor must lie in (0, 1]")
        if self.texture_contrast <= 0:
            raise ConfigInvalid("texture_contrast must be positive")
        margin = self._margin()
        if 2 * margin + 2 >= self.image_size:
            raise ConfigInvalid("artifact does not fit: shrink it or grow image_size")
        return self

    def _margin(self) -> int:
        return int(np.ceil(self.artifact_radius + 2.0 * self.artifact_width)) + 1


@dataclass(frozen=True)
class SynthSample:
    """One generated sample; saliency fields are None for bona fide images."""

    sample_id: str
    image: np.ndarray  # (H, W) float64 in [0, 1]
    label: int         # 0 = bona fide, 1 = attack
    true_foi: SaliencyMap | None
    annotations: AnnotationSet | None


_SPLIT_CODES = {"train": 0, "val": 1, "test": 2, "mimic": 3}


def _texture(rng, size: int, config: SynthConfig) -> np.ndarray:
    noise = rng.standard_normal((size, size))
    tex = gaussian_filter(noise, config.texture_sigma, mode="reflect")
    tex = tex / tex.std()
    return np.clip(0.5 + config.texture_contrast * tex, 0.0, 1.0)


def _distances(size: int, cx: int, cy: int) -> np.ndarray:
    ys, xs = np.mgrid[0:size, 0:size]
    return np.sqrt((xs - cx) ** 2.0 + (ys - cy) ** 2.0)


def _ring(size: int, cx: int, cy: int, amplitude: float, config: SynthConfig) -> np.ndarray:
    d = _distances(size, cx, cy)
    envelope = np.exp(-((d - config.artifact_radius) ** 2) / (2.0 * config.artifact_width ** 2))
    return amplitude * envelope * np.cos(np.pi * d)


def _bump_map(size: int, cx: int, cy: int, sigma: float) -> SaliencyMap:
    d2 = _distances(size, cx, cy) ** 2
    bump = 255.0 * np.exp(-d2 / (2.0 * sigma ** 2))
    return SaliencyMap(round_half_away_from_zero(bump).astype(np.uint8))


def _center_range(config: SynthConfig, shifted: bool) -> tuple[int, int, int, int]:
    """Inclusive (x_lo, x_hi, y_lo, y_hi) for artifact centers."""
    size = config.image_size
    margin = config._margin()
    y_lo, y_hi = margin, size - 1 - margin
    if config.shift_mode is ShiftMode.ARTIFACT_MOVED:
        split = margin + int(0.6 * (size - 1 - 2 * margin))
        if shifted:
            return split + 1, size - 1 - margin, y_lo, y_hi
        return margin, split, y_lo, y_hi
    return margin, size - 1 - margin, y_lo, y_hi


def _make_sample(config: SynthConfig, split: str, index: int) -> SynthSample:
    rng = np.random.default_rng(np.random.SeedSequence((config.seed, _SPLIT_CODES[split], index)))
    size = config.image_size
    label = index % 2
    image = _texture(rng, size, config)
    sample_id = f"{split}_{index:04d}"
    if label == 0:
        return SynthSample(sample_id, image, 0, None, None)

    shifted = split == "test"
    x_lo, x_hi, y_lo, y_hi = _center_range(config, shifted)
    cx = int(rng.integers(x_lo, x_hi + 1))
    cy = int(rng.integers(y_lo, y_hi + 1))
    amplitude = config.artifact_amplitude
    if shifted and config.shift_mode is ShiftMode.ARTIFACT_WEAKENED:
        amplitude *= config.weaken_factor
    image = np.clip(image + _ring(size, cx, cy, amplitude, config), 0.0, 1.0)

    true_foi = _bump_map(size, cx, cy, config.artifact_radius)
    maps = []
    flags = []
    for _ in range(config.n_annotators):
        jx, jy = rng.integers(-config.annotator_jitter, config.annotator_jitter + 1, size=2)
        ax = int(np.clip(cx + jx, 0, size - 1))
        ay = int(np.clip(cy + jy, 0, size - 1))
        maps.append(_bump_map(size, ax, ay, config.artifact_radius))
        flags.append(bool(rng.random() >= config.annotator_error_rate))
    annotations = AnnotationSet(sample_id, tuple(maps), tuple(flags))
    return SynthSample(sample_id, image, 1, true_foi, annotations)


def generate_split(config: SynthConfig, split: str, count: int) -> list[SynthSample]:
    return [_make_sample(config, split, i) for i in range(count)]


def generate(config: SynthConfig):
    """Generate (train, val, test) sample lists; deterministic per seed."""
    config.validate()
    train = generate_split(config, "train", config.n_train)
    val = generate_split(config, "val", config.n_val)
    test = generate_split(config, "test", config.n_test)
    return train, val, test
