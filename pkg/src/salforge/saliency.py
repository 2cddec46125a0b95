"""8-bit saliency maps, multi-annotator aggregation, and unit-interval views.

Heatmaps are stored row-major as numpy arrays of shape (height, width). The
8-bit domain (0..255) is the pixel / on-disk domain; training-side code works
on the float view in [0, 1] (UnitMap). All operations here are pure functions;
maps are safe to share across workers as long as callers treat them as
immutable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NoCorrectAnnotations


def round_half_away_from_zero(x: np.ndarray) -> np.ndarray:
    """Round to the nearest integer with halves away from zero."""
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


@dataclass(frozen=True)
class SaliencyMap:
    """Single-channel 8-bit intensity grid, shape (height, width)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 2 or px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError(f"expected a 2-D (height, width) array, got shape {px.shape}")
        if px.dtype != np.uint8:
            if not np.issubdtype(px.dtype, np.integer):
                raise ValueError(f"intensities must be integers, got dtype {px.dtype}")
            if px.min() < 0 or px.max() > 255:
                raise ValueError("intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def support(self) -> np.ndarray:
        """Boolean mask of pixels with value > 0."""
        return self.pixels > 0


@dataclass(frozen=True)
class AnnotationSet:
    """Raw per-annotator maps for one sample plus correctness flags.

    All maps must share dimensions; there is exactly one flag per map. The
    flag records whether the annotator classified the sample correctly, which
    is what gates a map's participation in aggregation.
    """

    sample_id: str
    annotator_maps: tuple[SaliencyMap, ...]
    annotator_correct: tuple[bool, ...]

    def __post_init__(self):
        maps = tuple(self.annotator_maps)
        flags = tuple(bool(f) for f in self.annotator_correct)
        if not maps:
            raise ValueError("annotation set needs at least one map")
        if len(flags) != len(maps):
            raise ValueError("need exactly one correctness flag per annotator map")
        w, h = maps[0].width, maps[0].height
        for m in maps[1:]:
            if (m.width, m.height) != (w, h):
                raise DimensionMismatch(
                    f"{self.sample_id}: annotator maps are {w}x{h} and {m.width}x{m.height}"
                )
        object.__setattr__(self, "annotator_maps", maps)
        object.__setattr__(self, "annotator_correct", flags)


@dataclass(frozen=True)
class UnitMap:
    """Float view of a heatmap with values in [0.0, 1.0], shape (height, width)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"expected a 2-D (height, width) array, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("values must lie in [0.0, 1.0]")
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]


def aggregate_annotations(annotations: AnnotationSet) -> SaliencyMap:
    """Average the maps of correctly-classifying annotators into one map.

    The per-pixel arithmetic mean over flagged maps is rounded half away from
    zero. Raises NoCorrectAnnotations when every flag is false.
    """
    chosen = [
        m.pixels
        for m, ok in zip(annotations.annotator_maps, annotations.annotator_correct)
        if ok
    ]
    if not chosen:
        raise NoCorrectAnnotations(f"{annotations.sample_id}: no correctly classified annotation")
    total = np.zeros(chosen[0].shape, dtype=np.float64)
    for px in chosen:
        total += px
    mean = total / len(chosen)
    return SaliencyMap(round_half_away_from_zero(mean).astype(np.uint8))


def to_unit(map_: SaliencyMap) -> UnitMap:
    """Scale 8-bit intensities into [0, 1] by dividing by 255."""
    return UnitMap(map_.pixels.astype(np.float64) / 255.0)


def from_unit(map_: UnitMap) -> SaliencyMap:
    """Quantize a unit map back to 8 bits (inverse of to_unit up to rounding)."""
    scaled = round_half_away_from_zero(map_.values * 255.0)
    return SaliencyMap(np.clip(scaled, 0, 255).astype(np.uint8))


def minmax_normalize_array(values: np.ndarray) -> np.ndarray:
    """Array-level min-max stretch; constant input maps to all zeros."""
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros(values.shape, dtype=np.float64)
    return (values - lo) / (hi - lo)


def minmax_normalize(map_: UnitMap) -> UnitMap:
    """Stretch values to span [0, 1]; a constant map normalizes to all zeros."""
    return UnitMap(minmax_normalize_array(map_.values))


def _sample_coords(n_in: int, n_out: int) -> np.ndarray:
    # corner-aligned sampling grid: endpoints map onto endpoints, so a
    # same-size resize is the identity
    if n_out == 1:
        return np.array([(n_in - 1) / 2.0])
    coords = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
    return np.clip(coords, 0.0, n_in - 1)


def resize_bilinear(map_: UnitMap, new_width: int, new_height: int) -> UnitMap:
    """Resample with bilinear interpolation, clamping samples at the edges."""
    if new_width < 1 or new_height < 1:
        raise ValueError("target dimensions must be at least 1x1")
    src = map_.values
    h, w = src.shape
    ys = _sample_coords(h, new_height)
    xs = _sample_coords(w, new_width)
    y0 = np.floor(ys).astype(int)
    x0 = np.floor(xs).astype(int)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bottom = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy) + bottom * fy
    return UnitMap(np.clip(out, 0.0, 1.0))
