"""Derivation of coarser saliency granularities from fine-grained maps.

Three levels: FOI (the fine-grained map itself), AOI (its binarized support),
and BOI (the rasterized minimal rectangle enclosing all salient regions).
Two threshold conventions cover the two map origins: POSITIVE treats any
nonzero pixel as salient, HALF keeps only pixels strictly above 127.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import EmptySaliency, NotBinary, OutOfBounds
from .saliency import SaliencyMap


class GranularityLevel(Enum):
    BOI = "BOI"
    AOI = "AOI"
    FOI = "FOI"


class ThresholdMode(Enum):
    POSITIVE = "positive"  # value > 0   -> 255
    HALF = "half"          # value > 127 -> 255


@dataclass(frozen=True)
class GranularitySpec:
    """Granularity level plus the derivation parameters that produce it.

    erode_before_boi is only consulted when level is BOI.
    """

    level: GranularityLevel
    threshold_mode: ThresholdMode = ThresholdMode.POSITIVE
    erode_before_boi: bool = False


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with inclusive pixel coordinates."""

    min_x: int
    min_y: int
    max_x: int
    max_y: int

    def __post_init__(self):
        if self.min_x < 0 or self.min_y < 0:
            raise ValueError(f"negative rectangle coordinates: {self}")
        if self.max_x < self.min_x or self.max_y < self.min_y:
            raise ValueError(f"inverted rectangle: {self}")

    @property
    def width(self) -> int:
        return self.max_x - self.min_x + 1

    @property
    def height(self) -> int:
        return self.max_y - self.min_y + 1


def binarize(map_: SaliencyMap, mode: ThresholdMode) -> SaliencyMap:
    """Threshold to {0, 255}: POSITIVE keeps any nonzero pixel, HALF keeps > 127."""
    cut = 0 if mode is ThresholdMode.POSITIVE else 127
    return SaliencyMap(np.where(map_.pixels > cut, 255, 0).astype(np.uint8))


def erode_3x3(map_: SaliencyMap) -> SaliencyMap:
    """One erosion pass with a full 3x3 kernel.

    A pixel survives only if its whole 3x3 neighborhood is 255; out-of-image
    neighbors count as background, so the one-pixel border always erodes.
    """
    px = map_.pixels
    if not np.isin(px, (0, 255)).all():
        raise NotBinary("erosion expects a {0, 255} map; binarize first")
    h, w = px.shape
    padded = np.zeros((h + 2, w + 2), dtype=np.uint8)
    padded[1:-1, 1:-1] = px
    out = np.full(px.shape, 255, dtype=np.uint8)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            np.minimum(out, padded[dy:dy + h, dx:dx + w], out=out)
    return SaliencyMap(out)


def bounding_rectangle(map_: SaliencyMap) -> Rect:
    """Minimal rectangle enclosing every pixel with value > 0."""
    rows = np.flatnonzero(map_.pixels.any(axis=1))
    cols = np.flatnonzero(map_.pixels.any(axis=0))
    if rows.size == 0:
        raise EmptySaliency("map has no salient pixel")
    return Rect(int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))


def rasterize_rect(rect: Rect, width: int, height: int) -> SaliencyMap:
    """Paint the rectangle (inclusive) as 255 onto a zero map of the given size."""
    if rect.max_x >= width or rect.max_y >= height:
        raise OutOfBounds(f"{rect} does not fit in a {width}x{height} map")
    px = np.zeros((height, width), dtype=np.uint8)
    px[rect.min_y:rect.max_y + 1, rect.min_x:rect.max_x + 1] = 255
    return SaliencyMap(px)


def derive(foi: SaliencyMap, spec: GranularitySpec) -> SaliencyMap:
    """Derive the requested granularity from a fine-grained map.

    FOI returns the map unchanged. AOI binarizes with the spec's threshold
    mode. BOI binarizes, optionally erodes, then rasterizes the bounding
    rectangle of whatever remains; EmptySaliency propagates if nothing does.
    """
    if spec.level is GranularityLevel.FOI:
        return SaliencyMap(foi.pixels.copy())
    binary = binarize(foi, spec.threshold_mode)
    if spec.level is GranularityLevel.AOI:
        return binary
    if spec.erode_before_boi:
        binary = erode_3x3(binary)
    rect = bounding_rectangle(binary)
    return rasterize_rect(rect, foi.width, foi.height)
