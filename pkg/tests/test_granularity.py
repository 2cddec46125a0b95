"""Granularity derivation: thresholds, erosion, rectangles, and the chains."""
import numpy as np
import pytest

from salforge.errors import EmptySaliency, NotBinary, OutOfBounds
from salforge.granularity import (
    GranularityLevel,
    GranularitySpec,
    Rect,
    ThresholdMode,
    binarize,
    bounding_rectangle,
    derive,
    erode_3x3,
    rasterize_rect,
)
from salforge.saliency import SaliencyMap


def smap(arr):
    return SaliencyMap(np.asarray(arr, dtype=np.uint8))


def binarize_oracle(px, cut):
    out = np.zeros_like(px)
    for y in range(px.shape[0]):
        for x in range(px.shape[1]):
            out[y, x] = 255 if px[y, x] > cut else 0
    return out


def erode_oracle(px):
    h, w = px.shape
    out = np.zeros_like(px)
    for y in range(h):
        for x in range(w):
            keep = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    ny, nx = y + dy, x + dx
                    inside = 0 <= ny < h and 0 <= nx < w
                    if not inside or px[ny, nx] != 255:
                        keep = False
            out[y, x] = 255 if keep else 0
    return out


def bbox_oracle(px):
    xs, ys = [], []
    for y in range(px.shape[0]):
        for x in range(px.shape[1]):
            if px[y, x] > 0:
                xs.append(x)
                ys.append(y)
    return min(xs), min(ys), max(xs), max(ys)


class TestBinarize:
    def test_half_threshold_boundary(self):
        m = smap([[127, 128]])
        out = binarize(m, ThresholdMode.HALF)
        assert list(out.pixels[0]) == [0, 255]

    def test_positive_keeps_any_nonzero(self):
        m = smap([[0, 1, 255]])
        out = binarize(m, ThresholdMode.POSITIVE)
        assert list(out.pixels[0]) == [0, 255, 255]

    @pytest.mark.parametrize("mode", list(ThresholdMode))
    def test_zero_map_stays_zero(self, mode):
        out = binarize(smap(np.zeros((5, 5))), mode)
        assert not out.pixels.any()

    @pytest.mark.parametrize("mode,cut", [(ThresholdMode.POSITIVE, 0), (ThresholdMode.HALF, 127)])
    def test_random_matches_predicate_oracle(self, mode, cut):
        rng = np.random.default_rng(21)
        px = rng.integers(0, 256, (32, 32)).astype(np.uint8)
        out = binarize(smap(px), mode)
        assert np.array_equal(out.pixels, binarize_oracle(px, cut))

    def test_idempotent_under_positive_rebinarize(self):
        rng = np.random.default_rng(22)
        px = rng.integers(0, 256, (16, 16)).astype(np.uint8)
        for mode in ThresholdMode:
            once = binarize(smap(px), mode)
            again = binarize(once, ThresholdMode.POSITIVE)
            assert np.array_equal(once.pixels, again.pixels)


class TestErode:
    def test_full_map_keeps_interior_only(self):
        out = erode_3x3(smap(np.full((5, 7), 255)))
        expected = np.zeros((5, 7), dtype=np.uint8)
        expected[1:-1, 1:-1] = 255
        assert np.array_equal(out.pixels, expected)

    def test_isolated_pixel_vanishes(self):
        px = np.zeros((7, 7), dtype=np.uint8)
        px[3, 4] = 255
        assert not erode_3x3(smap(px)).pixels.any()

    def test_random_matches_neighborhood_oracle(self):
        rng = np.random.default_rng(23)
        px = (rng.random((32, 32)) < 0.7).astype(np.uint8) * 255
        out = erode_3x3(smap(px))
        assert np.array_equal(out.pixels, erode_oracle(px))

    def test_rejects_nonbinary(self):
        with pytest.raises(NotBinary):
            erode_3x3(smap([[0, 128]]))

    def test_support_shrinks(self):
        rng = np.random.default_rng(24)
        for _ in range(10):
            px = (rng.random((12, 12)) < 0.8).astype(np.uint8) * 255
            out = erode_3x3(smap(px))
            assert not np.any(out.pixels & ~px)


class TestBoundingRectangle:
    def test_single_pixel(self):
        px = np.zeros((6, 6), dtype=np.uint8)
        px[3, 2] = 7
        assert bounding_rectangle(smap(px)) == Rect(2, 3, 2, 3)

    def test_full_map(self):
        assert bounding_rectangle(smap(np.full((4, 9), 1))) == Rect(0, 0, 8, 3)

    def test_empty_map_raises(self):
        with pytest.raises(EmptySaliency):
            bounding_rectangle(smap(np.zeros((3, 3))))

    def test_random_sparse_matches_scan_oracle(self):
        rng = np.random.default_rng(25)
        for _ in range(20):
            px = (rng.random((15, 11)) < 0.05).astype(np.uint8) * rng.integers(1, 256)
            if not px.any():
                px[rng.integers(0, 15), rng.integers(0, 11)] = 9
            rect = bounding_rectangle(smap(px))
            assert (rect.min_x, rect.min_y, rect.max_x, rect.max_y) == bbox_oracle(px)

    def test_minimality_every_edge_touches(self):
        rng = np.random.default_rng(26)
        for _ in range(20):
            px = (rng.random((10, 10)) < 0.15).astype(np.uint8) * 255
            if not px.any():
                continue
            r = bounding_rectangle(smap(px))
            assert px[r.min_y, :].any() and px[r.max_y, :].any()
            assert px[:, r.min_x].any() and px[:, r.max_x].any()


class TestRasterize:
    def test_full_rect_is_all_255(self):
        out = rasterize_rect(Rect(0, 0, 6, 3), 7, 4)
        assert np.all(out.pixels == 255)

    def test_center_pixel(self):
        out = rasterize_rect(Rect(1, 1, 1, 1), 3, 3)
        expected = np.zeros((3, 3), dtype=np.uint8)
        expected[1, 1] = 255
        assert np.array_equal(out.pixels, expected)

    def test_random_rect_matches_membership_oracle(self):
        rng = np.random.default_rng(27)
        for _ in range(20):
            x0, y0 = rng.integers(0, 6, 2)
            x1 = rng.integers(x0, 8)
            y1 = rng.integers(y0, 6)
            out = rasterize_rect(Rect(int(x0), int(y0), int(x1), int(y1)), 8, 6)
            for y in range(6):
                for x in range(8):
                    inside = x0 <= x <= x1 and y0 <= y <= y1
                    assert out.pixels[y, x] == (255 if inside else 0)

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            rasterize_rect(Rect(0, 0, 8, 2), 8, 6)


def blob_map(h=16, w=16):
    px = np.zeros((h, w), dtype=np.uint8)
    px[4:9, 6:11] = np.arange(25).reshape(5, 5) * 10 + 5
    return smap(px)


class TestDerive:
    def test_foi_is_identity_copy(self):
        m = blob_map()
        out = derive(m, GranularitySpec(GranularityLevel.FOI))
        assert np.array_equal(out.pixels, m.pixels)
        assert out.pixels is not m.pixels

    def test_human_pipeline_composes_per_step(self):
        # positive threshold, no erosion: AOI is the blob support, BOI is the
        # blob's bounding box rasterized
        m = blob_map()
        aoi = derive(m, GranularitySpec(GranularityLevel.AOI))
        assert np.array_equal(aoi.pixels > 0, m.pixels > 0)
        boi = derive(m, GranularitySpec(GranularityLevel.BOI))
        rect = bounding_rectangle(binarize(m, ThresholdMode.POSITIVE))
        assert np.array_equal(boi.pixels, rasterize_rect(rect, m.width, m.height).pixels)

    def test_mimic_iris_lone_peak_erodes_to_empty(self):
        px = np.zeros((9, 9), dtype=np.uint8)
        px[4, 4] = 200  # the only pixel above one half
        spec = GranularitySpec(GranularityLevel.BOI, ThresholdMode.HALF, erode_before_boi=True)
        with pytest.raises(EmptySaliency):
            derive(smap(px), spec)

    def test_deterministic(self):
        m = blob_map()
        spec = GranularitySpec(GranularityLevel.BOI)
        a = derive(m, spec)
        b = derive(m, spec)
        assert np.array_equal(a.pixels, b.pixels)


class TestCoverageChains:
    def test_positive_mode_chain(self):
        rng = np.random.default_rng(28)
        for _ in range(20):
            px = (rng.random((12, 12)) < 0.2) * rng.integers(1, 256, (12, 12))
            px = px.astype(np.uint8)
            if not px.any():
                continue
            m = smap(px)
            aoi = derive(m, GranularitySpec(GranularityLevel.AOI))
            boi = derive(m, GranularitySpec(GranularityLevel.BOI))
            assert np.array_equal(aoi.pixels > 0, m.pixels > 0)
            assert np.all((aoi.pixels > 0) <= (boi.pixels > 0))

    def test_half_mode_support_shrinks(self):
        rng = np.random.default_rng(29)
        px = rng.integers(0, 256, (12, 12)).astype(np.uint8)
        m = smap(px)
        aoi = derive(m, GranularitySpec(GranularityLevel.AOI, ThresholdMode.HALF))
        assert np.all((aoi.pixels > 0) <= (m.pixels > 0))
