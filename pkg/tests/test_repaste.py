"""Tests for the re-paste augmentation: mask extraction, pixel blending,
and the sequential chain over a training stream.
"""

import numpy as np
import pytest

from specshift.core import AnomalyMap, Image, PixelMask
from specshift.repaste import RepasteConfig, extract_mask, repaste, repaste_chain


def amap_of(grid, normalized=True):
    return AnomalyMap.from_array(np.asarray(grid, dtype=np.float64), normalized=normalized)


def image_of(grid):
    return Image.from_array(np.asarray(grid, dtype=np.float64))


def const_image(value, size=4, block=None, block_value=0.0):
    grid = np.full((size, size), float(value))
    if block is not None:
        r0, r1, c0, c1 = block
        grid[r0:r1, c0:c1] = block_value
    return Image.from_array(grid)


def hot_above(threshold):
    """Score function: binary map marking pixels above ``threshold``."""

    def fn(img):
        grid = (img.pixels()[:, :, 0] > threshold).astype(np.float64)
        return AnomalyMap.from_array(grid, normalized=True)

    return fn


def bilinear_scalar(plane, width, height):
    """Corner-aligned bilinear resize of a 2D array, one pixel at a time."""
    plane = np.asarray(plane, dtype=np.float64)
    in_h, in_w = plane.shape
    ys = np.linspace(0, in_h - 1, height)
    xs = np.linspace(0, in_w - 1, width)
    out = np.empty((height, width))
    for r, y in enumerate(ys):
        y0 = min(int(np.floor(y)), in_h - 1)
        y1 = min(y0 + 1, in_h - 1)
        fy = y - y0
        for c, x in enumerate(xs):
            x0 = min(int(np.floor(x)), in_w - 1)
            x1 = min(x0 + 1, in_w - 1)
            fx = x - x0
            top = plane[y0, x0] * (1 - fx) + plane[y0, x1] * fx
            bot = plane[y1, x0] * (1 - fx) + plane[y1, x1] * fx
            out[r, c] = top * (1 - fy) + bot * fy
    return np.clip(out, plane.min(), plane.max())


class TestRepasteConfig:
    def test_defaults(self):
        cfg = RepasteConfig()
        assert cfg.tau == 0.9 and cfg.mode == "mixup" and not cfg.chain_on_raw

    @pytest.mark.parametrize("tau", [-0.1, 1.1])
    def test_tau_domain(self, tau):
        with pytest.raises(ValueError, match="tau"):
            RepasteConfig(tau=tau)

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown repaste mode"):
            RepasteConfig(mode="blend")


class TestExtractMask:
    def test_all_below_tau_gives_empty_mask(self):
        mask = extract_mask(amap_of(np.full((3, 3), 0.85)), 3, 3, RepasteConfig())
        assert mask.ones_count() == 0

    def test_all_one_map_gives_full_mask(self):
        mask = extract_mask(amap_of(np.ones((3, 3))), 6, 6, RepasteConfig())
        assert mask.ones_count() == 36

    def test_two_by_two_upsampled_matches_scalar_oracle(self):
        grid = [[1.0, 0.0], [0.0, 0.8]]
        cfg = RepasteConfig(tau=0.9)
        mask = extract_mask(amap_of(grid), 4, 4, cfg)
        expected = (bilinear_scalar(grid, 4, 4) > 0.9).astype(np.uint8)
        assert np.array_equal(mask.grid(), expected)
        # Only the hot corner survives the strict threshold.
        assert mask.ones_count() == 1 and mask.grid()[0, 0] == 1

    def test_threshold_is_strict(self):
        mask = extract_mask(amap_of(np.full((2, 2), 0.9)), 2, 2, RepasteConfig(tau=0.9))
        assert mask.ones_count() == 0

    def test_unnormalized_map_rejected(self):
        with pytest.raises(ValueError, match="normalized"):
            extract_mask(amap_of(np.ones((2, 2)), normalized=False), 2, 2, RepasteConfig())


class TestRepaste:
    def test_cold_map_returns_receiver_exactly(self):
        rng = np.random.default_rng(0)
        x_prev = image_of(rng.random((4, 4)))
        x_next = image_of(rng.random((4, 4)))
        cold = amap_of(np.zeros((4, 4)))
        for mode in ("mixup", "hard"):
            out = repaste(x_prev, cold, x_next, RepasteConfig(mode=mode))
            assert np.array_equal(out.pixels(), x_next.pixels())

    def test_full_mask_mixup_averages(self):
        out = repaste(
            const_image(0.2), amap_of(np.ones((4, 4))), const_image(0.6), RepasteConfig()
        )
        assert np.all(out.pixels() == 0.4)

    def test_full_mask_hard_copies_donor(self):
        rng = np.random.default_rng(1)
        x_prev = image_of(rng.random((4, 4)))
        out = repaste(
            x_prev, amap_of(np.ones((4, 4))), const_image(0.5), RepasteConfig(mode="hard")
        )
        assert np.array_equal(out.pixels(), x_prev.pixels())

    def test_off_mode_passes_receiver_through(self):
        x_next = const_image(0.3)
        out = repaste(const_image(0.9), amap_of(np.ones((4, 4))), x_next, RepasteConfig(mode="off"))
        assert out is x_next

    def test_mixed_mask_hand_oracle(self):
        x_prev = image_of([[0.2, 0.4], [0.6, 0.8]])
        x_next = image_of([[1.0, 0.0], [0.5, 0.3]])
        hot = amap_of([[1.0, 0.0], [0.0, 1.0]])
        mix = repaste(x_prev, hot, x_next, RepasteConfig(mode="mixup"))
        assert mix.pixels()[:, :, 0] == pytest.approx(
            np.array([[0.6, 0.0], [0.5, 0.55]]), abs=1e-15
        )
        hard = repaste(x_prev, hot, x_next, RepasteConfig(mode="hard"))
        assert hard.pixels()[:, :, 0] == pytest.approx(
            np.array([[0.2, 0.0], [0.5, 0.8]]), abs=1e-15
        )

    def test_mask_broadcasts_across_channels(self):
        rng = np.random.default_rng(2)
        x_prev = image_of(rng.random((3, 3, 3)))
        x_next = image_of(rng.random((3, 3, 3)))
        hot = amap_of([[1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        out = repaste(x_prev, hot, x_next, RepasteConfig())
        for ch in range(3):
            assert out.pixels()[0, 0, ch] == pytest.approx(
                (x_prev.pixels()[0, 0, ch] + x_next.pixels()[0, 0, ch]) / 2
            )
            assert out.pixels()[1, 1, ch] == x_next.pixels()[1, 1, ch]

    @pytest.mark.parametrize("seed", range(8))
    @pytest.mark.parametrize("mode", ["mixup", "hard"])
    def test_off_mask_pixels_bit_identical(self, seed, mode):
        rng = np.random.default_rng(seed)
        x_prev = image_of(rng.random((6, 6)))
        x_next = image_of(rng.random((6, 6)))
        amap = amap_of(rng.random((6, 6)))
        cfg = RepasteConfig(mode=mode, tau=0.5)
        out = repaste(x_prev, amap, x_next, cfg)
        mask = extract_mask(amap, 6, 6, cfg).grid().astype(bool)
        assert np.array_equal(out.pixels()[~mask], x_next.pixels()[~mask])

    @pytest.mark.parametrize("seed", range(8))
    def test_mixup_stays_between_inputs(self, seed):
        rng = np.random.default_rng(100 + seed)
        x_prev = image_of(rng.random((5, 5)))
        x_next = image_of(rng.random((5, 5)))
        amap = amap_of(rng.random((5, 5)))
        out = repaste(x_prev, amap, x_next, RepasteConfig(tau=0.3))
        lo = np.minimum(x_prev.pixels(), x_next.pixels())
        hi = np.maximum(x_prev.pixels(), x_next.pixels())
        assert np.all(out.pixels() >= lo - 1e-15) and np.all(out.pixels() <= hi + 1e-15)
        assert out.pixels().min() >= 0.0 and out.pixels().max() <= 1.0

    def test_modes_agree_where_inputs_agree(self):
        rng = np.random.default_rng(3)
        shared = rng.random((4, 4))
        x = image_of(shared)
        y = image_of(shared)
        amap = amap_of(rng.random((4, 4)))
        mix = repaste(x, amap, y, RepasteConfig(mode="mixup", tau=0.2))
        hard = repaste(x, amap, y, RepasteConfig(mode="hard", tau=0.2))
        assert np.array_equal(mix.pixels(), hard.pixels())

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            repaste(
                const_image(0.1, size=4),
                amap_of(np.ones((4, 4))),
                const_image(0.2, size=5),
                RepasteConfig(),
            )

    def test_map_resized_to_receiver_dims(self):
        # A 2x2 map drives a paste onto 4x4 images.
        x_prev = const_image(1.0, size=4)
        x_next = const_image(0.0, size=4)
        amap = amap_of([[1.0, 0.0], [0.0, 0.0]])
        out = repaste(x_prev, amap, x_next, RepasteConfig(mode="hard"))
        expected = (bilinear_scalar([[1.0, 0.0], [0.0, 0.0]], 4, 4) > 0.9).astype(float)
        assert np.array_equal(out.pixels()[:, :, 0], expected)


class TestRepasteChain:
    def chain_images(self):
        return [
            const_image(0.0, block=(0, 2, 0, 2), block_value=1.0),
            const_image(0.6),
            const_image(0.4),
        ]

    def test_empty_sequence_rejected(self):
        with pytest.raises(ValueError, match="at least one image"):
            repaste_chain([], hot_above(0.7), RepasteConfig())

    def test_off_mode_returns_inputs(self):
        images = self.chain_images()
        out = repaste_chain(images, hot_above(0.7), RepasteConfig(mode="off"))
        assert all(a is b for a, b in zip(out, images))

    def test_constant_zero_scores_leave_stream_unchanged(self):
        images = self.chain_images()
        cold = lambda img: amap_of(np.zeros((4, 4)))  # noqa: E731
        out = repaste_chain(images, cold, RepasteConfig())
        assert len(out) == len(images)
        for got, src in zip(out, images):
            assert np.array_equal(got.pixels(), src.pixels())

    def test_three_image_step_through(self):
        # Image 1 carries a hot square; the square blends onto image 2 at
        # (1.0+0.6)/2 = 0.8, which still scores hot, so it blends onto
        # image 3 at (0.8+0.4)/2 = 0.6 in the same place.
        out = repaste_chain(self.chain_images(), hot_above(0.7), RepasteConfig())
        assert np.array_equal(out[0].pixels(), self.chain_images()[0].pixels())
        second = out[1].pixels()[:, :, 0]
        assert second[:2, :2] == pytest.approx(np.full((2, 2), 0.8))
        assert second[2:, :] == pytest.approx(np.full((2, 4), 0.6))
        third = out[2].pixels()[:, :, 0]
        assert third[:2, :2] == pytest.approx(np.full((2, 2), 0.6))
        assert third[2:, :] == pytest.approx(np.full((2, 4), 0.4))

    def test_chain_on_raw_scores_the_unaugmented_stream(self):
        # The raw second image is a cold constant, so nothing reaches the
        # third image even though the augmented second image scores hot.
        images = self.chain_images()
        cfg = RepasteConfig(chain_on_raw=True)
        out = repaste_chain(images, hot_above(0.7), cfg)
        assert np.array_equal(out[2].pixels(), images[2].pixels())
        # In-stream chaining does reach it.
        flowing = repaste_chain(images, hot_above(0.7), RepasteConfig())
        assert not np.array_equal(flowing[2].pixels(), images[2].pixels())

    def test_causality_prefix_stability(self):
        images = self.chain_images() + [const_image(0.9)]
        full = repaste_chain(images, hot_above(0.7), RepasteConfig())
        prefix = repaste_chain(images[:3], hot_above(0.7), RepasteConfig())
        for a, b in zip(prefix, full[:3]):
            assert np.array_equal(a.pixels(), b.pixels())

    def test_length_preserved_and_first_untouched(self):
        images = self.chain_images()
        out = repaste_chain(images, hot_above(0.7), RepasteConfig(mode="hard"))
        assert len(out) == 3
        assert np.array_equal(out[0].pixels(), images[0].pixels())

    def test_score_fn_errors_propagate(self):
        def broken(img):
            raise RuntimeError("model unavailable")

        with pytest.raises(RuntimeError, match="model unavailable"):
            repaste_chain(self.chain_images(), broken, RepasteConfig())

    def test_rerun_is_deterministic(self):
        images = self.chain_images()
        a = repaste_chain(images, hot_above(0.7), RepasteConfig())
        b = repaste_chain(images, hot_above(0.7), RepasteConfig())
        for x, y in zip(a, b):
            assert np.array_equal(x.pixels(), y.pixels())
