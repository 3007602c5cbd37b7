"""Tests for the patch-feature memory-bank detector.

Covers descriptor extraction geometry, bank construction (dedup, coreset,
epoch accumulation), scoring semantics (k-NN distances, normalization,
monotonicity in the bank), the paste-feedback effect on scores, and exact
model persistence.
"""

import dataclasses

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from specshift.core import Image
from specshift.detector import (
    ModelConfig,
    TrainConfig,
    extract_patches,
    fit,
    load_model,
    save_model,
    score,
)
from specshift.repaste import RepasteConfig


def texture(seed, size=48):
    """Smooth mid-gray random texture, values well inside [0, 1]."""
    rng = np.random.default_rng(seed)
    base = gaussian_filter(rng.random((size, size)), sigma=3, mode="wrap")
    lo, hi = base.min(), base.max()
    return 0.3 + 0.4 * (base - lo) / (hi - lo)


def disk(size=48, cx=30, cy=18, r=4):
    yy, xx = np.mgrid[0:size, 0:size]
    return (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r


def train_images(n=8, size=48):
    return [Image.from_array(texture(seed, size)) for seed in range(n)]


def feature_rows(images, patch_size=8, stride=4):
    rows = [pf.vector for img in images for pf in extract_patches(img, patch_size, stride)]
    return np.array(rows)


MODEL_CFG = ModelConfig(patch_size=8, stride=4, k_neighbors=2, coreset_fraction=1.0)
OFF = TrainConfig(epochs=1, repaste=RepasteConfig(mode="off"))


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs,message",
        [
            (dict(patch_size=0), "patch_size"),
            (dict(stride=0), "stride"),
            (dict(k_neighbors=0), "k_neighbors"),
            (dict(coreset_fraction=0.0), "coreset_fraction"),
            (dict(coreset_fraction=1.5), "coreset_fraction"),
            (dict(grad_bins=1), "grad_bins"),
            (dict(coord_weight=-0.1), "coord_weight"),
        ],
    )
    def test_model_config_domains(self, kwargs, message):
        with pytest.raises(ValueError, match=message):
            ModelConfig(**kwargs)

    def test_train_config_epochs(self):
        with pytest.raises(ValueError, match="epochs"):
            TrainConfig(epochs=0)


class TestExtractPatches:
    def test_grid_count_at_256(self):
        img = Image.from_array(np.full((256, 256), 0.5))
        patches = extract_patches(img, patch_size=16, stride=8)
        assert len(patches) == 31 * 31

    def test_constant_image_descriptors(self):
        img = Image.from_array(np.full((24, 24), 0.5))
        patches = extract_patches(img, patch_size=8, stride=4)
        vectors = np.array([p.vector for p in patches])
        # Identical appearance everywhere; only the coordinate tail varies.
        assert np.ptp(vectors[:, :-2], axis=0) == pytest.approx(np.zeros(vectors.shape[1] - 2))
        assert np.all(vectors[:, 1] == 0.0)  # pooled standard deviation

    def test_patch_centers_form_stride_grid(self):
        img = Image.from_array(np.full((16, 16), 0.5))
        patches = extract_patches(img, patch_size=8, stride=4)
        assert len(patches) == 9
        expected = [3.5, 7.5, 11.5]
        assert sorted({p.center[0] for p in patches}) == expected
        assert sorted({p.center[1] for p in patches}) == expected
        assert patches[1].center == (7.5, 3.5)  # row-major grid order

    def test_shifting_content_by_one_stride_shifts_descriptors(self):
        rng = np.random.default_rng(0)
        base = rng.random((16, 20))
        shifted = np.roll(base, -4, axis=1)
        a = extract_patches(Image.from_array(base), 8, 4)
        b = extract_patches(Image.from_array(shifted), 8, 4)
        n_x = (20 - 8) // 4 + 1
        for row in range((16 - 8) // 4 + 1):
            # Patch (row, 2) of the original shows the content patch
            # (row, 1) sees after the shift; boundary columns are excluded
            # so gradients match exactly.
            va = a[row * n_x + 2].vector
            vb = b[row * n_x + 1].vector
            assert va[:-2] == pytest.approx(vb[:-2], abs=1e-12)

    def test_patch_larger_than_image(self):
        img = Image.from_array(np.full((8, 8), 0.5))
        with pytest.raises(ValueError, match="patch size"):
            extract_patches(img, patch_size=16, stride=4)

    def test_vectors_are_read_only(self):
        img = Image.from_array(np.full((8, 8), 0.5))
        patch = extract_patches(img, 8, 4)[0]
        with pytest.raises(ValueError):
            patch.vector[0] = 1.0


class TestFit:
    def test_off_mode_ignores_extra_epochs(self):
        images = train_images(4)
        one = fit(images, TrainConfig(epochs=1, repaste=RepasteConfig(mode="off")), MODEL_CFG)
        three = fit(images, TrainConfig(epochs=3, repaste=RepasteConfig(mode="off")), MODEL_CFG)
        assert np.array_equal(one.bank, three.bank)

    def test_full_coreset_banks_every_distinct_feature(self):
        images = train_images(3)
        model = fit(images, OFF, MODEL_CFG)
        expected = np.unique(feature_rows(images), axis=0)
        assert np.array_equal(model.bank, expected)

    def test_coreset_fraction_controls_bank_size(self):
        images = train_images(3)
        cfg = dataclasses.replace(MODEL_CFG, coreset_fraction=0.25)
        model = fit(images, OFF, cfg)
        unique = np.unique(feature_rows(images), axis=0)
        assert model.bank.shape[0] == int(np.ceil(0.25 * unique.shape[0]))
        kept = {tuple(r) for r in model.bank}
        assert kept <= {tuple(r) for r in unique}

    def test_fit_is_deterministic(self):
        images = train_images(4)
        cfg = TrainConfig(epochs=2, repaste=RepasteConfig(mode="mixup"))
        a = fit(images, cfg, MODEL_CFG)
        b = fit(images, cfg, MODEL_CFG)
        assert np.array_equal(a.bank, b.bank)

    def test_bank_ignores_image_order(self):
        images = train_images(4)
        fwd = fit(images, OFF, MODEL_CFG)
        rev = fit(list(reversed(images)), OFF, MODEL_CFG)
        assert np.array_equal(fwd.bank, rev.bank)

    def test_augmented_bank_extends_the_raw_bank(self):
        images = train_images(6)
        off = fit(images, OFF, MODEL_CFG)
        mix = fit(images, TrainConfig(epochs=2, repaste=RepasteConfig(mode="mixup")), MODEL_CFG)
        off_rows = {tuple(r) for r in off.bank}
        mix_rows = {tuple(r) for r in mix.bank}
        assert off_rows <= mix_rows
        assert len(mix_rows) > len(off_rows)

    def test_paste_feedback_lowers_scores_on_pasted_appearance(self):
        # One training image carries a small bright blob. Re-paste training
        # spreads blended copies of that blob into the bank, so a probe
        # showing the blended appearance scores lower than under a model
        # trained without augmentation; everywhere else can only drop too,
        # because the augmented bank is a superset of the raw one.
        blob = disk()
        grids = [texture(seed) for seed in range(8)]
        grids[2] = np.clip(grids[2] + 0.3 * blob, 0.0, 1.0)
        images = [Image.from_array(g) for g in grids]
        off = fit(images, OFF, MODEL_CFG)
        mix = fit(
            images, TrainConfig(epochs=4, repaste=RepasteConfig(mode="mixup", tau=0.9)), MODEL_CFG
        )
        probe = Image.from_array(np.clip(texture(99) + 0.15 * blob, 0.0, 1.0))
        map_off, _ = score(off, probe, raw=True)
        map_mix, _ = score(mix, probe, raw=True)
        assert np.all(map_mix.grid() <= map_off.grid() + 1e-12)
        assert map_mix.grid()[blob].mean() < map_off.grid()[blob].mean()

    def test_injected_defect_outscores_clean_source(self):
        images = train_images(8)
        model = fit(images, OFF, MODEL_CFG)
        clean = images[5]
        defect = Image.from_array(np.clip(texture(5) + 0.3 * disk(), 0.0, 1.0))
        _, s_clean = score(model, clean)
        _, s_defect = score(model, defect)
        assert s_defect > s_clean

    def test_empty_training_set(self):
        with pytest.raises(ValueError, match="empty"):
            fit([], OFF, MODEL_CFG)

    def test_mixed_dimensions_rejected(self):
        images = [Image.from_array(texture(0, 48)), Image.from_array(texture(1, 32))]
        with pytest.raises(ValueError, match="share dimensions"):
            fit(images, OFF, MODEL_CFG)

    def test_trained_on_passthrough(self):
        model = fit(train_images(2), OFF, MODEL_CFG, trained_on={"manifest": "x"})
        assert model.trained_on == {"manifest": "x"}


class TestScore:
    def test_training_image_scores_zero_with_self_in_bank(self):
        images = train_images(3)
        cfg = dataclasses.replace(MODEL_CFG, k_neighbors=1)
        model = fit(images, OFF, cfg)
        amap, image_score = score(model, images[0])
        assert image_score == 0.0
        assert np.all(amap.data == 0.0)

    def test_constant_distance_map_normalizes_to_zeros(self):
        flat = Image.from_array(np.full((16, 16), 0.4))
        model = fit([flat], OFF, dataclasses.replace(MODEL_CFG, k_neighbors=1))
        bright = Image.from_array(np.full((16, 16), 0.9))
        amap, image_score = score(model, bright)
        assert image_score > 0.0
        assert np.all(amap.data == 0.0)
        assert amap.normalized

    def test_normalized_map_bounds_and_raw_max(self):
        images = train_images(4)
        model = fit(images, OFF, MODEL_CFG)
        probe = Image.from_array(np.clip(texture(31) + 0.2 * disk(), 0.0, 1.0))
        amap, image_score = score(model, probe)
        raw_map, raw_score = score(model, probe, raw=True)
        assert amap.normalized and not raw_map.normalized
        assert amap.data.min() == 0.0 and amap.data.max() == 1.0
        assert raw_map.data.max() == image_score == raw_score

    def test_growing_the_bank_never_raises_distances(self):
        images = train_images(3)
        model = fit(images, OFF, MODEL_CFG)
        extra = model.bank[0] + 0.05
        grown = dataclasses.replace(model, bank=np.vstack([model.bank, extra]))
        probe = Image.from_array(texture(17))
        base, _ = score(model, probe, raw=True)
        more, _ = score(grown, probe, raw=True)
        assert np.all(more.grid() <= base.grid() + 1e-12)

    def test_bank_smaller_than_k_is_clamped(self):
        tiny = Image.from_array(np.full((8, 8), 0.5))
        model = fit([tiny], OFF, dataclasses.replace(MODEL_CFG, k_neighbors=5))
        assert model.bank.shape[0] == 1
        amap, image_score = score(model, tiny)
        assert image_score == 0.0

    def test_channel_mismatch(self):
        model = fit(train_images(2), OFF, MODEL_CFG)
        rgb = Image.from_array(np.full((48, 48, 3), 0.5))
        with pytest.raises(ValueError, match="channel mismatch"):
            score(model, rgb)


class TestPersistence:
    def test_round_trip_is_bit_exact(self, tmp_path):
        model = fit(train_images(3), OFF, MODEL_CFG, trained_on={"dataset": "t"})
        save_model(model, tmp_path / "m.bin")
        back = load_model(tmp_path / "m.bin")
        assert back.config == model.config
        assert (back.channels, back.image_width, back.image_height) == (
            model.channels, model.image_width, model.image_height,
        )
        assert back.normalization == model.normalization
        assert back.trained_on == model.trained_on
        assert np.array_equal(back.bank, model.bank)
        probe = Image.from_array(texture(23))
        amap_a, score_a = score(model, probe)
        amap_b, score_b = score(back, probe)
        assert score_a == score_b
        assert np.array_equal(amap_a.data, amap_b.data)

    def test_save_is_deterministic(self, tmp_path):
        model = fit(train_images(2), OFF, MODEL_CFG)
        save_model(model, tmp_path / "a.bin")
        save_model(model, tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()

    def test_rejects_wrong_format(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b'{"format": "other"}\n')
        with pytest.raises(ValueError, match="not a detector model"):
            load_model(tmp_path / "x.bin")

    def test_rejects_unsupported_version(self, tmp_path):
        model = fit(train_images(2), OFF, MODEL_CFG)
        save_model(model, tmp_path / "m.bin")
        blob = (tmp_path / "m.bin").read_bytes()
        head, _, body = blob.partition(b"\n")
        (tmp_path / "m.bin").write_bytes(head.replace(b'"version": 1', b'"version": 9') + b"\n" + body)
        with pytest.raises(ValueError, match="unsupported model version"):
            load_model(tmp_path / "m.bin")

    def test_rejects_truncated_payload(self, tmp_path):
        model = fit(train_images(2), OFF, MODEL_CFG)
        save_model(model, tmp_path / "m.bin")
        blob = (tmp_path / "m.bin").read_bytes()
        (tmp_path / "m.bin").write_bytes(blob[:-16])
        with pytest.raises(ValueError, match="header promises"):
            load_model(tmp_path / "m.bin")

    def test_rejects_headerless_binary(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(bytes(range(256)) * 4)
        with pytest.raises(ValueError, match="not a detector model"):
            load_model(tmp_path / "x.bin")
