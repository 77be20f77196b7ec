import numpy as np
import pytest

from mvforensics.datagen import (ManipulationConfig, default_camera_models,
                                 apply_camera_pipeline, load_camera_dataset, load_clip,
                                 load_clip_set, make_authentic_clip, make_camera_dataset,
                                 make_manipulated_clip, reencode_clip, save_camera_dataset,
                                 save_clip, save_clip_set)
from mvforensics.datagen.scenes import make_scene, render_frame


class TestCameraDataset:
    def test_counts_and_histogram(self):
        ds = make_camera_dataset(4, 8, (64, 64), seed=7)
        assert len(ds) == 32
        hist = np.bincount(ds.labels, minlength=4)
        assert hist.tolist() == [8, 8, 8, 8]
        assert ds.frames.shape == (32, 3, 64, 64)

    def test_deterministic(self):
        a = make_camera_dataset(3, 4, (64, 64), seed=11)
        b = make_camera_dataset(3, 4, (64, 64), seed=11)
        assert np.array_equal(a.frames, b.frames)
        assert np.array_equal(a.labels, b.labels)

    def test_rejects_single_model(self):
        with pytest.raises(ValueError, match="2 camera models"):
            make_camera_dataset(1, 4, (64, 64), seed=0)

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError, match="divisible by 32"):
            make_camera_dataset(2, 2, (60, 64), seed=0)

    def test_specs_distinct(self):
        specs = default_camera_models(6, seed=3)
        sigs = {(s.filter_kernel, s.gamma, s.noise_std, s.quality) for s in specs}
        assert len(sigs) == 6

    def test_same_scene_different_model_differs(self):
        # separability ceiling: pipeline must leave a nonzero trace
        specs = default_camera_models(3, seed=5)
        scene = make_scene((64, 64), 9)
        base = render_frame(scene, 0)
        stamped = [apply_camera_pipeline(base, s, np.random.SeedSequence([1, s.model_id]))
                   for s in specs]
        for i in range(len(stamped)):
            for j in range(i + 1, len(stamped)):
                assert np.abs(stamped[i] - stamped[j]).max() > 0

    def test_scene_content_independent_of_model(self):
        ds = make_camera_dataset(2, 2, (64, 64), seed=21)
        # frames 0 and 1 are the same base scene through two pipelines:
        # strongly correlated but not identical
        a, b = ds.frames[0], ds.frames[1]
        assert ds.labels[0] != ds.labels[1]
        assert np.corrcoef(a.ravel(), b.ravel())[0, 1] > 0.9

    def test_png_roundtrip(self, tmp_path):
        ds = make_camera_dataset(2, 2, (64, 64), seed=2)
        save_camera_dataset(ds, tmp_path / "cam")
        back = load_camera_dataset(tmp_path / "cam")
        assert np.array_equal(back.labels, ds.labels)
        assert np.abs(back.frames - ds.frames).max() <= 0.5 / 255 + 1e-6


class TestManipulatedClips:
    def test_edit_labels_and_area(self, tiny_clip):
        cfg = ManipulationConfig(kind="edit", area_fraction_range=(0.05, 0.2),
                                 edit_ops=("blur",))
        clip = make_manipulated_clip(tiny_clip, cfg, seed=3)
        assert clip.labels.tolist() == [1] * clip.length
        h, w = clip.hw
        for mask in clip.masks:
            frac = mask.sum() / (h * w)
            assert 0.05 <= frac <= 0.2

    def test_masks_mark_altered_pixels(self, tiny_clip):
        cfg = ManipulationConfig(kind="edit", area_fraction_range=(0.05, 0.2),
                                 edit_ops=("noise",))
        clip = make_manipulated_clip(tiny_clip, cfg, seed=3)
        for t in range(clip.length):
            diff = np.abs(clip.frames[t] - tiny_clip.frames[t]).max(axis=0)
            changed = diff > 1e-6
            assert not changed[clip.masks[t] == 0].any()

    def test_temporal_inpaint_flickers(self):
        # static base so any in-mask change between frames comes from the
        # per-frame regeneration
        base = make_authentic_clip((64, 64), 5, seed=50, num_sprites=1, max_speed=0.0)
        cfg = ManipulationConfig(kind="temporal_inpaint", area_fraction_range=(0.1, 0.3))
        clip = make_manipulated_clip(base, cfg, seed=9)
        m = clip.masks[0] > 0
        for t in range(clip.length - 1):
            diff = np.abs(clip.frames[t + 1] - clip.frames[t]).max(axis=0)
            assert diff[m].max() > 0

    def test_deterministic(self, tiny_clip):
        cfg = ManipulationConfig(kind="splice", area_fraction_range=(0.1, 0.3))
        a = make_manipulated_clip(tiny_clip, cfg, seed=8)
        b = make_manipulated_clip(tiny_clip, cfg, seed=8)
        assert np.array_equal(a.frames, b.frames)
        assert np.array_equal(a.masks, b.masks)

    def test_rejects_manipulated_base(self, edited_clip):
        cfg = ManipulationConfig(kind="edit")
        with pytest.raises(ValueError, match="authentic"):
            make_manipulated_clip(edited_clip, cfg, seed=1)

    def test_unsatisfiable_area_errors(self, tiny_clip):
        cfg = ManipulationConfig(kind="edit", area_fraction_range=(1e-6, 2e-6))
        with pytest.raises(ValueError, match="area"):
            make_manipulated_clip(tiny_clip, cfg, seed=1)

    def test_config_validation(self):
        with pytest.raises(ValueError, match="0 < lo < hi < 1"):
            ManipulationConfig(area_fraction_range=(0.5, 0.2))
        with pytest.raises(ValueError, match="kind"):
            ManipulationConfig(kind="warp")


class TestReencode:
    def test_lossless_identity(self, edited_clip):
        out = reencode_clip(edited_clip, "lossless")
        assert np.array_equal(out.frames, edited_clip.frames)

    def test_stronger_quality_larger_error(self, edited_clip):
        # oracle: compute both errors on the same fixed clip
        medium = reencode_clip(edited_clip, "medium")
        strong = reencode_clip(edited_clip, "strong")
        err_m = np.abs(medium.frames - edited_clip.frames).mean()
        err_s = np.abs(strong.frames - edited_clip.frames).mean()
        assert err_s > err_m > 0

    def test_masks_and_labels_untouched(self, edited_clip):
        for q in ("lossless", "light", "medium", "strong"):
            out = reencode_clip(edited_clip, q)
            assert np.array_equal(out.masks, edited_clip.masks)
            assert np.array_equal(out.labels, edited_clip.labels)

    def test_unknown_quality(self, edited_clip):
        with pytest.raises(ValueError, match="unknown quality"):
            reencode_clip(edited_clip, "crf23")


class TestClipIO:
    def test_roundtrip(self, edited_clip, tmp_path):
        save_clip(edited_clip, tmp_path / "c0")
        back = load_clip(tmp_path / "c0")
        assert back.tag == edited_clip.tag
        assert np.array_equal(back.masks, edited_clip.masks)
        assert np.array_equal(back.labels, edited_clip.labels)
        assert np.abs(back.frames - edited_clip.frames).max() <= 0.5 / 255 + 1e-6

    def test_clip_set_roundtrip(self, tiny_clip, edited_clip, tmp_path):
        save_clip_set([tiny_clip, edited_clip], tmp_path / "set")
        back = load_clip_set(tmp_path / "set")
        assert len(back) == 2
        assert back[0].tag == "authentic" and back[1].tag == "edit"

    def test_label_mask_consistency_enforced(self, tiny_clip):
        from mvforensics.datagen import VideoClip
        masks = tiny_clip.masks.copy()
        masks[0, 0, 0] = 1
        with pytest.raises(ValueError, match="labels inconsistent"):
            VideoClip(tiny_clip.frames, masks, tiny_clip.labels, "authentic", {})
