"""Clip manipulation: splices, local edits, temporally independent inpaints,
plus the lossy re-encode used for compression robustness sweeps."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter, shift as nd_shift

from .camera import block_dct_quantize
from .clips import VideoClip, labels_from_masks
from .scenes import render_clip_frames

EDIT_OPS = ("blur", "sharpen", "contrast", "noise")
MANIPULATION_KINDS = ("splice", "edit", "temporal_inpaint")

# quality -> block-DCT quantization step for re-encoding
QUALITY_LADDER = {"lossless": 0.0, "light": 0.005, "medium": 0.015, "strong": 0.04}


@dataclass
class ManipulationConfig:
    kind: str = "edit"
    area_fraction_range: tuple = (0.08, 0.30)
    edit_ops: tuple = ("blur",)
    splice_source: Optional[object] = None   # VideoClip or None (fresh scene from seed)
    temporal_independence: bool = False

    def __post_init__(self):
        lo, hi = self.area_fraction_range
        if not (0.0 < lo < hi < 1.0):
            raise ValueError(f"area fraction range must satisfy 0 < lo < hi < 1, got ({lo}, {hi})")
        if self.kind not in MANIPULATION_KINDS:
            raise ValueError(f"unknown manipulation kind {self.kind!r}")
        bad = set(self.edit_ops) - set(EDIT_OPS)
        if bad:
            raise ValueError(f"unknown edit ops: {sorted(bad)}")


def make_authentic_clip(hw, length, seed, num_sprites=2, max_speed=2.0) -> VideoClip:
    frames, _ = render_clip_frames(hw, length, seed, num_sprites=num_sprites, max_speed=max_speed)
    t, _, h, w = frames.shape
    masks = np.zeros((t, h, w), dtype=np.uint8)
    return VideoClip(frames, masks, labels_from_masks(masks), "authentic",
                     {"seed": int(seed), "config": {"hw": [h, w], "length": length}})


def _sample_region(rng, hw, lo, hi, max_tries=200) -> np.ndarray:
    """Random rectangle or ellipse whose area fraction lands inside [lo, hi]."""
    h, w = hw
    if hi * h * w < 1.0:
        raise ValueError(f"area range ({lo}, {hi}) allows no whole pixel at {h}x{w}")
    for _ in range(max_tries):
        frac = rng.uniform(lo, hi)
        aspect = rng.uniform(0.5, 2.0)
        area = frac * h * w
        rh = int(round(np.sqrt(area * aspect)))
        rw = int(round(np.sqrt(area / aspect)))
        rh, rw = max(2, min(rh, h - 2)), max(2, min(rw, w - 2))
        y0 = int(rng.integers(0, h - rh + 1))
        x0 = int(rng.integers(0, w - rw + 1))
        mask = np.zeros((h, w), dtype=np.uint8)
        if rng.uniform() < 0.5:
            mask[y0:y0 + rh, x0:x0 + rw] = 1
        else:
            yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
            cy, cx = y0 + rh / 2, x0 + rw / 2
            # ellipse of equal bounding box, scaled so areas stay comparable
            e = ((yy - cy) / (rh / 2 * 1.128)) ** 2 + ((xx - cx) / (rw / 2 * 1.128)) ** 2
            mask[e <= 1.0] = 1
        got = mask.sum() / (h * w)
        if lo <= got <= hi:
            return mask
    raise ValueError(f"could not satisfy area fraction range ({lo}, {hi}) for {h}x{w} regions")


def _apply_edits(region_frames, ops, rng):
    out = region_frames.copy()
    for op in ops:
        if op == "blur":
            out = np.stack([gaussian_filter(f, sigma=(0, 1.5, 1.5)) for f in out])
        elif op == "sharpen":
            blurred = np.stack([gaussian_filter(f, sigma=(0, 1.0, 1.0)) for f in out])
            out = np.clip(2.0 * out - blurred, 0.0, 1.0)
        elif op == "contrast":
            out = np.clip(0.5 + 1.6 * (out - 0.5), 0.0, 1.0)
        elif op == "noise":
            out = np.clip(out + rng.normal(0, 0.05, size=out.shape).astype(np.float32), 0.0, 1.0)
    return out.astype(np.float32)


def _splice_content(base: VideoClip, cfg: ManipulationConfig, rng, seed):
    if cfg.splice_source is not None:
        src = cfg.splice_source
        if src.frames.shape != base.frames.shape:
            raise ValueError("splice source must match the base clip shape")
        return src.frames
    frames, _ = render_clip_frames(base.hw, base.length, int(seed) + 0x5E11CE)
    return frames


def _temporal_inpaint_content(base: VideoClip, rng):
    """Per-frame regenerated region content: the base scene with an independent
    subpixel jitter and micro-noise each frame. Spatially it blends in; across
    time it flickers."""
    out = np.empty_like(base.frames)
    for t in range(base.length):
        dy, dx = rng.uniform(-0.75, 0.75, size=2)
        warped = np.stack([nd_shift(ch, (dy, dx), order=1, mode="nearest")
                           for ch in base.frames[t]])
        noise = rng.normal(0, 0.012, size=warped.shape).astype(np.float32)
        out[t] = np.clip(warped + noise, 0.0, 1.0)
    return out


def make_manipulated_clip(base: VideoClip, cfg: ManipulationConfig, seed: int) -> VideoClip:
    if base.labels.any() or base.masks.any():
        raise ValueError("base clip must be authentic (all masks zero)")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xA5]))
    lo, hi = cfg.area_fraction_range
    region = _sample_region(rng, base.hw, lo, hi)

    if cfg.kind == "edit":
        content = _apply_edits(base.frames, cfg.edit_ops, rng)
        if cfg.temporal_independence:
            content = _temporal_inpaint_content(
                VideoClip(content, np.zeros_like(base.masks), np.zeros_like(base.labels),
                          "authentic", {}), rng)
    elif cfg.kind == "splice":
        content = _splice_content(base, cfg, rng, seed)
        if cfg.temporal_independence:
            order = rng.permutation(base.length)
            content = content[order]
    else:  # temporal_inpaint
        content = _temporal_inpaint_content(base, rng)

    frames = base.frames.copy()
    m = region.astype(np.float32)[None]
    for t in range(base.length):
        frames[t] = frames[t] * (1 - m) + content[t] * m
    masks = np.repeat(region[None], base.length, axis=0).astype(np.uint8)
    meta = {"seed": int(seed), "config": {
        "kind": cfg.kind, "area_fraction_range": list(cfg.area_fraction_range),
        "edit_ops": list(cfg.edit_ops), "temporal_independence": cfg.temporal_independence,
    }}
    return VideoClip(frames.astype(np.float32), masks, labels_from_masks(masks), cfg.kind, meta)


def reencode_clip(clip: VideoClip, quality: str) -> VideoClip:
    """Lossy re-encode on a discrete quality ladder; masks and labels unchanged."""
    if quality not in QUALITY_LADDER:
        raise ValueError(f"unknown quality {quality!r}; choose from {sorted(QUALITY_LADDER)}")
    step = QUALITY_LADDER[quality]
    out = clip.copy()
    if step > 0.0:
        out.frames = np.stack([block_dct_quantize(f, step) for f in clip.frames])
    out.meta = dict(clip.meta)
    out.meta["reencoded_quality"] = quality
    return out
