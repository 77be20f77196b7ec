"""VideoClip container and its on-disk layout (PNG frames + JSON sidecar)."""

import json
import os
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

MANIPULATION_TAGS = ("authentic", "splice", "edit", "temporal_inpaint")


@dataclass
class VideoClip:
    frames: np.ndarray            # (T, 3, H, W) float32 in [0,1]
    masks: np.ndarray             # (T, H, W) uint8, 1 = manipulated pixel
    labels: np.ndarray            # (T,) uint8, 1 iff the frame's mask is nonzero
    tag: str = "authentic"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.masks = np.asarray(self.masks, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        validate_clip(self)

    @property
    def length(self):
        return self.frames.shape[0]

    @property
    def hw(self):
        return self.frames.shape[2], self.frames.shape[3]

    def copy(self):
        return VideoClip(self.frames.copy(), self.masks.copy(), self.labels.copy(),
                         self.tag, dict(self.meta))


def validate_clip(clip: VideoClip):
    t, c, h, w = clip.frames.shape
    if t < 5:
        raise ValueError(f"clip needs at least 5 frames for temporal windows, got {t}")
    if c != 3:
        raise ValueError(f"frames must be RGB, got {c} channels")
    if h % 32 or w % 32:
        raise ValueError(f"frame size must be divisible by 32, got {h}x{w}")
    if clip.masks.shape != (t, h, w):
        raise ValueError(f"masks shape {clip.masks.shape} does not match frames {(t, h, w)}")
    if clip.labels.shape != (t,):
        raise ValueError("labels must be one per frame")
    if clip.tag not in MANIPULATION_TAGS:
        raise ValueError(f"unknown manipulation tag {clip.tag!r}")
    derived = (clip.masks.reshape(t, -1).max(axis=1) > 0).astype(np.uint8)
    if not np.array_equal(derived, clip.labels):
        raise ValueError("labels inconsistent with masks: label must be 1 iff mask is nonzero")


def labels_from_masks(masks: np.ndarray) -> np.ndarray:
    t = masks.shape[0]
    return (masks.reshape(t, -1).max(axis=1) > 0).astype(np.uint8)


def save_clip(clip: VideoClip, directory):
    os.makedirs(directory, exist_ok=True)
    for i, frame in enumerate(clip.frames):
        arr = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(arr, mode="RGB").save(os.path.join(directory, f"frame_{i:04d}.png"))
    for i, mask in enumerate(clip.masks):
        Image.fromarray((mask > 0)).save(os.path.join(directory, f"mask_{i:04d}.png"), bits=1)
    sidecar = {
        "labels": clip.labels.tolist(),
        "manipulation_tag": clip.tag,
        "seed": clip.meta.get("seed"),
        "config": clip.meta.get("config", {}),
    }
    with open(os.path.join(directory, "meta.json"), "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_clip(directory) -> VideoClip:
    meta_path = os.path.join(directory, "meta.json")
    if not os.path.isfile(meta_path):
        raise FileNotFoundError(f"not a clip directory (no meta.json): {directory}")
    with open(meta_path) as fh:
        sidecar = json.load(fh)
    frames, masks = [], []
    i = 0
    while True:
        fp = os.path.join(directory, f"frame_{i:04d}.png")
        if not os.path.isfile(fp):
            break
        frame = np.asarray(Image.open(fp), dtype=np.float32) / 255.0
        frames.append(frame.transpose(2, 0, 1))
        mask = np.asarray(Image.open(os.path.join(directory, f"mask_{i:04d}.png")))
        masks.append((mask > 0).astype(np.uint8))
        i += 1
    if not frames:
        raise FileNotFoundError(f"no frames found in {directory}")
    return VideoClip(
        np.stack(frames), np.stack(masks),
        np.asarray(sidecar["labels"], dtype=np.uint8),
        sidecar["manipulation_tag"],
        {"seed": sidecar.get("seed"), "config": sidecar.get("config", {})},
    )


def save_clip_set(clips, root):
    os.makedirs(root, exist_ok=True)
    names = []
    for i, clip in enumerate(clips):
        name = f"clip_{i:04d}"
        save_clip(clip, os.path.join(root, name))
        names.append(name)
    with open(os.path.join(root, "manifest.json"), "w") as fh:
        json.dump({"clips": names}, fh, indent=1)


def load_clip_set(root):
    manifest = os.path.join(root, "manifest.json")
    if os.path.isfile(manifest):
        with open(manifest) as fh:
            names = json.load(fh)["clips"]
    else:
        names = sorted(d for d in os.listdir(root)
                       if os.path.isfile(os.path.join(root, d, "meta.json")))
    if not names:
        raise FileNotFoundError(f"no clips found under {root}")
    return [load_clip(os.path.join(root, n)) for n in names]
