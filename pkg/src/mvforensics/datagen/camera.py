"""Synthetic camera models: each class is a distinct processing pipeline
(fixed 3x3 filter -> gamma -> sensor noise -> block-DCT re-encode) stamped onto
scene content that is drawn independently of the class."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import convolve

from .scenes import make_scene, render_frame

# quantization step ladder for the block-DCT re-encode stage; index 0 = lossless
QUANT_STEPS = (0.0, 0.004, 0.012, 0.03)

_BASE_KERNELS = (
    np.array([[0, 0, 0], [0, 1, 0], [0, 0, 0]], dtype=np.float32),
    np.array([[1, 2, 1], [2, 4, 2], [1, 2, 1]], dtype=np.float32) / 16.0,
    np.array([[0, -1, 0], [-1, 5, -1], [0, -1, 0]], dtype=np.float32),
    np.array([[3, 2, 0], [2, 0, 0], [0, 0, -3]], dtype=np.float32) / 4.0,
    np.array([[0, 1, 0], [1, 2, 1], [0, 1, 0]], dtype=np.float32) / 6.0,
    np.array([[-1, 0, 1], [-2, 6, 2], [-1, 0, 1]], dtype=np.float32) / 4.0,
)

# per-model sensor noise levels; spaced far enough apart that local noise
# statistics alone carry class information
_NOISE_LEVELS = (0.0, 0.02, 0.045, 0.075)


@dataclass(frozen=True)
class CameraModelSpec:
    model_id: int
    filter_kernel: tuple      # 3x3 nested tuple, hashable so specs stay comparable
    gamma: float
    noise_std: float
    quality: int

    def kernel(self) -> np.ndarray:
        return np.asarray(self.filter_kernel, dtype=np.float32)


def default_camera_models(num_models: int, seed: int):
    """Deterministic list of mutually distinct camera model pipelines."""
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xCA]))
    specs = []
    for m in range(num_models):
        base = _BASE_KERNELS[m % len(_BASE_KERNELS)].copy()
        # small seeded perturbation keeps kernels distinct past the base set
        base = base + rng.normal(0.0, 0.01, size=(3, 3)).astype(np.float32)
        if abs(base.sum()) > 1e-3:
            base /= base.sum()
        gamma = float(0.7 + 0.3 * m + rng.uniform(0, 0.02))
        noise_std = float(_NOISE_LEVELS[m % len(_NOISE_LEVELS)] + 0.004 * (m // len(_NOISE_LEVELS)))
        quality = int((m + 1) % len(QUANT_STEPS)) if num_models > 1 else 0
        specs.append(CameraModelSpec(
            model_id=m,
            filter_kernel=tuple(tuple(float(v) for v in row) for row in base),
            gamma=gamma, noise_std=noise_std, quality=quality,
        ))
    signatures = {(s.filter_kernel, s.gamma, s.noise_std, s.quality) for s in specs}
    assert len(signatures) == num_models, "camera model pipelines must be distinct"
    return specs


def block_dct_quantize(frame: np.ndarray, step: float, block: int = 8) -> np.ndarray:
    """Quantize 8x8 block-DCT coefficients per channel; step 0 is the identity."""
    if step <= 0.0:
        return frame.copy()
    from scipy.fft import dctn, idctn
    c, h, w = frame.shape
    if h % block or w % block:
        raise ValueError(f"frame dims must be divisible by {block}, got {h}x{w}")
    x = frame.reshape(c, h // block, block, w // block, block).transpose(0, 1, 3, 2, 4)
    coef = dctn(x, axes=(-2, -1), norm="ortho")
    coef = np.round(coef / step) * step
    x = idctn(coef, axes=(-2, -1), norm="ortho")
    x = x.transpose(0, 1, 3, 2, 4).reshape(c, h, w)
    return np.clip(x, 0.0, 1.0).astype(np.float32)


def apply_camera_pipeline(frame: np.ndarray, spec: CameraModelSpec, noise_seed) -> np.ndarray:
    k = spec.kernel()
    out = np.stack([convolve(ch, k, mode="reflect") for ch in frame])
    out = np.clip(out, 0.0, 1.0) ** spec.gamma
    if spec.noise_std > 0:
        rng = np.random.default_rng(noise_seed)
        out = out + rng.normal(0.0, spec.noise_std, size=out.shape).astype(np.float32)
    out = np.clip(out, 0.0, 1.0)
    return block_dct_quantize(out.astype(np.float32), QUANT_STEPS[spec.quality])


@dataclass
class CameraDataset:
    frames: np.ndarray     # (N, 3, H, W) float32
    labels: np.ndarray     # (N,) int64 model ids
    specs: list

    def __len__(self):
        return len(self.labels)


def save_camera_dataset(dataset: CameraDataset, directory):
    import json
    import os

    from PIL import Image
    os.makedirs(directory, exist_ok=True)
    for i, frame in enumerate(dataset.frames):
        arr = np.clip(np.round(frame * 255.0), 0, 255).astype(np.uint8).transpose(1, 2, 0)
        Image.fromarray(arr, mode="RGB").save(os.path.join(directory, f"frame_{i:04d}.png"))
    meta = {
        "labels": dataset.labels.tolist(),
        "specs": [{"model_id": s.model_id, "filter_kernel": s.filter_kernel,
                   "gamma": s.gamma, "noise_std": s.noise_std, "quality": s.quality}
                  for s in dataset.specs],
    }
    with open(os.path.join(directory, "labels.json"), "w") as fh:
        json.dump(meta, fh, indent=1)


def load_camera_dataset(directory) -> CameraDataset:
    import json
    import os

    from PIL import Image
    with open(os.path.join(directory, "labels.json")) as fh:
        meta = json.load(fh)
    labels = np.asarray(meta["labels"], dtype=np.int64)
    frames = []
    for i in range(len(labels)):
        img = Image.open(os.path.join(directory, f"frame_{i:04d}.png"))
        frames.append(np.asarray(img, dtype=np.float32).transpose(2, 0, 1) / 255.0)
    specs = [CameraModelSpec(s["model_id"],
                             tuple(tuple(row) for row in s["filter_kernel"]),
                             s["gamma"], s["noise_std"], s["quality"])
             for s in meta["specs"]]
    return CameraDataset(np.stack(frames), labels, specs)


def make_camera_dataset(num_models: int, frames_per_model: int, size, seed: int) -> CameraDataset:
    """Labeled frames for camera-model identification. Scene content is shared
    across classes (same scene seeds), so the pipeline is the only class signal."""
    h, w = size
    if num_models < 2:
        raise ValueError("need >=2 camera models")
    if h % 32 or w % 32:
        raise ValueError(f"frame size must be divisible by 32, got {h}x{w}")
    specs = default_camera_models(num_models, seed)
    frames, labels = [], []
    for i in range(frames_per_model):
        scene = make_scene((h, w), np.random.SeedSequence([int(seed), 0x5C, i]))
        base = render_frame(scene, t=0)
        for spec in specs:
            noise_seed = np.random.SeedSequence([int(seed), 0x7A, spec.model_id, i])
            frames.append(apply_camera_pipeline(base, spec, noise_seed))
            labels.append(spec.model_id)
    return CameraDataset(np.stack(frames).astype(np.float32),
                         np.asarray(labels, dtype=np.int64), specs)
