"""Optical flow estimation and flow residual features.

The estimator interface is pluggable: a built-in classical estimator
(brightness constancy + smoothness, solved by fixed-point iteration on an
image pyramid) keeps the package self-contained, and a precomputed loader
reads externally produced .flo files for higher-quality flow.
"""

import hashlib
import os
import struct

import numpy as np
import torch
from scipy.ndimage import convolve, correlate, map_coordinates

FLO_MAGIC = 202021.25

# weighted neighborhood average used by the fixed-point update
_AVG_KERNEL = np.array([[1 / 12, 1 / 6, 1 / 12],
                        [1 / 6, 0.0, 1 / 6],
                        [1 / 12, 1 / 6, 1 / 12]], dtype=np.float64)
_KX = np.array([[-1, 1], [-1, 1]], dtype=np.float64) * 0.25
_KY = np.array([[-1, -1], [1, 1]], dtype=np.float64) * 0.25
_KT = np.ones((2, 2), dtype=np.float64) * 0.25


def write_flo(path, flow: np.ndarray):
    """Write a (2, H, W) flow field in the little-endian .flo layout."""
    u, v = np.asarray(flow, dtype=np.float32)
    h, w = u.shape
    with open(path, "wb") as fh:
        fh.write(struct.pack("<f", FLO_MAGIC))
        fh.write(struct.pack("<ii", w, h))
        interleaved = np.empty((h, w, 2), dtype="<f4")
        interleaved[..., 0] = u
        interleaved[..., 1] = v
        fh.write(interleaved.tobytes())


def read_flo(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = struct.unpack("<f", fh.read(4))[0]
        if abs(magic - FLO_MAGIC) > 1e-3:
            raise ValueError(f"bad .flo magic in {path}: {magic}")
        w, h = struct.unpack("<ii", fh.read(8))
        data = np.frombuffer(fh.read(h * w * 2 * 4), dtype="<f4").reshape(h, w, 2)
    return np.ascontiguousarray(data.transpose(2, 0, 1)).astype(np.float32)


def _to_gray(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3:
        r, g, b = frame[0], frame[1], frame[2]
        return 0.299 * r + 0.587 * g + 0.114 * b
    return frame


def _downsample2(img):
    h, w = img.shape
    h2, w2 = h // 2 * 2, w // 2 * 2
    return img[:h2, :w2].reshape(h2 // 2, 2, w2 // 2, 2).mean(axis=(1, 3))


def _upsample_flow(flow, shape):
    scale_y = shape[0] / flow.shape[1]
    scale_x = shape[1] / flow.shape[2]
    yy, xx = np.mgrid[0:shape[0], 0:shape[1]].astype(np.float64)
    coords = [yy / scale_y, xx / scale_x]
    u = map_coordinates(flow[0], coords, order=1, mode="nearest") * scale_x
    v = map_coordinates(flow[1], coords, order=1, mode="nearest") * scale_y
    return np.stack([u, v])


def _warp(img, flow):
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    return map_coordinates(img, [yy + flow[1], xx + flow[0]], order=1, mode="nearest")


def _iterate(im1, im2, u, v, alpha, iterations):
    # correlate keeps the derivative sign aligned with the +x/+y axes, so the
    # temporal term im2 - im1 pairs correctly with fx, fy
    fx = correlate(im1, _KX, mode="nearest") + correlate(im2, _KX, mode="nearest")
    fy = correlate(im1, _KY, mode="nearest") + correlate(im2, _KY, mode="nearest")
    ft = correlate(im2, _KT, mode="nearest") - correlate(im1, _KT, mode="nearest")
    denom = alpha ** 2 + fx ** 2 + fy ** 2
    for _ in range(iterations):
        u_avg = convolve(u, _AVG_KERNEL, mode="nearest")
        v_avg = convolve(v, _AVG_KERNEL, mode="nearest")
        der = (fx * u_avg + fy * v_avg + ft) / denom
        u = u_avg - fx * der
        v = v_avg - fy * der
    return u, v


class FlowEstimator:
    """Estimates the optical flow field (2, H, W) taking X to Y."""

    name = "base"

    def flow(self, x, y, x_index=None, y_index=None) -> np.ndarray:
        raise NotImplementedError


class SmoothnessFlow(FlowEstimator):
    """Classical iterative estimator on a small image pyramid, with backward
    warping between levels. Deterministic for a fixed iteration budget."""

    name = "builtin"

    def __init__(self, levels=3, iterations=30, alpha=0.1):
        self.levels = levels
        self.iterations = iterations
        self.alpha = alpha

    def flow(self, x, y, x_index=None, y_index=None):
        g1, g2 = _to_gray(x), _to_gray(y)
        if g1.shape != g2.shape:
            raise ValueError(f"frame shapes differ: {g1.shape} vs {g2.shape}")
        if not (np.isfinite(g1).all() and np.isfinite(g2).all()):
            raise ValueError("non-finite pixels in flow input")
        pyr1, pyr2 = [g1], [g2]
        for _ in range(self.levels - 1):
            if min(pyr1[-1].shape) < 8:
                break
            pyr1.append(_downsample2(pyr1[-1]))
            pyr2.append(_downsample2(pyr2[-1]))
        flow = np.zeros((2, *pyr1[-1].shape), dtype=np.float64)
        for lvl in range(len(pyr1) - 1, -1, -1):
            im1, im2 = pyr1[lvl], pyr2[lvl]
            if flow.shape[1:] != im1.shape:
                flow = _upsample_flow(flow, im1.shape)
            im2w = _warp(im2, flow)
            du, dv = _iterate(im1, im2w, np.zeros_like(im1), np.zeros_like(im1),
                              self.alpha, self.iterations)
            flow = np.stack([flow[0] + du, flow[1] + dv])
        return flow.astype(np.float32)


class PrecomputedFlow(FlowEstimator):
    """Loads flow_%04d_%04d.flo files addressed by (source, target) indices."""

    name = "precomputed"

    def __init__(self, directory):
        self.directory = directory

    def flow(self, x, y, x_index=None, y_index=None):
        if x_index is None or y_index is None:
            raise ValueError("precomputed flow needs source and target frame indices")
        path = os.path.join(self.directory, f"flow_{x_index:04d}_{y_index:04d}.flo")
        if not os.path.isfile(path):
            raise FileNotFoundError(f"missing flow file {path}")
        return read_flo(path)


class CachingFlow(FlowEstimator):
    """Wraps an estimator with a .flo file cache keyed by frame content."""

    def __init__(self, inner: FlowEstimator, cache_dir):
        self.inner = inner
        self.cache_dir = cache_dir
        self.name = inner.name
        os.makedirs(cache_dir, exist_ok=True)

    def _key(self, x, y):
        digest = hashlib.sha1()
        digest.update(np.ascontiguousarray(x, dtype=np.float32).tobytes())
        digest.update(np.ascontiguousarray(y, dtype=np.float32).tobytes())
        digest.update(repr(sorted(self.inner.__dict__.items())).encode())
        return digest.hexdigest()

    def flow(self, x, y, x_index=None, y_index=None):
        path = os.path.join(self.cache_dir, self._key(x, y) + ".flo")
        if os.path.isfile(path):
            return read_flo(path)
        flow = self.inner.flow(x, y, x_index=x_index, y_index=y_index)
        write_flo(path, flow)
        return flow


def default_estimator(cache_dir=None, levels=3, iterations=30, alpha=0.1) -> FlowEstimator:
    est = SmoothnessFlow(levels=levels, iterations=iterations, alpha=alpha)
    cache_dir = cache_dir or os.environ.get("MVF_CACHE")
    if cache_dir:
        est = CachingFlow(est, cache_dir)
    return est


def _pair_flows(estimator, frames, indices, order):
    """The four flow fields feeding one frame's residuals."""
    i0, i1, i2, i3, i4 = indices
    f = {}

    def nu(a, b):
        key = (a, b)
        if key not in f:
            try:
                f[key] = estimator.flow(frames[a], frames[b], x_index=a, y_index=b)
            except Exception as exc:
                raise RuntimeError(f"flow estimation failed for frame pair ({a}, {b}): {exc}") from exc
        return f[key]

    if order == "final":
        fwd = nu(i1, i2) - nu(i0, i1)
        bwd = nu(i3, i2) - nu(i4, i3)
    elif order == "legacy":
        fwd = nu(i2, i1) - nu(i1, i0)
        bwd = nu(i2, i3) - nu(i3, i4)
    else:
        raise ValueError(f"unknown flow argument order {order!r}")
    return fwd, bwd


def window_flow_residuals(window, estimator, order="final") -> torch.Tensor:
    """Flow residuals for one window: forward and backward consecutive-flow
    differences stacked into a (4, H, W) map at frame resolution."""
    frames = window.frames.detach().cpu().numpy() if torch.is_tensor(window.frames) else window.frames
    # windows carry replicated frames; address them 0..4 locally, report clip
    # indices in errors
    local = {i: frames[i] for i in range(5)}
    clip_idx = window.indices

    class _Local(FlowEstimator):
        name = estimator.name

        def flow(self, x, y, x_index=None, y_index=None):
            a, b = clip_idx[x_index], clip_idx[y_index]
            if a == b:  # replicated boundary frame, flow is zero by convention
                return np.zeros((2, *np.asarray(x).shape[-2:]), dtype=np.float32)
            try:
                return estimator.flow(x, y, x_index=a, y_index=b)
            except Exception as exc:
                raise RuntimeError(
                    f"flow estimation failed for frame pair ({a}, {b}): {exc}") from exc

    fwd, bwd = _pair_flows(_Local(), local, (0, 1, 2, 3, 4), order)
    out = np.concatenate([fwd, bwd], axis=0).astype(np.float32)
    return torch.from_numpy(out)


def clip_flow_residuals(frames, estimator, order="final") -> torch.Tensor:
    """Flow residual maps (T, 4, H, W) for every frame of a clip, with edge
    replication at clip bounds. Flow fields are shared across frames."""
    arr = frames.detach().cpu().numpy() if torch.is_tensor(frames) else np.asarray(frames)
    length = arr.shape[0]
    cache = {}

    def nu(a, b):
        key = (a, b)
        if key not in cache:
            if a == b:
                cache[key] = np.zeros((2, *arr.shape[-2:]), dtype=np.float32)
            else:
                try:
                    cache[key] = estimator.flow(arr[a], arr[b], x_index=a, y_index=b)
                except Exception as exc:
                    raise RuntimeError(
                        f"flow estimation failed for frame pair ({a}, {b}): {exc}") from exc
        return cache[key]

    out = []
    for t in range(length):
        idx = [min(max(t + d, 0), length - 1) for d in (-2, -1, 0, 1, 2)]
        i0, i1, i2, i3, i4 = idx
        if order == "final":
            fwd = nu(i1, i2) - nu(i0, i1)
            bwd = nu(i3, i2) - nu(i4, i3)
        else:
            fwd = nu(i2, i1) - nu(i1, i0)
            bwd = nu(i2, i3) - nu(i3, i4)
        out.append(np.concatenate([fwd, bwd], axis=0))
    return torch.from_numpy(np.stack(out).astype(np.float32))
