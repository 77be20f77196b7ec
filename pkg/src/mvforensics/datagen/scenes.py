"""Procedural base scenes: gradient backgrounds plus textured sprites moving at
constant velocity, so ground-truth optical flow is known analytically."""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter


@dataclass
class Sprite:
    texture: np.ndarray       # (3, sh, sw) in [0,1]
    alpha: np.ndarray         # (sh, sw) soft mask in [0,1]
    start_yx: tuple           # float position of top-left corner at t=0
    velocity_yx: tuple        # pixels per frame, constant


@dataclass
class Scene:
    hw: tuple
    background: np.ndarray    # (3, H, W)
    sprites: list

    def sprite_flow(self, t: int) -> np.ndarray:
        """Analytic flow field (2,H,W) from frame t to t+1, (u,v) = (dx,dy)."""
        h, w = self.hw
        flow = np.zeros((2, h, w), dtype=np.float32)
        for s in self.sprites:
            mask = _sprite_support(s, t, self.hw)
            vy, vx = s.velocity_yx
            flow[0][mask] = vx
            flow[1][mask] = vy
        return flow


def _smooth_noise(rng, shape, sigma, amplitude):
    n = rng.standard_normal(shape).astype(np.float32)
    n = gaussian_filter(n, sigma=sigma, mode="wrap")
    peak = np.abs(n).max()
    if peak > 0:
        n = n / peak * amplitude
    return n


def _make_texture(rng, sh, sw):
    base = rng.uniform(0.15, 0.85, size=(3, 1, 1)).astype(np.float32)
    tex = base + np.stack([_smooth_noise(rng, (sh, sw), 1.2, 0.35) for _ in range(3)])
    return np.clip(tex, 0.0, 1.0)


def _make_background(rng, h, w):
    c0 = rng.uniform(0.1, 0.9, size=3).astype(np.float32)
    c1 = rng.uniform(0.1, 0.9, size=3).astype(np.float32)
    theta = rng.uniform(0, 2 * np.pi)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float32)
    ramp = (np.cos(theta) * xx / max(w - 1, 1) + np.sin(theta) * yy / max(h - 1, 1))
    ramp = (ramp - ramp.min()) / max(float(np.ptp(ramp)), 1e-6)
    bg = c0[:, None, None] * (1 - ramp) + c1[:, None, None] * ramp
    bg += np.stack([_smooth_noise(rng, (h, w), 2.0, 0.05) for _ in range(3)])
    return np.clip(bg, 0.0, 1.0).astype(np.float32)


def make_scene(hw, seed, num_sprites=2, max_speed=2.0) -> Scene:
    h, w = hw
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence([int(seed), h, w])
    rng = np.random.default_rng(seed)
    background = _make_background(rng, h, w)
    sprites = []
    for _ in range(num_sprites):
        sh = int(rng.integers(h // 6, h // 3 + 1))
        sw = int(rng.integers(w // 6, w // 3 + 1))
        texture = _make_texture(rng, sh, sw)
        alpha = np.ones((sh, sw), dtype=np.float32)
        if rng.uniform() < 0.5:
            yy, xx = np.mgrid[0:sh, 0:sw].astype(np.float32)
            e = ((yy - (sh - 1) / 2) / (sh / 2)) ** 2 + ((xx - (sw - 1) / 2) / (sw / 2)) ** 2
            alpha = (e <= 1.0).astype(np.float32)
        start = (float(rng.uniform(h * 0.15, h * 0.45)), float(rng.uniform(w * 0.15, w * 0.45)))
        vel = (float(rng.uniform(-max_speed, max_speed)), float(rng.uniform(-max_speed, max_speed)))
        sprites.append(Sprite(texture, alpha, start, vel))
    return Scene((h, w), background, sprites)


def _sprite_support(sprite: Sprite, t: int, hw) -> np.ndarray:
    h, w = hw
    sh, sw = sprite.alpha.shape
    y0 = sprite.start_yx[0] + sprite.velocity_yx[0] * t
    x0 = sprite.start_yx[1] + sprite.velocity_yx[1] * t
    support = np.zeros((h, w), dtype=bool)
    ys = int(np.floor(y0))
    xs = int(np.floor(x0))
    for dy in (0, 1):
        for dx in (0, 1):
            ya, yb = max(0, ys + dy), min(h, ys + dy + sh)
            xa, xb = max(0, xs + dx), min(w, xs + dx + sw)
            if ya < yb and xa < xb:
                sub = sprite.alpha[ya - (ys + dy):yb - (ys + dy), xa - (xs + dx):xb - (xs + dx)]
                support[ya:yb, xa:xb] |= sub > 0
    return support


def _paste(canvas: np.ndarray, sprite: Sprite, t: int):
    """Composite a sprite at its (possibly subpixel) position via bilinear shift."""
    _, h, w = canvas.shape
    sh, sw = sprite.alpha.shape
    y0 = sprite.start_yx[0] + sprite.velocity_yx[0] * t
    x0 = sprite.start_yx[1] + sprite.velocity_yx[1] * t
    ys, fy = int(np.floor(y0)), y0 - np.floor(y0)
    xs, fx = int(np.floor(x0)), x0 - np.floor(x0)
    weights = ((1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx)
    offsets = ((0, 0), (0, 1), (1, 0), (1, 1))
    acc_rgb = np.zeros((3, h, w), dtype=np.float32)
    acc_a = np.zeros((h, w), dtype=np.float32)
    for (dy, dx), wgt in zip(offsets, weights):
        ya, yb = max(0, ys + dy), min(h, ys + dy + sh)
        xa, xb = max(0, xs + dx), min(w, xs + dx + sw)
        if ya >= yb or xa >= xb:
            continue
        sy0, sx0 = ya - (ys + dy), xa - (xs + dx)
        sub_t = sprite.texture[:, sy0:sy0 + yb - ya, sx0:sx0 + xb - xa]
        sub_a = sprite.alpha[sy0:sy0 + yb - ya, sx0:sx0 + xb - xa]
        acc_rgb[:, ya:yb, xa:xb] += wgt * sub_t * sub_a
        acc_a[ya:yb, xa:xb] += wgt * sub_a
    a = np.clip(acc_a, 0.0, 1.0)
    canvas *= (1 - a)[None]
    canvas += acc_rgb


def render_frame(scene: Scene, t: int) -> np.ndarray:
    frame = scene.background.copy()
    for s in scene.sprites:
        _paste(frame, s, t)
    return np.clip(frame, 0.0, 1.0)


def render_clip_frames(hw, length, seed, num_sprites=2, max_speed=2.0):
    """Render `length` frames of one scene; returns (frames (T,3,H,W), scene)."""
    scene = make_scene(hw, seed, num_sprites=num_sprites, max_speed=max_speed)
    frames = np.stack([render_frame(scene, t) for t in range(length)])
    return frames.astype(np.float32), scene
