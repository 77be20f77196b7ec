"""Multi-scale hierarchical analysis: modality fusion, per-scale pooled
embeddings, resolution-aware cross-scale connectors, and per-scale transformer
encoder stacks running coarse to fine."""

import torch
import torch.nn.functional as F
from torch import nn

MODALITY_ORDER = ("spatial_residual", "rgb_context", "temporal_residual", "optflow_residual")


def modality_slices(dims: dict) -> dict:
    """Channel ranges of each modality inside the fused feature map."""
    slices, start = {}, 0
    for name in MODALITY_ORDER:
        width = dims[name]
        slices[name] = (start, start + width)
        start += width
    return slices


def fuse_modalities(spatial, context, temporal, optflow, zero_out=()):
    """Channel-concatenate the four modality maps (fixed order). Ablated
    modalities are zeroed, not removed, so downstream shapes never change."""
    maps = {"spatial_residual": spatial, "rgb_context": context,
            "temporal_residual": temporal, "optflow_residual": optflow}
    hw = spatial.shape[-2:]
    for name in MODALITY_ORDER:
        if maps[name].shape[-2:] != hw:
            raise ValueError(
                f"{name} spatial dims {tuple(maps[name].shape[-2:])} do not match {tuple(hw)}")
    parts = []
    for name in MODALITY_ORDER:
        m = maps[name]
        parts.append(torch.zeros_like(m) if name in zero_out else m)
    return torch.cat(parts, dim=1)


def zero_interleave(x: torch.Tensor) -> torch.Tensor:
    """(B, C, H, W) -> (B, C, 2H, 2W) with originals at even indices."""
    b, c, h, w = x.shape
    out = x.new_zeros(b, c, 2 * h, 2 * w)
    out[:, :, ::2, ::2] = x
    return out


def bilinear_kernel(dtype=torch.float32, device=None) -> torch.Tensor:
    """Fixed 3x3 interpolation kernel with unit DC gain on interior cells."""
    k1 = torch.tensor([0.5, 1.0, 0.5], dtype=dtype, device=device)
    return torch.outer(k1, k1)


def upsample2x(x: torch.Tensor) -> torch.Tensor:
    """Zero-interleave then convolve with the fixed bilinear kernel, per channel."""
    c = x.shape[1]
    k = bilinear_kernel(x.dtype, x.device).expand(c, 1, 3, 3)
    return F.conv2d(zero_interleave(x), k, padding=1, groups=c)


def downsample2x(x: torch.Tensor) -> torch.Tensor:
    return F.avg_pool2d(x, 2)


def connect_scales(prev_out: torch.Tensor, prev_embed: torch.Tensor,
                   cur_embed: torch.Tensor) -> torch.Tensor:
    """Carry a coarser scale into the next finer one: upsample the coarse
    transformer output plus its embeddings, then add the finer embeddings."""
    if prev_out.shape != prev_embed.shape:
        raise ValueError(f"coarse grids disagree: {tuple(prev_out.shape)} vs {tuple(prev_embed.shape)}")
    up = upsample2x(prev_out + prev_embed)
    if up.shape != cur_embed.shape:
        raise ValueError(
            f"upsampled coarse grid {tuple(up.shape)} does not match finer grid "
            f"{tuple(cur_embed.shape)}")
    return up + cur_embed


def connect_scales_down(prev_out, prev_embed, cur_embed):
    """Transposed connector for the fine-to-coarse ablation: average-pool the
    finer scale by 2 and add the coarser embeddings."""
    if prev_out.shape != prev_embed.shape:
        raise ValueError(f"fine grids disagree: {tuple(prev_out.shape)} vs {tuple(prev_embed.shape)}")
    down = downsample2x(prev_out + prev_embed)
    if down.shape != cur_embed.shape:
        raise ValueError(
            f"downsampled fine grid {tuple(down.shape)} does not match coarser grid "
            f"{tuple(cur_embed.shape)}")
    return down + cur_embed


class ScalePooler(nn.Module):
    """Adaptive pooling onto 2^k x 2^k grids plus a shared linear projection to
    the token width, reused by every scale."""

    def __init__(self, in_channels, embed_dim):
        super().__init__()
        self.project = nn.Conv2d(in_channels, embed_dim, 1)

    def pool(self, fused, k, allow_upsample=False):
        h, w = fused.shape[-2:]
        g = 2 ** k
        if not allow_upsample and (g > h or g > w):
            raise ValueError(
                f"scale {k} needs a {g}x{g} grid but features are only {h}x{w}")
        return self.project(F.adaptive_avg_pool2d(fused, g))


class EncoderBlock(nn.Module):
    """Pre-norm transformer encoder block over flattened grid tokens."""

    def __init__(self, dim, heads, mlp_ratio=4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(
            nn.Linear(dim, dim * mlp_ratio), nn.GELU(), nn.Linear(dim * mlp_ratio, dim))

    def forward(self, tokens):
        h = self.norm1(tokens)
        tokens = tokens + self.attn(h, h, h, need_weights=False)[0]
        return tokens + self.mlp(self.norm2(tokens))


class GridEncoder(nn.Module):
    """Encoder stack with learned positional embeddings for one fixed grid."""

    def __init__(self, dim, heads, depth, grid_hw):
        super().__init__()
        gh, gw = grid_hw
        self.grid_hw = (gh, gw)
        self.pos_embed = nn.Parameter(torch.zeros(1, dim, gh, gw))
        nn.init.trunc_normal_(self.pos_embed, std=0.02)
        self.blocks = nn.ModuleList(EncoderBlock(dim, heads) for _ in range(depth))

    def forward(self, grid):
        if grid.shape[-2:] != self.grid_hw:
            raise ValueError(
                f"encoder built for grid {self.grid_hw}, got {tuple(grid.shape[-2:])}")
        b, c, gh, gw = grid.shape
        tokens = (grid + self.pos_embed).flatten(2).transpose(1, 2)
        for block in self.blocks:
            tokens = block(tokens)
        return tokens.transpose(1, 2).reshape(b, c, gh, gw)


class HierarchyTransformer(nn.Module):
    """Per-scale embedding grids analyzed coarse-to-fine, each scale feeding
    its insight into the next through the resolution-aware connector."""

    def __init__(self, in_channels, embed_dim=256, heads=4, blocks_per_scale=2,
                 scales=(2, 3, 4, 5)):
        super().__init__()
        self.scales = tuple(scales)
        self.embed_dim = embed_dim
        self.pooler = ScalePooler(in_channels, embed_dim)
        self.encoders = nn.ModuleDict({
            str(k): GridEncoder(embed_dim, heads, blocks_per_scale, (2 ** k, 2 ** k))
            for k in self.scales})

    @property
    def finest_scale(self):
        return self.scales[-1]

    def embeddings(self, fused, allow_upsample=False):
        return {k: self.pooler.pool(fused, k, allow_upsample=allow_upsample)
                for k in self.scales}

    def forward(self, fused, direction="coarse_to_fine"):
        psi = self.embeddings(fused)
        outputs = {}
        if direction == "coarse_to_fine":
            prev = None
            for k in self.scales:
                b = psi[k] if prev is None else connect_scales(outputs[prev], psi[prev], psi[k])
                outputs[k] = self.encoders[str(k)](b)
                prev = k
        elif direction == "fine_to_coarse":
            prev = None
            for k in reversed(self.scales):
                b = psi[k] if prev is None else connect_scales_down(outputs[prev], psi[prev], psi[k])
                outputs[k] = self.encoders[str(k)](b)
                prev = k
        else:
            raise ValueError(f"unknown direction {direction!r}")
        return outputs


class StandardTransformer(nn.Module):
    """Plain single-stack transformer baseline. Tokens come from a pooling grid
    fixed at build time, so any other input resolution is rejected."""

    def __init__(self, in_channels, embed_dim=256, heads=4, depth=8,
                 feature_hw=(8, 8), token_scale=5):
        super().__init__()
        fh, fw = feature_hw
        g = 2 ** token_scale
        self.window = (max(1, fh // g), max(1, fw // g))
        self.expected_hw = (fh, fw)
        grid = (fh // self.window[0], fw // self.window[1])
        self.project = nn.Conv2d(in_channels, embed_dim, 1)
        self.encoder = GridEncoder(embed_dim, heads, depth, grid)

    def forward(self, fused):
        if tuple(fused.shape[-2:]) != self.expected_hw:
            raise ValueError(
                f"standard transformer was built for feature grid {self.expected_hw} "
                f"and cannot analyze {tuple(fused.shape[-2:])}; use the hierarchical model "
                f"for variable resolutions")
        x = F.avg_pool2d(fused, self.window)
        return self.encoder(self.project(x))


class FlatMultiScale(nn.Module):
    """Single-stack variant over flat multi-scale concatenations: every scale's
    pooled embedding is replicated onto the finest grid and concatenated
    channel-wise, with no cross-scale connectors."""

    def __init__(self, in_channels, embed_dim=256, heads=4, depth=8, scales=(2, 3, 4, 5)):
        super().__init__()
        self.scales = tuple(scales)
        self.pooler = ScalePooler(in_channels, embed_dim)
        self.mix = nn.Conv2d(embed_dim * len(self.scales), embed_dim, 1)
        g = 2 ** self.scales[-1]
        self.encoder = GridEncoder(embed_dim, heads, depth, (g, g))

    def forward(self, fused):
        g = 2 ** self.scales[-1]
        parts = []
        for k in self.scales:
            psi = self.pooler.pool(fused, k)
            if psi.shape[-1] != g:
                psi = F.interpolate(psi, size=(g, g), mode="nearest")
            parts.append(psi)
        return self.encoder(self.mix(torch.cat(parts, dim=1)))
