"""Temporal residual features: frame-to-frame differences of a lightweight
microstructure trunk, approximating the time derivative of those features."""

from dataclasses import dataclass

import torch
from torch import nn

from .blocks import FusedInvertedResidual, conv_bn_act

TEMPORAL_TRUNK_WIDTHS = (16, 32, 64, 64)
TEMPORAL_TRUNK_STRIDES = (2, 2, 2, 1)


@dataclass
class TemporalWindow:
    """Five consecutive frames centered on t, with their source indices.

    Frames are (5, 3, H, W); indices are clip-frame positions after edge
    replication, used by index-addressed flow estimators."""
    frames: torch.Tensor
    indices: tuple

    def __post_init__(self):
        if self.frames.ndim != 4 or self.frames.shape[0] != 5:
            raise ValueError(f"window must hold 5 frames, got {tuple(self.frames.shape)}")
        if len(self.indices) != 5:
            raise ValueError("window needs one source index per frame")


def window_from_clip(frames: torch.Tensor, t: int) -> TemporalWindow:
    """Build the t-centered window; edge frames replicate past clip bounds."""
    length = frames.shape[0]
    idx = tuple(min(max(t + d, 0), length - 1) for d in (-2, -1, 0, 1, 2))
    return TemporalWindow(frames[list(idx)], idx)


class TemporalTrunk(nn.Module):
    """Shallow residual stem plus 4 FIR blocks (8 -> 16 -> 32 -> 64), stride 8."""

    def __init__(self):
        super().__init__()
        self.stem_in = nn.Conv2d(3, 8, 3, padding=1)
        self.stem_res = nn.Conv2d(8, 8, 3, padding=1)
        self.stem_post = conv_bn_act(8, 8)
        blocks, in_c = [], 8
        for width, stride in zip(TEMPORAL_TRUNK_WIDTHS, TEMPORAL_TRUNK_STRIDES):
            blocks.append(FusedInvertedResidual(in_c, width, stride=stride, use_se=False))
            in_c = width
        self.blocks = nn.Sequential(*blocks)
        self.out_channels = in_c

    def forward(self, x):
        h, w = x.shape[-2:]
        if h % 8 or w % 8:
            raise ValueError(f"frame dims must be divisible by 8, got {h}x{w}")
        x = self.stem_in(x)
        x = x + self.stem_res(x)
        return self.blocks(self.stem_post(x))


class TemporalResidualExtractor(nn.Module):
    """Forward and backward feature differences around the center frame,
    concatenated channel-wise; optional 1x1 fusion conv over the result."""

    def __init__(self, use_fusion_conv=False):
        super().__init__()
        self.trunk = TemporalTrunk()
        self.out_channels = 2 * self.trunk.out_channels
        self.fusion = (nn.Conv2d(self.out_channels, self.out_channels, 1)
                       if use_fusion_conv else None)

    def forward(self, windows: torch.Tensor) -> torch.Tensor:
        """windows: (B, 5, 3, H, W). Uses frames t-1, t, t+1 only."""
        if windows.ndim != 5 or windows.shape[1] != 5:
            raise ValueError(f"expected (B, 5, 3, H, W) windows, got {tuple(windows.shape)}")
        b = windows.shape[0]
        trio = windows[:, 1:4]
        if trio.shape[2:] != windows.shape[2:]:
            raise ValueError("window frames must share one shape")
        # one batched pass so identical frames map to identical features exactly
        feats = self.trunk(trio.reshape(b * 3, *trio.shape[2:]))
        feats = feats.view(b, 3, *feats.shape[1:])
        prev, cur, nxt = feats[:, 0], feats[:, 1], feats[:, 2]
        out = torch.cat([cur - prev, cur - nxt], dim=1)
        if self.fusion is not None:
            out = self.fusion(out)
        return out
