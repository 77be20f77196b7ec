"""Per-frame spatial feature extractors: prediction-residual features and RGB
context features, both at 1/8 resolution."""

from torch import nn

from .blocks import FusedInvertedResidual
from .constrained import ConstrainedConv2d

RESIDUAL_TRUNK_WIDTHS = (24, 48, 64, 128, 256)
RESIDUAL_TRUNK_STRIDES = (2, 2, 1, 2, 1)


def _check_dims(x):
    h, w = x.shape[-2:]
    if h % 8 or w % 8:
        raise ValueError(f"frame dims must be divisible by 8, got {h}x{w}")


class SpatialResidualExtractor(nn.Module):
    """Constrained residual layer followed by a fused-inverted-residual trunk,
    widening 24 -> 48 -> 64 -> 128 -> 256 while downsampling by 8 in total."""

    def __init__(self, filters_per_channel=6):
        super().__init__()
        self.constrained = ConstrainedConv2d(3, filters_per_channel)
        blocks = []
        in_c = self.constrained.out_channels
        for width, stride in zip(RESIDUAL_TRUNK_WIDTHS, RESIDUAL_TRUNK_STRIDES):
            blocks.append(FusedInvertedResidual(in_c, width, stride=stride, use_se=True))
            in_c = width
        self.trunk = nn.Sequential(*blocks)
        self.out_channels = in_c

    def residuals(self, frames):
        """Pre-trunk prediction residuals; exactly zero on constant frames."""
        _check_dims(frames)
        return self.constrained(frames)

    def forward(self, frames):
        return self.trunk(self.residuals(frames))


class RgbContextExtractor(nn.Module):
    """Context trunk on raw RGB values; FIR blocks then a 1x1 projection.

    No channel gating here so the features stay spatially local (their support
    is bounded by the stack's receptive field)."""

    def __init__(self, out_channels=64):
        super().__init__()
        self.blocks = nn.Sequential(
            FusedInvertedResidual(3, 24, stride=2, use_se=False),
            FusedInvertedResidual(24, 48, stride=2, use_se=False),
            FusedInvertedResidual(48, 64, stride=2, use_se=False),
        )
        self.project = nn.Conv2d(64, out_channels, 1)
        self.out_channels = out_channels

    def forward(self, frames):
        _check_dims(frames)
        return self.project(self.blocks(frames))

    @staticmethod
    def receptive_field():
        """Receptive field (pixels) and stride of one output cell."""
        rf, jump = 1, 1
        for _ in range(3):
            rf += 2 * jump  # 3x3 expansion conv
            jump *= 2
        return rf, jump
