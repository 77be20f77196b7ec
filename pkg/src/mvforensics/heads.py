"""Output heads: frame-level detection score, full-resolution localization
mask, and the multi-scale classification heads used only while pretraining."""

import torch
import torch.nn.functional as F
from torch import nn

from .features.blocks import conv_bn_act


class DetectionHead(nn.Module):
    """Convolutions and pooling over the finest-scale analysis grid, then a
    small feedforward network ending in a logistic score."""

    def __init__(self, in_channels, hidden=128):
        super().__init__()
        self.convs = nn.Sequential(
            conv_bn_act(in_channels, hidden),
            nn.MaxPool2d(2, ceil_mode=True),
            conv_bn_act(hidden, hidden),
        )
        self.ffn = nn.Sequential(
            nn.Linear(hidden, hidden // 2), nn.SiLU(), nn.Linear(hidden // 2, 1))

    def forward(self, grid) -> torch.Tensor:
        x = self.convs(grid).mean(dim=(2, 3))
        return torch.sigmoid(self.ffn(x)).squeeze(-1)


class LocalizationHead(nn.Module):
    """Upscales the finest transformer grid, concatenates the pre-pooling fused
    features, refines with convolutions, and upsamples x8 to a sigmoid mask."""

    def __init__(self, grid_channels, fused_channels, hidden=96):
        super().__init__()
        self.merge = nn.Sequential(
            nn.Conv2d(grid_channels + fused_channels, hidden, 1), nn.SiLU(),
            conv_bn_act(hidden, hidden),
        )
        # resize-then-conv upsampling stages, x2 each
        stages, c = [], hidden
        for out_c in (64, 32, 16):
            stages.append(nn.Sequential(
                nn.Upsample(scale_factor=2, mode="bilinear", align_corners=False),
                conv_bn_act(c, out_c)))
            c = out_c
        self.up = nn.Sequential(*stages)
        self.final = nn.Conv2d(c, 1, 3, padding=1)

    def forward(self, grid, fused, target_hw) -> torch.Tensor:
        fh, fw = fused.shape[-2:]
        th, tw = target_hw
        if (th, tw) != (fh * 8, fw * 8):
            raise ValueError(
                f"target {th}x{tw} must be 8x the feature dims {fh}x{fw}")
        g = F.interpolate(grid, size=(fh, fw), mode="bilinear", align_corners=False)
        x = self.merge(torch.cat([g, fused], dim=1))
        return torch.sigmoid(self.final(self.up(x))).squeeze(1)


def score_from_mask(mask: torch.Tensor) -> torch.Tensor:
    """Detection score as the highest per-pixel probability in the mask."""
    if mask.numel() == 0:
        raise ValueError("empty mask")
    if mask.ndim == 2:
        return mask.max()
    return mask.flatten(1).max(dim=1).values


class PretrainClassifier(nn.Module):
    """Camera-model classification heads on multi-scale poolings of the spatial
    residual features. Discarded after pretraining; only the trunk survives."""

    def __init__(self, feature_channels, num_classes, scales=(3, 4, 5)):
        super().__init__()
        self.scales = tuple(scales)
        self.num_classes = num_classes
        self.heads = nn.ModuleDict({
            str(k): nn.Conv2d(feature_channels, num_classes, 1) for k in self.scales})

    def pool(self, features) -> dict:
        # grids may exceed the feature resolution on small inputs; pooling then
        # replicates cells so every scale still emits its full 2^k x 2^k map
        return {k: F.adaptive_avg_pool2d(features, 2 ** k) for k in self.scales}

    def logits(self, pooled: dict) -> dict:
        if set(pooled) != set(self.scales):
            raise ValueError(f"expected pooled grids for scales {self.scales}, got {sorted(pooled)}")
        out = {}
        for k in self.scales:
            grid = self.heads[str(k)](pooled[k])          # (B, C, g, g)
            out[k] = grid.permute(0, 2, 3, 1)             # (B, g, g, C)
        return out

    def forward(self, features) -> dict:
        return self.logits(self.pool(features))
