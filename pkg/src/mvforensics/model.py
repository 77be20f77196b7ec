"""Full network: four modality extractors, the multi-scale hierarchical
analysis, and the detection/localization heads, with ablation switches."""

from dataclasses import dataclass, fields

import torch
import torch.nn.functional as F
from torch import nn

from .config import ModelConfig
from .features.spatial import RgbContextExtractor, SpatialResidualExtractor
from .features.temporal import TemporalResidualExtractor
from .heads import DetectionHead, LocalizationHead
from .msh import (FlatMultiScale, HierarchyTransformer, StandardTransformer,
                  fuse_modalities, modality_slices)

MODALITY_FLAGS = ("no_spatial_residual", "no_rgb_context",
                  "no_temporal_residual", "no_optflow_residual")
ARCH_FLAGS = ("standard_transformer", "no_msh", "fine_to_coarse")


@dataclass
class AblationFlags:
    no_spatial_residual: bool = False
    no_rgb_context: bool = False
    no_temporal_residual: bool = False
    no_optflow_residual: bool = False
    standard_transformer: bool = False
    no_msh: bool = False
    fine_to_coarse: bool = False

    def __post_init__(self):
        active_arch = [f for f in ARCH_FLAGS if getattr(self, f)]
        if len(active_arch) > 1:
            raise ValueError(f"contradictory ablation flags: {' + '.join(active_arch)}")

    @classmethod
    def from_names(cls, names):
        known = {f.name for f in fields(cls)}
        bad = sorted(set(names) - known)
        if bad:
            raise ValueError(f"unknown ablation flags: {', '.join(bad)}")
        return cls(**{n: True for n in names})

    def zeroed_modalities(self):
        return tuple(f[3:] for f in MODALITY_FLAGS if getattr(self, f))

    def active(self):
        return tuple(f.name for f in fields(self) if getattr(self, f.name))


class ForensicsNet(nn.Module):
    """Analyzes 5-frame windows plus their precomputed flow residual maps and
    returns a detection score and a full-resolution localization mask."""

    def __init__(self, cfg: ModelConfig = None):
        super().__init__()
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        self.ablation = AblationFlags()
        self.spatial = SpatialResidualExtractor(cfg.residual_filters)
        self.context = RgbContextExtractor(cfg.context_channels)
        self.temporal = TemporalResidualExtractor(cfg.temporal_fusion_conv)
        self.modality_dims = {
            "spatial_residual": self.spatial.out_channels,
            "rgb_context": self.context.out_channels,
            "temporal_residual": self.temporal.out_channels,
            "optflow_residual": 4,
        }
        self.fused_channels = sum(self.modality_dims.values())
        self.slices = modality_slices(self.modality_dims)
        self.hierarchy = HierarchyTransformer(
            self.fused_channels, embed_dim=cfg.embed_dim, heads=cfg.attn_heads,
            blocks_per_scale=cfg.blocks_per_scale, scales=cfg.scales)
        depth = cfg.blocks_per_scale * len(cfg.scales)
        fh, fw = cfg.standard_input_hw[0] // 8, cfg.standard_input_hw[1] // 8
        self.standard_path = StandardTransformer(
            self.fused_channels, embed_dim=cfg.embed_dim, heads=cfg.attn_heads,
            depth=depth, feature_hw=(fh, fw), token_scale=cfg.scales[-1])
        self.flat_path = FlatMultiScale(
            self.fused_channels, embed_dim=cfg.embed_dim, heads=cfg.attn_heads,
            depth=depth, scales=cfg.scales)
        self.detect_head = DetectionHead(cfg.embed_dim)
        self.localize_head = LocalizationHead(cfg.embed_dim, self.fused_channels)

    def fuse(self, windows, flow_residuals):
        """Fused per-frame feature map (B, D, H/8, W/8) for the window centers."""
        if windows.ndim != 5 or windows.shape[1] != 5:
            raise ValueError(f"expected (B, 5, 3, H, W) windows, got {tuple(windows.shape)}")
        center = windows[:, 2]
        f = self.spatial(center)
        c = self.context(center)
        t = self.temporal(windows)
        o = F.avg_pool2d(flow_residuals, 8)
        return fuse_modalities(f, c, t, o, zero_out=self.ablation.zeroed_modalities())

    def analyze(self, fused):
        """Run the configured analysis path; returns the finest-scale grid."""
        if self.ablation.standard_transformer:
            return self.standard_path(fused)
        if self.ablation.no_msh:
            return self.flat_path(fused)
        direction = "fine_to_coarse" if self.ablation.fine_to_coarse else "coarse_to_fine"
        outputs = self.hierarchy(fused, direction=direction)
        return outputs[self.hierarchy.finest_scale]

    def forward(self, windows, flow_residuals):
        fused = self.fuse(windows, flow_residuals)
        finest = self.analyze(fused)
        scores = self.detect_head(finest)
        target_hw = (windows.shape[-2], windows.shape[-1])
        masks = self.localize_head(finest, fused, target_hw)
        return scores, masks

    def constrained_modules(self):
        return [self.spatial.constrained]

    @torch.no_grad()
    def project_constrained_(self):
        for mod in self.constrained_modules():
            mod.project_()


def set_ablation(model: ForensicsNet, flags) -> ForensicsNet:
    """Attach ablation flags; modality flags zero fused channels, architecture
    flags reroute the analysis path."""
    if not isinstance(flags, AblationFlags):
        flags = AblationFlags.from_names(tuple(flags))
    model.ablation = flags
    return model
