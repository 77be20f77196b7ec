from .constrained import ConstrainedConv2d, project_constrained, project_constrained_
from .blocks import FusedInvertedResidual, SqueezeExcite, conv_bn_act
from .spatial import RgbContextExtractor, SpatialResidualExtractor
from .temporal import TemporalResidualExtractor, TemporalTrunk, TemporalWindow, window_from_clip
from .flow import (CachingFlow, FlowEstimator, PrecomputedFlow, SmoothnessFlow,
                   clip_flow_residuals, default_estimator, read_flo,
                   window_flow_residuals, write_flo)

__all__ = [
    "CachingFlow", "ConstrainedConv2d", "FlowEstimator", "FusedInvertedResidual",
    "PrecomputedFlow", "RgbContextExtractor", "SmoothnessFlow", "SpatialResidualExtractor",
    "SqueezeExcite", "TemporalResidualExtractor", "TemporalTrunk", "TemporalWindow",
    "clip_flow_residuals", "conv_bn_act", "default_estimator", "project_constrained",
    "project_constrained_", "read_flo", "window_flow_residuals", "window_from_clip",
    "write_flo",
]
