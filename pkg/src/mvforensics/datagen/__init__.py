from .camera import (CameraDataset, CameraModelSpec, apply_camera_pipeline,
                     block_dct_quantize, default_camera_models, load_camera_dataset,
                     make_camera_dataset, save_camera_dataset)
from .clips import (VideoClip, labels_from_masks, load_clip, load_clip_set,
                    save_clip, save_clip_set, validate_clip)
from .manipulate import (EDIT_OPS, QUALITY_LADDER, ManipulationConfig,
                         make_authentic_clip, make_manipulated_clip, reencode_clip)
from .scenes import Scene, make_scene, render_clip_frames, render_frame

__all__ = [
    "CameraDataset", "CameraModelSpec", "ManipulationConfig", "Scene", "VideoClip",
    "EDIT_OPS", "QUALITY_LADDER",
    "apply_camera_pipeline", "block_dct_quantize", "default_camera_models",
    "labels_from_masks", "load_camera_dataset", "load_clip", "load_clip_set",
    "make_authentic_clip", "make_camera_dataset", "make_manipulated_clip", "make_scene",
    "reencode_clip", "render_clip_frames", "render_frame", "save_camera_dataset",
    "save_clip", "save_clip_set", "validate_clip",
]
