"""Multimodal video forgery detection and localization."""

__version__ = "0.1.0"

from .config import RunConfig, load_config
from .model import AblationFlags, ForensicsNet, set_ablation

__all__ = ["AblationFlags", "ForensicsNet", "RunConfig", "load_config",
           "set_ablation", "__version__"]
