import numpy as np
import pytest
import torch

from mvforensics.config import ModelConfig
from mvforensics.datagen import ManipulationConfig, make_authentic_clip, make_manipulated_clip


@pytest.fixture(autouse=True)
def _fixed_torch_seed():
    torch.manual_seed(0)


@pytest.fixture(scope="session")
def small_model_cfg():
    # scales sized for 64x64 inputs (8x8 feature grids)
    return ModelConfig(scales=(0, 1, 2, 3), embed_dim=64, attn_heads=2,
                       blocks_per_scale=1, standard_input_hw=(64, 64))


@pytest.fixture(scope="session")
def tiny_clip():
    return make_authentic_clip((64, 64), 5, seed=123)


@pytest.fixture(scope="session")
def edited_clip(tiny_clip):
    cfg = ManipulationConfig(kind="edit", area_fraction_range=(0.05, 0.2),
                             edit_ops=("blur", "noise"))
    return make_manipulated_clip(tiny_clip, cfg, seed=7)


def finite_difference_grad(fn, x, h=1e-5):
    """Central-difference gradient of a scalar function of one tensor."""
    x = x.detach().clone().double()
    grad = torch.zeros_like(x)
    flat = x.view(-1)
    gflat = grad.view(-1)
    for i in range(flat.numel()):
        orig = flat[i].item()
        flat[i] = orig + h
        fp = float(fn(x))
        flat[i] = orig - h
        fm = float(fn(x))
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_grad_error(analytic, numeric):
    denom = max(1.0, float(analytic.abs().max()), float(numeric.abs().max()))
    return float((analytic - numeric).abs().max()) / denom
