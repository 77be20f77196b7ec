"""Constrained prediction-residual convolution: each learned 5x5 filter predicts
its center pixel from the neighbors, and the layer outputs center minus
prediction. The constraint is enforced by projection after every update."""

import logging

import torch
import torch.nn.functional as F
from torch import nn

log = logging.getLogger(__name__)

DEGENERATE_EPS = 1e-8
ALREADY_PROJECTED_EPS = 1e-12


@torch.no_grad()
def project_constrained_(weights: torch.Tensor, generator=None) -> torch.Tensor:
    """In-place projection: center coefficient 0, off-center coefficients sum 1.

    Kernels whose off-center sum is numerically zero cannot be normalized and
    are reinitialized before projecting. Kernels already satisfying the
    constraint are untouched, so the projection is exactly idempotent.
    """
    if weights.shape[-1] != weights.shape[-2] or weights.shape[-1] % 2 == 0:
        raise ValueError(f"kernels must be square with odd size, got {tuple(weights.shape)}")
    k = weights.shape[-1]
    c = k // 2
    flat = weights.view(-1, k, k)  # view, so edits land in the parameter itself
    flat[:, c, c] = 0.0
    work = flat.double()
    sums = work.sum(dim=(-1, -2))
    degenerate = sums.abs() < DEGENERATE_EPS
    while degenerate.any():
        idx = torch.nonzero(degenerate).flatten()
        log.warning("reinitializing %d degenerate prediction filter(s)", len(idx))
        fresh = torch.empty(len(idx), k, k, dtype=torch.float64, device=weights.device)
        fresh.normal_(0.0, 0.02, generator=generator)
        work[idx] = fresh
        work[:, c, c] = 0.0
        sums = work.sum(dim=(-1, -2))
        degenerate = sums.abs() < DEGENERATE_EPS
    todo = (sums - 1.0).abs() > ALREADY_PROJECTED_EPS
    if todo.any():
        work[todo] /= sums[todo, None, None]
        work[:, c, c] = 0.0
        flat.copy_(work.to(weights.dtype))
    return weights


def project_constrained(weights: torch.Tensor) -> torch.Tensor:
    return project_constrained_(weights.detach().clone())


class ConstrainedConv2d(nn.Module):
    """Applies input * (delta - phi) per channel; phi is the prediction bank.

    The bank lives in float64 so the sum-to-one constraint survives storage
    precision even when normalization scales coefficients up; the kernel is
    cast to the input dtype at convolution time.
    """

    def __init__(self, in_channels=3, filters_per_channel=6, kernel_size=5):
        super().__init__()
        self.in_channels = in_channels
        self.filters_per_channel = filters_per_channel
        self.kernel_size = kernel_size
        phi = torch.empty(in_channels * filters_per_channel, 1, kernel_size, kernel_size,
                          dtype=torch.float64)
        phi.normal_(0.0, 0.1)
        project_constrained_(phi)
        self.phi = nn.Parameter(phi)

    @property
    def out_channels(self):
        return self.in_channels * self.filters_per_channel

    def residual_kernel(self) -> torch.Tensor:
        delta = torch.zeros_like(self.phi)
        c = self.kernel_size // 2
        delta[:, 0, c, c] = 1.0
        return delta - self.phi

    def forward(self, x):
        kernel = self.residual_kernel().to(x.dtype)
        return F.conv2d(x, kernel, padding=self.kernel_size // 2,
                        groups=self.in_channels)

    @torch.no_grad()
    def project_(self):
        project_constrained_(self.phi.data)
