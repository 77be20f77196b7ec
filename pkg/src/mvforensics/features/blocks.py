"""Shared convolutional building blocks."""

import torch
from torch import nn


class SqueezeExcite(nn.Module):
    def __init__(self, channels, reduction=4):
        super().__init__()
        hidden = max(1, channels // reduction)
        self.fc1 = nn.Conv2d(channels, hidden, 1)
        self.fc2 = nn.Conv2d(hidden, channels, 1)
        self.act = nn.SiLU()

    def forward(self, x):
        gate = x.mean(dim=(2, 3), keepdim=True)
        gate = torch.sigmoid(self.fc2(self.act(self.fc1(gate))))
        return x * gate


class FusedInvertedResidual(nn.Module):
    """Fused expand-project block: 3x3 expansion conv, SiLU, optional channel
    gating, 1x1 projection, skip connection when the shape is preserved."""

    def __init__(self, in_channels, out_channels, stride=1, expand_ratio=4, use_se=True):
        super().__init__()
        hidden = in_channels * expand_ratio
        self.expand = nn.Conv2d(in_channels, hidden, 3, stride=stride, padding=1, bias=False)
        self.bn1 = nn.BatchNorm2d(hidden)
        self.act = nn.SiLU()
        self.se = SqueezeExcite(hidden) if use_se else nn.Identity()
        self.project = nn.Conv2d(hidden, out_channels, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_channels)
        self.use_skip = stride == 1 and in_channels == out_channels

    def forward(self, x):
        out = self.act(self.bn1(self.expand(x)))
        out = self.bn2(self.project(self.se(out)))
        if self.use_skip:
            out = out + x
        return out


def conv_bn_act(in_channels, out_channels, kernel_size=3, stride=1):
    return nn.Sequential(
        nn.Conv2d(in_channels, out_channels, kernel_size, stride=stride,
                  padding=kernel_size // 2, bias=False),
        nn.BatchNorm2d(out_channels),
        nn.SiLU(),
    )
