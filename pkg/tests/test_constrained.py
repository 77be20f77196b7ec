import logging

import pytest
import torch

from mvforensics.features.constrained import (ConstrainedConv2d, project_constrained,
                                              project_constrained_)


def kernel_invariant_ok(bank, tol=1e-6):
    k = bank.shape[-1]
    c = k // 2
    flat = bank.reshape(-1, k, k)
    centers = flat[:, c, c]
    sums = flat.sum(dim=(-1, -2)) - centers
    return bool((centers == 0).all()) and bool(((sums - 1).abs() < tol).all())


class TestProjection:
    def test_all_ones_kernel(self):
        bank = torch.ones(1, 1, 5, 5)
        out = project_constrained(bank)
        assert out[0, 0, 2, 2] == 0
        off = out[out != 0]
        assert off.numel() == 24
        assert torch.allclose(off, torch.full((24,), 1 / 24))

    def test_idempotent(self):
        bank = torch.randn(6, 1, 5, 5)
        once = project_constrained(bank)
        twice = project_constrained(once)
        assert torch.allclose(once, twice, atol=1e-7)

    def test_degenerate_kernel_reinitialized(self, caplog):
        bank = torch.zeros(2, 1, 5, 5)
        bank[0, 0, 0, 0], bank[0, 0, 0, 1] = 1.0, -1.0  # off-center sum 0
        bank[1] = torch.ones(5, 5)
        with caplog.at_level(logging.WARNING):
            out = project_constrained(bank)
        assert "degenerate" in caplog.text
        assert kernel_invariant_ok(out)

    def test_rejects_even_kernels(self):
        with pytest.raises(ValueError, match="odd"):
            project_constrained(torch.ones(1, 1, 4, 4))

    def test_invariant_after_random_steps(self):
        # the projection must hold after gradient updates at the training
        # stages' step sizes
        layer = ConstrainedConv2d(3, 4)
        opt = torch.optim.SGD(layer.parameters(), lr=1e-3, momentum=0.96)
        gen = torch.Generator().manual_seed(1)
        for _ in range(200):
            opt.zero_grad()
            layer.phi.grad = torch.randn(layer.phi.shape, generator=gen,
                                         dtype=layer.phi.dtype)
            opt.step()
            layer.project_()
            assert kernel_invariant_ok(layer.phi.data)


class TestConstrainedConv:
    def test_constant_input_zero_residual(self):
        layer = ConstrainedConv2d(3, 6)
        for value in (0.0, 0.3, 1.0):
            x = torch.full((1, 3, 32, 32), value)
            out = layer(x)
            # interior only: borders see zero padding
            assert out[..., 2:-2, 2:-2].abs().max() < 1e-6

    def test_offset_invariance(self):
        layer = ConstrainedConv2d(3, 6)
        x = torch.rand(1, 3, 32, 32)
        shifted = layer(x + 0.25) - layer(x)
        assert shifted[..., 2:-2, 2:-2].abs().max() < 1e-5

    def test_output_channels(self):
        layer = ConstrainedConv2d(3, 6)
        out = layer(torch.rand(2, 3, 16, 16))
        assert out.shape == (2, 18, 16, 16)

    def test_init_already_projected(self):
        layer = ConstrainedConv2d(3, 6)
        assert kernel_invariant_ok(layer.phi.data)
