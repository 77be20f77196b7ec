import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import finite_difference_grad, relative_grad_error
from mvforensics.losses import (LossWeights, WEIGHT_MULTIPLIERS, default_scale_weights,
                                joint_loss, joint_loss_terms, pretrain_loss,
                                step_weights, uniform_logits_value)


def oracle_joint_loss(scores, labels, pred_masks, true_masks, gamma, alpha, beta,
                      eps=1e-7, dice_eps=1e-7):
    """Straight-from-formula reference in plain floats."""
    n = len(scores)
    det = 0.0
    for y, p in zip(labels, scores):
        p = min(max(p, eps), 1 - eps)
        det += -(y * math.log(p) + (1 - y) * math.log(1 - p))
    det /= n
    pix = 0.0
    dice = 0.0
    for m, mh in zip(true_masks, pred_masks):
        m = np.asarray(m, dtype=float)
        mh = np.asarray(mh, dtype=float)
        mhc = np.clip(mh, eps, 1 - eps)
        pix += float(-(m * np.log(mhc) + (1 - m) * np.log(1 - mhc)).mean())
        num = 2.0 * float((m * mh).sum())
        den = float((m * m).sum() + (mh * mh).sum()) + dice_eps
        dice += 1.0 - num / den
    pix /= n
    dice /= n
    return gamma * det + alpha * pix + beta * dice


def oracle_pretrain_loss(logit_grids, true_class, scale_weights):
    """Per-cell softmax cross-entropy, summed with the documented weighting."""
    total = 0.0
    for k, grid in logit_grids.items():
        grid = np.asarray(grid, dtype=float)
        g = grid.shape[0]
        acc = 0.0
        for i in range(g):
            for j in range(g):
                z = grid[i, j]
                zmax = z.max()
                soft = np.exp(z - zmax) / np.exp(z - zmax).sum()
                acc += -math.log(soft[true_class])
        total += scale_weights[k] / (4.0 ** k) * acc
    return total


class TestJointLoss:
    def test_perfect_mask_uncertain_detection(self):
        # y=1, p=0.5, predicted mask equals the binary truth
        mask = torch.zeros(8, 8)
        mask[2:5, 2:5] = 1.0
        w = LossWeights(gamma=2.0, alpha=3.0, beta=5.0)
        loss = joint_loss(torch.tensor([0.5]), torch.tensor([1.0]),
                          mask[None], mask[None], w)
        assert float(loss) == pytest.approx(2.0 * math.log(2), abs=1e-4)

    def test_complete_mismatch_dice_one(self):
        mask = torch.zeros(6, 6)
        mask[:3] = 1.0
        _, _, dice = joint_loss_terms(torch.tensor([0.5]), torch.tensor([1.0]),
                                      (1 - mask)[None], mask[None])
        assert float(dice) == pytest.approx(1.0, abs=1e-6)

    def test_matches_oracle_on_random_instances(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(1, 4))
            scores = rng.uniform(0.01, 0.99, n)
            labels = rng.integers(0, 2, n).astype(float)
            pred = rng.uniform(0.01, 0.99, (n, 4, 4))
            true = rng.integers(0, 2, (n, 4, 4)).astype(float)
            g, a, b = rng.uniform(0.2, 2.0, 3)
            w = LossWeights(g, a, b)
            mine = float(joint_loss(torch.tensor(scores), torch.tensor(labels),
                                    torch.tensor(pred), torch.tensor(true), w))
            ref = oracle_joint_loss(scores, labels, pred, true, g, a, b)
            assert mine == pytest.approx(ref, abs=1e-9)

    def test_rejects_nan_with_location(self):
        scores = torch.tensor([0.5, float("nan")])
        with pytest.raises(ValueError, match=r"scores at index \[1\]"):
            joint_loss(scores, torch.tensor([1.0, 0.0]),
                       torch.rand(2, 4, 4), torch.zeros(2, 4, 4), LossWeights())

    def test_dice_permutation_invariant(self):
        rng = np.random.default_rng(1)
        m = rng.integers(0, 2, (1, 16)).astype(float)
        p = rng.uniform(0, 1, (1, 16))
        perm = rng.permutation(16)
        _, _, d1 = joint_loss_terms(torch.tensor([0.5]), torch.tensor([1.0]),
                                    torch.tensor(p.reshape(1, 4, 4)),
                                    torch.tensor(m.reshape(1, 4, 4)))
        _, _, d2 = joint_loss_terms(torch.tensor([0.5]), torch.tensor([1.0]),
                                    torch.tensor(p[:, perm].reshape(1, 4, 4)),
                                    torch.tensor(m[:, perm].reshape(1, 4, 4)))
        assert float(d1) == pytest.approx(float(d2), abs=1e-12)

    def test_per_pixel_dice_variant(self):
        m = torch.zeros(1, 2, 2, dtype=torch.float64)
        m[0, 0, 0] = 1.0
        p = torch.full((1, 2, 2), 0.5, dtype=torch.float64)
        _, _, dice = joint_loss_terms(torch.tensor([0.5]), torch.tensor([1.0]), p, m,
                                      dice_form="per_pixel")
        # sum over pixels of 2*m*p/(m^2+p^2): one pixel contributes 1/1.25,
        # the rest 0
        assert float(dice) == pytest.approx(1.0 - (2 * 0.5) / (1 + 0.25), abs=1e-6)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 3))
        loss = joint_loss(torch.tensor(rng.uniform(0.01, 0.99, n)),
                          torch.tensor(rng.integers(0, 2, n).astype(float)),
                          torch.tensor(rng.uniform(0, 1, (n, 3, 3))),
                          torch.tensor(rng.integers(0, 2, (n, 3, 3)).astype(float)),
                          LossWeights())
        assert float(loss) >= 0


class TestPretrainLoss:
    def test_uniform_logits_closed_form(self):
        sw = default_scale_weights()
        grids = {k: torch.zeros(2 ** k, 2 ** k, 10, dtype=torch.float64) for k in (3, 4, 5)}
        val = float(pretrain_loss(grids, 0, sw))
        expected = uniform_logits_value(10, sw)
        assert expected == pytest.approx(0.0225 * math.log(10), abs=1e-12)
        assert val == pytest.approx(expected, abs=1e-9)

    def test_confident_truth_goes_to_zero(self):
        sw = {3: 0.01}
        grids = {3: torch.zeros(8, 8, 4, dtype=torch.float64)}
        grids[3][..., 1] = 50.0
        assert float(pretrain_loss(grids, 1, sw)) == pytest.approx(0.0, abs=1e-12)

    def test_matches_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            grid = rng.normal(size=(8, 8, 4))
            c = int(rng.integers(0, 4))
            mine = float(pretrain_loss({3: torch.tensor(grid)}, c, {3: 0.01}))
            ref = oracle_pretrain_loss({3: grid}, c, {3: 0.01})
            assert mine == pytest.approx(ref, abs=1e-9)

    def test_shift_invariance(self):
        rng = np.random.default_rng(3)
        grid = torch.tensor(rng.normal(size=(8, 8, 5)))
        shifted = grid + torch.tensor(rng.normal(size=(8, 8, 1)))
        a = float(pretrain_loss({3: grid}, 2, {3: 0.01}))
        b = float(pretrain_loss({3: shifted}, 2, {3: 0.01}))
        assert a == pytest.approx(b, abs=1e-9)

    def test_class_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            pretrain_loss({3: torch.zeros(8, 8, 4)}, 4, {3: 0.01})

    def test_scale_mismatch(self):
        with pytest.raises(ValueError, match="scale mismatch"):
            pretrain_loss({3: torch.zeros(8, 8, 4)}, 0, {3: 0.01, 4: 0.0075})

    def test_wrong_grid_shape(self):
        with pytest.raises(ValueError, match="8x8"):
            pretrain_loss({3: torch.zeros(4, 4, 4)}, 0, {3: 0.01})

    def test_upper_bound(self):
        rng = np.random.default_rng(11)
        sw = default_scale_weights()
        grids = {k: torch.tensor(rng.normal(size=(2 ** k, 2 ** k, 6))) for k in (3, 4, 5)}
        val = float(pretrain_loss(grids, 1, sw))
        bound = 0.0
        for k, grid in grids.items():
            logp = torch.log_softmax(grid, dim=-1)
            bound += sw[k] * float((-logp[..., 1]).max())
        assert 0 <= val <= bound + 1e-9


class TestWeightSchedule:
    def test_epoch_zero(self):
        w = step_weights(LossWeights(), 0)
        assert (w.gamma, w.alpha, w.beta) == (1.0, 1.0, 1.0)

    def test_epoch_one(self):
        w = step_weights(LossWeights(), 1)
        assert (w.gamma, w.alpha, w.beta) == WEIGHT_MULTIPLIERS

    def test_epoch_two(self):
        w = step_weights(LossWeights(), 2)
        assert w.gamma == pytest.approx(0.9025, abs=1e-12)
        assert w.alpha == pytest.approx(0.64, abs=1e-12)
        assert w.beta == pytest.approx(1.3924, abs=1e-12)

    def test_epoch_three(self):
        w = step_weights(LossWeights(), 3)
        assert w.gamma == pytest.approx(0.857375, abs=1e-12)
        assert w.alpha == pytest.approx(0.512, abs=1e-12)
        assert w.beta == pytest.approx(1.643032, abs=1e-12)

    def test_negative_epoch(self):
        with pytest.raises(ValueError, match=">= 0"):
            step_weights(LossWeights(), -1)

    def test_weights_must_be_positive(self):
        with pytest.raises(ValueError, match="positive"):
            LossWeights(gamma=0.0)


class TestGradients:
    def test_joint_loss_grad_wrt_masks(self):
        rng = np.random.default_rng(0)
        scores = torch.tensor(rng.uniform(0.1, 0.9, 2))
        labels = torch.tensor([1.0, 0.0], dtype=torch.float64)
        true = torch.tensor(rng.integers(0, 2, (2, 4, 4)).astype(float))
        pred0 = torch.tensor(rng.uniform(0.1, 0.9, (2, 4, 4)))
        w = LossWeights(0.7, 1.3, 0.9)

        def fn(p):
            return joint_loss(scores, labels, p, true, w)

        pred = pred0.clone().requires_grad_(True)
        fn(pred).backward()
        numeric = finite_difference_grad(fn, pred0)
        assert relative_grad_error(pred.grad, numeric) < 1e-4

    def test_joint_loss_grad_wrt_scores(self):
        rng = np.random.default_rng(1)
        scores0 = torch.tensor(rng.uniform(0.1, 0.9, 3))
        labels = torch.tensor([1.0, 0.0, 1.0], dtype=torch.float64)
        pred = torch.tensor(rng.uniform(0.1, 0.9, (3, 4, 4)))
        true = torch.tensor(rng.integers(0, 2, (3, 4, 4)).astype(float))
        w = LossWeights()

        def fn(s):
            return joint_loss(s, labels, pred, true, w)

        s = scores0.clone().requires_grad_(True)
        fn(s).backward()
        numeric = finite_difference_grad(fn, scores0)
        assert relative_grad_error(s.grad, numeric) < 1e-4

    def test_pretrain_loss_grad(self):
        rng = np.random.default_rng(2)
        grid0 = torch.tensor(rng.normal(size=(4, 4, 3)))
        sw = {2: 0.01}

        def fn(g):
            return pretrain_loss({2: g}, 1, sw)

        g = grid0.clone().requires_grad_(True)
        fn(g).backward()
        numeric = finite_difference_grad(fn, grid0)
        assert relative_grad_error(g.grad, numeric) < 1e-4
