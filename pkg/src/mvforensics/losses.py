"""Training objectives: the weighted detection + localization loss with its
per-epoch weight schedule, and the multi-scale pretraining loss."""

import math
from dataclasses import dataclass

import torch

PROB_EPS = 1e-7
DICE_EPS = 1e-7

WEIGHT_MULTIPLIERS = (0.95, 0.80, 1.18)  # per-epoch factors for (gamma, alpha, beta)


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 1.0   # detection BCE weight
    alpha: float = 1.0   # pixel BCE weight
    beta: float = 1.0    # Dice weight

    def __post_init__(self):
        if min(self.gamma, self.alpha, self.beta) <= 0:
            raise ValueError("loss weights must stay positive")


def step_weights(initial: LossWeights, epoch: int) -> LossWeights:
    """Weights in effect at a given epoch: initial times multiplier^epoch."""
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    mg, ma, mb = WEIGHT_MULTIPLIERS
    return LossWeights(initial.gamma * mg ** epoch,
                       initial.alpha * ma ** epoch,
                       initial.beta * mb ** epoch)


def _check_finite(name, tensor):
    bad = ~torch.isfinite(tensor)
    if bad.any():
        idx = bad.nonzero()[0].tolist()
        raise ValueError(f"non-finite value in {name} at index {idx}")


def _clip(p):
    return p.clamp(PROB_EPS, 1.0 - PROB_EPS)


def dice_term(true_mask, pred_mask, form="standard"):
    """Soft Dice per frame. The standard form keeps the sums inside one ratio;
    the per-pixel form evaluates the ratio pixelwise before summing."""
    m = true_mask.flatten(1).double()
    p = pred_mask.flatten(1).double()
    if form == "standard":
        num = 2.0 * (m * p).sum(dim=1)
        den = (m * m).sum(dim=1) + (p * p).sum(dim=1) + DICE_EPS
        return 1.0 - num / den
    if form == "per_pixel":
        ratio = 2.0 * m * p / (m * m + p * p + DICE_EPS)
        return 1.0 - ratio.sum(dim=1)
    raise ValueError(f"unknown dice form {form!r}")


def joint_loss_terms(scores, labels, pred_masks, true_masks, dice_form="standard"):
    """Per-term values (detection BCE, pixel BCE, Dice), each averaged over the
    batch of frames."""
    for name, t in (("scores", scores), ("labels", labels),
                    ("pred_masks", pred_masks), ("true_masks", true_masks)):
        _check_finite(name, t)
    scores = scores.reshape(-1).double()
    labels = labels.reshape(-1).double()
    if pred_masks.ndim == 2:
        pred_masks = pred_masks[None]
        true_masks = true_masks[None]
    p = _clip(scores)
    detection = -(labels * p.log() + (1 - labels) * (1 - p).log()).mean()
    m = true_masks.double()
    mp = _clip(pred_masks.double())
    pixel = -(m * mp.log() + (1 - m) * (1 - mp).log()).flatten(1).mean(dim=1).mean()
    dice = dice_term(m, pred_masks.double(), form=dice_form).mean()
    return detection, pixel, dice


def joint_loss(scores, labels, pred_masks, true_masks, weights: LossWeights,
               dice_form="standard"):
    detection, pixel, dice = joint_loss_terms(
        scores, labels, pred_masks, true_masks, dice_form=dice_form)
    return weights.gamma * detection + weights.alpha * pixel + weights.beta * dice


def default_scale_weights(scales=(3, 4, 5), weights=(0.01, 0.0075, 0.005)) -> dict:
    return dict(zip(scales, weights))


def pretrain_loss(logits_by_scale: dict, true_class, scale_weights: dict):
    """Weighted multi-scale classification loss: each scale contributes its
    per-cell cross-entropy summed over the grid and normalized by 1/2^(2k),
    weighted by that scale's coefficient."""
    if set(logits_by_scale) != set(scale_weights):
        raise ValueError(
            f"scale mismatch: logits for {sorted(logits_by_scale)} but weights for "
            f"{sorted(scale_weights)}")
    total = None
    for k, logits in logits_by_scale.items():
        if logits.ndim == 3:
            logits = logits[None]
        b, gh, gw, c = logits.shape
        if (gh, gw) != (2 ** k, 2 ** k):
            raise ValueError(f"scale {k} grid must be {2**k}x{2**k}, got {gh}x{gw}")
        target = torch.as_tensor(true_class, device=logits.device).reshape(-1)
        if target.numel() == 1:
            target = target.expand(b)
        if ((target < 0) | (target >= c)).any():
            raise ValueError(f"class index out of range [0, {c})")
        logp = torch.log_softmax(logits.double(), dim=-1)
        picked = logp.gather(-1, target.view(b, 1, 1, 1).expand(b, gh, gw, 1))
        cell_ce = -picked.squeeze(-1)                       # (B, g, g)
        term = scale_weights[k] / (4.0 ** k) * cell_ce.sum(dim=(1, 2)).mean()
        total = term if total is None else total + term
    return total


def uniform_logits_value(num_classes, scale_weights: dict) -> float:
    """Closed form of the pretraining loss when every cell is maximally unsure."""
    return sum(scale_weights.values()) * math.log(num_classes)
