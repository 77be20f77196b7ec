"""Both training stages: camera-model pretraining of the spatial trunk, then
full-network training, with momentum SGD, geometric LR decay, per-epoch loss
weight scheduling, and the constrained-filter projection after every step."""

import csv
import logging
import os
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset

from .checkpoint import (Checkpoint, load_checkpoint, module_tensors,
                         optimizer_tensors, restore_optimizer, save_checkpoint)
from .config import RunConfig
from .features.flow import clip_flow_residuals, default_estimator
from .features.spatial import SpatialResidualExtractor
from .heads import PretrainClassifier
from .losses import LossWeights, joint_loss_terms, pretrain_loss, step_weights
from .model import AblationFlags, ForensicsNet, set_ablation

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerSchedule:
    stage: str
    initial_lr: float
    momentum: float
    decay: float
    every: int = 2

    def lr_at(self, epoch: int) -> float:
        if epoch < 0:
            raise ValueError("epoch must be >= 0")
        return self.initial_lr * self.decay ** (epoch // self.every)


def pretrain_schedule(cfg=None) -> OptimizerSchedule:
    c = cfg.pretrain if cfg else None
    return OptimizerSchedule("pretrain",
                             c.lr if c else 1.0e-3,
                             c.momentum if c else 0.96,
                             c.lr_decay if c else 0.65,
                             c.decay_every if c else 2)


def full_schedule(cfg=None) -> OptimizerSchedule:
    c = cfg.train if cfg else None
    return OptimizerSchedule("full",
                             c.lr if c else 6.0e-4,
                             c.momentum if c else 0.90,
                             c.lr_decay if c else 0.85,
                             c.decay_every if c else 2)


def seed_everything(seed: int):
    torch.manual_seed(seed)
    np.random.seed(seed % (2 ** 32))


class CameraFrames(Dataset):
    def __init__(self, dataset):
        self.frames = torch.from_numpy(dataset.frames)
        self.labels = torch.from_numpy(dataset.labels)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return self.frames[i], self.labels[i]


class WindowDataset(Dataset):
    """Per-frame samples: the 5-frame window, its precomputed flow residual
    map, the frame label, and the ground-truth mask."""

    def __init__(self, clips, estimator=None, flow_order="final", tags=None):
        estimator = estimator or default_estimator()
        self.items = []
        self.windows = []
        for ci, clip in enumerate(clips):
            if tags is not None and clip.tag not in tags:
                continue
            frames = torch.from_numpy(clip.frames)
            flow_res = clip_flow_residuals(frames, estimator, order=flow_order)
            masks = torch.from_numpy(clip.masks.astype(np.float32))
            labels = torch.from_numpy(clip.labels.astype(np.float32))
            for t in range(clip.length):
                idx = [min(max(t + d, 0), clip.length - 1) for d in (-2, -1, 0, 1, 2)]
                self.items.append((ci, t))
                self.windows.append((frames[idx], flow_res[t], labels[t], masks[t]))

    def __len__(self):
        return len(self.windows)

    def __getitem__(self, i):
        return self.windows[i]


def _make_loader(dataset, batch_size, seed, shuffle=True):
    gen = torch.Generator()
    gen.manual_seed(seed)
    return DataLoader(dataset, batch_size=batch_size, shuffle=shuffle,
                      generator=gen, num_workers=0)


def _set_lr(optimizer, lr):
    for group in optimizer.param_groups:
        group["lr"] = lr


def scale_cell_accuracy(trunk, classifier, dataset, batch_size=16) -> dict:
    """Fraction of correctly classified grid cells, per scale."""
    loader = DataLoader(CameraFrames(dataset), batch_size=batch_size, shuffle=False)
    correct = {k: 0 for k in classifier.scales}
    total = {k: 0 for k in classifier.scales}
    trunk.eval()
    classifier.eval()
    with torch.no_grad():
        for frames, labels in loader:
            logits = classifier(trunk(frames))
            for k, grid in logits.items():
                pred = grid.argmax(dim=-1)
                want = labels.view(-1, 1, 1).expand_as(pred)
                correct[k] += (pred == want).sum().item()
                total[k] += pred.numel()
    return {k: correct[k] / max(total[k], 1) for k in classifier.scales}


def pretrain(dataset, cfg: RunConfig, out_dir, seed=None, epochs=None):
    """Camera-model pretraining; returns (checkpoint path, trunk, classifier)."""
    seed = cfg.seed if seed is None else seed
    epochs = cfg.pretrain.epochs if epochs is None else epochs
    os.makedirs(out_dir, exist_ok=True)
    seed_everything(seed)
    num_classes = int(dataset.labels.max()) + 1
    trunk = SpatialResidualExtractor(cfg.model.residual_filters)
    classifier = PretrainClassifier(trunk.out_channels, num_classes,
                                    scales=cfg.model.pretrain_scales)
    scale_weights = dict(zip(cfg.model.pretrain_scales, cfg.model.pretrain_scale_weights))
    sched = pretrain_schedule(cfg)
    params = list(trunk.parameters()) + list(classifier.parameters())
    optimizer = torch.optim.SGD(params, lr=sched.initial_lr, momentum=sched.momentum)

    curves = []
    for epoch in range(epochs):
        lr = sched.lr_at(epoch)
        _set_lr(optimizer, lr)
        trunk.train()
        classifier.train()
        epoch_loss, steps = 0.0, 0
        for p in range(cfg.pretrain.passes_per_epoch):
            loader = _make_loader(CameraFrames(dataset), cfg.pretrain.batch_size,
                                  seed + 1000 * epoch + p)
            for frames, labels in loader:
                optimizer.zero_grad()
                logits = classifier(trunk(frames))
                loss = pretrain_loss(logits, labels, scale_weights)
                loss.backward()
                nn.utils.clip_grad_norm_(params, cfg.pretrain.grad_clip)
                optimizer.step()
                trunk.constrained.project_()
                epoch_loss += float(loss.detach())
                steps += 1
        acc = scale_cell_accuracy(trunk, classifier, dataset)
        curves.append({"epoch": epoch, "lr": lr, "loss": epoch_loss / max(steps, 1),
                       **{f"acc_k{k}": v for k, v in acc.items()}})
        log.info("pretrain epoch %d lr %.2e loss %.4f acc %s", epoch, lr,
                 curves[-1]["loss"], acc)

    _write_curves(os.path.join(out_dir, "pretrain_curves.csv"), curves)
    metrics = curves[-1] if curves else {}
    path = os.path.join(out_dir, "pretrain.ckpt")
    # only the trunk survives pretraining; the classification heads are dropped
    save_checkpoint(path, "pretrain", epochs - 1, cfg.to_dict(), metrics,
                    module_tensors(trunk, "spatial"))
    return path, trunk, classifier


def load_pretrained_trunk(model: ForensicsNet, ckpt_path):
    ckpt = load_checkpoint(ckpt_path)
    state = ckpt.state_dict("spatial")
    if not state:
        raise ValueError(f"checkpoint {ckpt_path} holds no spatial trunk weights")
    model.spatial.load_state_dict(state)
    return model


def detection_accuracy(model, dataset, batch_size=8) -> float:
    loader = DataLoader(dataset, batch_size=batch_size, shuffle=False)
    model.eval()
    hits, total = 0, 0
    with torch.no_grad():
        for windows, flow_res, labels, _ in loader:
            scores, _ = model(windows, flow_res)
            hits += ((scores > 0.5).float() == labels).sum().item()
            total += len(labels)
    return hits / max(total, 1)


def _write_curves(path, rows):
    if not rows:
        return
    keys = list(rows[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        writer.writerows(rows)


def train_full(train_clips, val_clips, cfg: RunConfig, out_dir, seed=None,
               epochs=None, pretrained=None, ablation=None, resume=None):
    """Full-network training; selects the best checkpoint by validation
    detection accuracy. Returns (best checkpoint path, model, curves)."""
    seed = cfg.seed if seed is None else seed
    epochs = cfg.train.epochs if epochs is None else epochs
    if not val_clips:
        raise ValueError("validation set must not be empty")
    h, w = train_clips[0].hw
    if h % 32 or w % 32:
        raise ValueError(f"clip resolution must be divisible by 32, got {h}x{w}")
    os.makedirs(out_dir, exist_ok=True)
    seed_everything(seed)

    model = ForensicsNet(cfg.model)
    if ablation is not None:
        set_ablation(model, ablation)
    if pretrained:
        load_pretrained_trunk(model, pretrained)
    freeze_constrained = cfg.model.freeze_constrained_after_pretrain and pretrained
    if freeze_constrained:
        model.spatial.constrained.phi.requires_grad_(False)

    estimator = default_estimator(levels=cfg.model.flow_levels,
                                  iterations=cfg.model.flow_iterations,
                                  alpha=cfg.model.flow_alpha)
    order = cfg.model.flow_argument_order
    train_ds = WindowDataset(train_clips, estimator, flow_order=order)
    val_ds = WindowDataset(val_clips, estimator, flow_order=order)
    warm_ds = None
    if cfg.train.splice_edit_warmup_epochs > 0:
        warm_ds = WindowDataset(train_clips, estimator, flow_order=order,
                                tags=("splice", "edit", "authentic"))

    sched = full_schedule(cfg)
    optimizer = torch.optim.SGD(model.parameters(), lr=sched.initial_lr,
                                momentum=sched.momentum)
    start_epoch = 0
    if resume:
        ckpt = load_checkpoint(resume)
        model.load_state_dict(ckpt.state_dict("model"))
        restore_optimizer(optimizer, list(model.named_parameters()), ckpt)
        start_epoch = ckpt.epoch + 1

    initial = LossWeights()
    curves = []
    best = {"val_accuracy": -1.0, "path": None}
    best_path = os.path.join(out_dir, "best.ckpt")
    for epoch in range(start_epoch, epochs):
        weights = step_weights(initial, epoch)
        lr = sched.lr_at(epoch)
        _set_lr(optimizer, lr)
        in_warmup = warm_ds is not None and epoch < cfg.train.splice_edit_warmup_epochs
        dataset = warm_ds if in_warmup else train_ds
        loader = _make_loader(dataset, cfg.train.batch_size, seed + epoch)
        model.train()
        sums = np.zeros(4)
        steps = 0
        for windows, flow_res, labels, masks in loader:
            optimizer.zero_grad()
            scores, pred_masks = model(windows, flow_res)
            det, pix, dice = joint_loss_terms(scores, labels, pred_masks, masks,
                                              dice_form=cfg.model.dice_form)
            loss = weights.gamma * det + weights.alpha * pix + weights.beta * dice
            loss.backward()
            nn.utils.clip_grad_norm_(model.parameters(), cfg.train.grad_clip)
            optimizer.step()
            if not freeze_constrained:
                model.project_constrained_()
            sums += [float(loss.detach()), float(det.detach()), float(pix.detach()), float(dice.detach())]
            steps += 1
        val_acc = detection_accuracy(model, val_ds)
        row = {"epoch": epoch, "lr": lr, "gamma": weights.gamma, "alpha": weights.alpha,
               "beta": weights.beta, "loss": sums[0] / max(steps, 1),
               "loss_detection": sums[1] / max(steps, 1),
               "loss_pixel": sums[2] / max(steps, 1),
               "loss_dice": sums[3] / max(steps, 1),
               "val_accuracy": val_acc}
        curves.append(row)
        log.info("train epoch %d lr %.2e loss %.4f val_acc %.3f", epoch, lr,
                 row["loss"], val_acc)
        if val_acc >= best["val_accuracy"]:
            best.update(val_accuracy=val_acc, path=best_path)
            _save_full(best_path, "full", epoch, cfg, row, model, optimizer)
    last_path = os.path.join(out_dir, "last.ckpt")
    _save_full(last_path, "full", epochs - 1, cfg, curves[-1] if curves else {},
               model, optimizer)
    _write_curves(os.path.join(out_dir, "train_curves.csv"), curves)
    return best["path"] or last_path, model, curves


def _save_full(path, stage, epoch, cfg, metrics, model, optimizer):
    tensors = module_tensors(model, "model")
    tensors.update(optimizer_tensors(optimizer, list(model.named_parameters())))
    extra = {"ablation": list(model.ablation.active())}
    save_checkpoint(path, stage, epoch, cfg.to_dict(), metrics, tensors, extra)


def load_model(ckpt_path, cfg: RunConfig = None) -> ForensicsNet:
    """Rebuild a model from a full-training checkpoint."""
    from .config import config_from_dict
    ckpt = load_checkpoint(ckpt_path)
    cfg = cfg or config_from_dict(ckpt.config)
    model = ForensicsNet(cfg.model)
    flags = ckpt.extra.get("ablation", [])
    if flags:
        set_ablation(model, AblationFlags.from_names(flags))
    model.load_state_dict(ckpt.state_dict("model"))
    model.eval()
    return model
