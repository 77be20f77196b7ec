"""Evaluation: frame-level detection average precision, pixel-level
localization F1, dataset evaluation reports, and the compression ladder sweep."""

import json
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .datagen.manipulate import reencode_clip
from .heads import score_from_mask
from .training import WindowDataset, default_estimator


def average_precision(scores, labels) -> float:
    """Step-wise area under the precision-recall curve over descending score
    thresholds. Tied scores enter as one group; precision is taken after the
    whole group is admitted."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1 or len(scores) == 0:
        raise ValueError("scores and labels must be equal-length 1-D sequences")
    pos = int((labels == 1).sum())
    neg = int((labels == 0).sum())
    if pos + neg != len(labels):
        raise ValueError("labels must be 0 or 1")
    if pos == 0 or neg == 0:
        raise ValueError("average precision needs at least one positive and one negative label")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    n = len(scores)
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int((sorted_labels[i:j] == 1).sum())
        fp += int((sorted_labels[i:j] == 0).sum())
        recall = tp / pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return float(ap)


def pixel_f1(pred_mask, gt_mask, threshold=0.5) -> float:
    """F1 of the thresholded mask against binary ground truth. Two entirely
    empty masks count as a perfect match (F1 = 1)."""
    pred = np.asarray(pred_mask, dtype=np.float64)
    gt = np.asarray(gt_mask)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    if not np.isin(gt, (0, 1)).all():
        raise ValueError("ground-truth mask must be binary")
    hard = pred >= threshold
    gt = gt.astype(bool)
    tp = int(np.logical_and(hard, gt).sum())
    fp = int(np.logical_and(hard, ~gt).sum())
    fn = int(np.logical_and(~hard, gt).sum())
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (2.0 * tp + fp + fn)


@dataclass
class EvalReport:
    map_pooled: float
    mean_f1: float
    per_dataset_ap: dict
    threshold: float
    num_frames: int
    num_manipulated: int
    config: dict = field(default_factory=dict)
    quality: str = None
    runtime_s: float = None
    best_threshold: float = None
    best_threshold_f1: float = None

    def to_dict(self):
        return {k: v for k, v in self.__dict__.items() if not k.startswith("_")}

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)


def predict_clip(model, clip, estimator=None, flow_order="final", batch_size=8):
    """Per-frame scores and masks for one clip."""
    ds = WindowDataset([clip], estimator or default_estimator(), flow_order=flow_order)
    loader = torch.utils.data.DataLoader(ds, batch_size=batch_size, shuffle=False)
    scores, masks = [], []
    model.eval()
    with torch.no_grad():
        for windows, flow_res, _, _ in loader:
            s, m = model(windows, flow_res)
            scores.append(s)
            masks.append(m)
    return torch.cat(scores).numpy(), torch.cat(masks).numpy()


def records_from_clips(model, clips, estimator=None, flow_order="final",
                       use_mask_score=False):
    """Per-frame records (dataset id, label, score, predicted mask, gt mask)."""
    records = []
    for ci, clip in enumerate(clips):
        scores, masks = predict_clip(model, clip, estimator, flow_order)
        if use_mask_score:
            scores = masks.reshape(len(masks), -1).max(axis=1)
        for t in range(clip.length):
            records.append({
                "dataset": clip.tag, "clip": ci, "frame": t,
                "label": int(clip.labels[t]), "score": float(scores[t]),
                "pred_mask": masks[t], "gt_mask": clip.masks[t],
            })
    return records


def metrics_from_records(records, threshold=0.5, sweep_threshold=False) -> dict:
    scores = [r["score"] for r in records]
    labels = [r["label"] for r in records]
    pooled = average_precision(scores, labels)
    per_dataset = {}
    for name in sorted({r["dataset"] for r in records}):
        sub = [r for r in records if r["dataset"] == name]
        sub_labels = [r["label"] for r in sub]
        if 0 < sum(sub_labels) < len(sub_labels):
            per_dataset[name] = average_precision([r["score"] for r in sub], sub_labels)
    manipulated = [r for r in records if r["label"] == 1]
    f1s = [pixel_f1(r["pred_mask"], r["gt_mask"], threshold) for r in manipulated]
    out = {
        "map_pooled": pooled,
        "per_dataset_ap": per_dataset,
        "mean_f1": float(np.mean(f1s)) if f1s else 0.0,
        "num_frames": len(records),
        "num_manipulated": len(manipulated),
    }
    if sweep_threshold:
        best_t, best_f1 = threshold, out["mean_f1"]
        for t in np.linspace(0.05, 0.95, 19):
            f1 = float(np.mean([pixel_f1(r["pred_mask"], r["gt_mask"], t)
                                for r in manipulated])) if manipulated else 0.0
            if f1 > best_f1:
                best_t, best_f1 = float(t), f1
        out["best_threshold"] = best_t
        out["best_threshold_f1"] = best_f1
    return out


def evaluate(model, clips, threshold=0.5, estimator=None, flow_order="final",
             use_mask_score=False, sweep_threshold=False, config=None) -> EvalReport:
    """Full evaluation pass over a clip set."""
    import time
    if not clips:
        raise ValueError("empty dataset")
    t0 = time.perf_counter()
    records = records_from_clips(model, clips, estimator, flow_order,
                                 use_mask_score=use_mask_score)
    m = metrics_from_records(records, threshold, sweep_threshold=sweep_threshold)
    report = EvalReport(
        map_pooled=m["map_pooled"], mean_f1=m["mean_f1"],
        per_dataset_ap=m["per_dataset_ap"], threshold=threshold,
        num_frames=m["num_frames"], num_manipulated=m["num_manipulated"],
        config=config or {}, runtime_s=time.perf_counter() - t0,
        best_threshold=m.get("best_threshold"),
        best_threshold_f1=m.get("best_threshold_f1"))
    report._records = records
    return report


def compression_sweep(model, clips, qualities, threshold=0.5, estimator=None,
                      flow_order="final", config=None, plot_path=None):
    """Evaluate over the quality ladder; reports come back in ladder order."""
    reports = []
    for quality in qualities:
        transformed = [reencode_clip(c, quality) for c in clips]
        rep = evaluate(model, transformed, threshold=threshold, estimator=estimator,
                       flow_order=flow_order, config=config)
        rep.quality = quality
        reports.append(rep)
    if plot_path:
        from .plotting import line_plot_svg
        table = [{"quality": r.quality, "map": r.map_pooled, "f1": r.mean_f1}
                 for r in reports]
        line_plot_svg(
            plot_path, list(range(len(reports))),
            {"detection mAP": [r.map_pooled for r in reports],
             "localization F1": [r.mean_f1 for r in reports]},
            title="metrics vs re-encode quality",
            xlabel="quality level", ylabel="score",
            xticklabels=[r.quality for r in reports],
            metadata={"table": table})
    return reports


def save_records(records, directory):
    """Persist per-frame records so metrics can be recomputed without a model."""
    from PIL import Image
    os.makedirs(directory, exist_ok=True)
    index = []
    for i, r in enumerate(records):
        mask8 = np.clip(np.round(r["pred_mask"] * 255), 0, 255).astype(np.uint8)
        name = f"pred_{i:05d}.png"
        Image.fromarray(mask8, mode="L").save(os.path.join(directory, name))
        gt_name = f"gt_{i:05d}.png"
        Image.fromarray((r["gt_mask"] > 0).astype(np.uint8) * 255, mode="L").save(
            os.path.join(directory, gt_name))
        index.append({"dataset": r["dataset"], "clip": r["clip"], "frame": r["frame"],
                      "label": r["label"], "score": r["score"],
                      "pred_mask": name, "gt_mask": gt_name})
    with open(os.path.join(directory, "records.json"), "w") as fh:
        json.dump(index, fh, indent=1)


def load_records(directory):
    from PIL import Image
    with open(os.path.join(directory, "records.json")) as fh:
        index = json.load(fh)
    records = []
    for r in index:
        pred = np.asarray(Image.open(os.path.join(directory, r["pred_mask"])),
                          dtype=np.float64) / 255.0
        gt = (np.asarray(Image.open(os.path.join(directory, r["gt_mask"]))) > 0).astype(np.uint8)
        records.append({**r, "pred_mask": pred, "gt_mask": gt})
    return records
