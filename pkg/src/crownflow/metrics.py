"""Instance-segmentation scoring: IoU matching, PR/F1, AP@50.

Matching is detection-style greedy in descending score order (ties by
ascending prediction id); AP uses the 101-point interpolated
integrator, matches counted at IoU >= 0.5.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .raster import check_same_shape, instance_ids

REPORT_KEYS = ("precision", "recall", "f1", "mean_iou", "ap50",
               "n_gt", "n_pred", "n_matched")


@dataclass
class ScoredPrediction:
    labels: np.ndarray
    scores: dict = field(default_factory=dict)

    def __post_init__(self):
        for k in instance_ids(self.labels):
            self.scores.setdefault(int(k), 1.0)
        if not all(np.isfinite(v) for v in self.scores.values()):
            raise ValidationError("prediction scores must be finite")


def scores_from_prob(labels, prob):
    """Default confidence: mean foreground probability inside each instance."""
    check_same_shape(labels, prob)
    return {int(k): float(prob[labels == k].mean()) for k in instance_ids(labels)}


@dataclass
class MatchResult:
    pairs: list            # (gt_id, pred_id, iou)
    unmatched_gt: list
    unmatched_pred: list


def iou_matrix(gt, pred):
    """Pairwise IoU between gt and pred instances via a joint histogram.

    Entry (i, j) is the IoU of gt id i+1 with pred id j+1; ids are
    assumed 1..K (relabel first if not).
    """
    gt = np.asarray(gt)
    pred = np.asarray(pred)
    check_same_shape(gt, pred)
    ng = int(gt.max())
    np_ = int(pred.max())
    joint = np.bincount(gt.ravel().astype(np.int64) * (np_ + 1) + pred.ravel(),
                        minlength=(ng + 1) * (np_ + 1)).reshape(ng + 1, np_ + 1)
    inter = joint[1:, 1:].astype(np.float64)
    gt_area = joint[1:, :].sum(axis=1, keepdims=True)
    pred_area = joint[:, 1:].sum(axis=0, keepdims=True)
    union = gt_area + pred_area - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return iou


def _pred_order(sp):
    # descending score, ties by ascending id
    return sorted(sp.scores, key=lambda k: (-sp.scores[k], k))


def match_at_iou(gt, sp, tau):
    """Greedy one-to-one matching at IoU threshold ``tau``.

    Predictions are visited in descending score order; each takes the
    unmatched GT instance with the highest IoU >= tau (ties: lowest
    gt id).
    """
    if not 0.0 < tau <= 1.0:
        raise ValidationError(f"tau must be in (0,1], got {tau}")
    iou = iou_matrix(gt, sp.labels)
    taken = set()
    pairs = []
    for pid in _pred_order(sp):
        col = iou[:, pid - 1] if iou.size else np.zeros(0)
        best_gt, best_iou = 0, 0.0
        for gid in range(1, iou.shape[0] + 1):
            if gid in taken:
                continue
            v = col[gid - 1]
            if v >= tau and v > best_iou:
                best_gt, best_iou = gid, v
        if best_gt:
            taken.add(best_gt)
            pairs.append((best_gt, pid, float(best_iou)))
    gt_ids = [int(k) for k in instance_ids(gt)]
    pred_ids = list(sp.scores)
    matched_pred = {p for _, p, _ in pairs}
    return MatchResult(pairs=pairs,
                       unmatched_gt=[g for g in gt_ids if g not in taken],
                       unmatched_pred=[p for p in pred_ids if p not in matched_pred])


def average_precision_50(gt, sp):
    """101-point interpolated AP at IoU 0.5.

    Empty gt and empty pred is defined as 1.0; empty gt with any
    prediction is 0.0.
    """
    n_gt = instance_ids(gt).size
    n_pred = len(sp.scores)
    if n_gt == 0:
        return 1.0 if n_pred == 0 else 0.0
    if n_pred == 0:
        return 0.0
    match = match_at_iou(gt, sp, 0.5)
    matched = {p for _, p, _ in match.pairs}
    tp = 0
    precisions = []
    recalls = []
    for rank, pid in enumerate(_pred_order(sp), start=1):
        if pid in matched:
            tp += 1
        precisions.append(tp / rank)
        recalls.append(tp / n_gt)
    precisions = np.array(precisions)
    recalls = np.array(recalls)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 101):
        mask = recalls >= r - 1e-12
        ap += precisions[mask].max() if mask.any() else 0.0
    return float(ap / 101.0)


def summary(gt, sp, tau=0.5):
    """Precision/recall/F1/mean-matched-IoU/AP@50 report dict."""
    match = match_at_iou(gt, sp, tau)
    n_gt = instance_ids(gt).size
    n_pred = len(sp.scores)
    n_matched = len(match.pairs)
    precision = n_matched / n_pred if n_pred else 0.0
    recall = n_matched / n_gt if n_gt else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    mean_iou = float(np.mean([i for _, _, i in match.pairs])) if match.pairs else 0.0
    return {
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "mean_iou": mean_iou,
        "ap50": average_precision_50(gt, sp),
        "n_gt": int(n_gt),
        "n_pred": int(n_pred),
        "n_matched": n_matched,
    }
