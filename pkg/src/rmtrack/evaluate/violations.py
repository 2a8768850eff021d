"""Association, violation, e-ticket and plate metrics."""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..geom import iou_box

TP, FP, FN = "TP", "FP", "FN"
ABSENT = "absent"
CORRECT, INCORRECT = "correct", "incorrect"


# --- per-frame R-M association ---------------------------------------------------

def _riders_correspond(gt_riders, pred_riders, thresh) -> bool:
    if len(gt_riders) != len(pred_riders):
        return False
    if not gt_riders:
        return True
    ok = np.array([[iou_box(g, p) >= thresh for p in pred_riders] for g in gt_riders])
    r, c = linear_sum_assignment(ok.astype(float), maximize=True)
    return bool(ok[r, c].all())


def instance_correct(gt, pred, thresh: float = 0.5) -> bool:
    """gt, pred: (motorcycle_box, [rider_boxes])."""
    return iou_box(gt[0], pred[0]) >= thresh and _riders_correspond(gt[1], pred[1], thresh)


def frame_correct_count(gt_instances, pred_instances, thresh: float = 0.5) -> int:
    if not gt_instances or not pred_instances:
        return 0
    ok = np.array([[instance_correct(g, p, thresh) for p in pred_instances] for g in gt_instances])
    r, c = linear_sum_assignment(ok.astype(float), maximize=True)
    return int(ok[r, c].sum())


def rm_association_metric(gt_frames, pred_frames, thresh: float = 0.5) -> float:
    """Percentage of ground-truth R-M instances reproduced by a predicted one.

    Each argument is a per-frame list of (motorcycle_box, [rider_boxes]).
    """
    total = sum(len(g) for g in gt_frames)
    if total == 0:
        return 100.0
    correct = sum(frame_correct_count(g, p, thresh) for g, p in zip(gt_frames, pred_frames))
    return 100.0 * correct / total


# --- precision / recall ---------------------------------------------------------------

def f1(precision: float, recall: float) -> float:
    return 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0


def prf(tp: int, fp: int, fn: int) -> dict:
    p = 100.0 * tp / (tp + fp) if tp + fp else 0.0
    r = 100.0 * tp / (tp + fn) if tp + fn else 0.0
    return {"precision": p, "recall": r, "f1": f1(p, r), "tp": tp, "fp": fp, "fn": fn}


def majority_correspondence(frame_matches, pred_lengths) -> dict:
    """Map each predicted track to the ground-truth track it is matched with
    in more than half of its frames.

    frame_matches: iterable of (gt_id, pred_id) per matched frame;
    pred_lengths: pred_id -> number of frames the prediction exists.
    """
    votes: dict = defaultdict(Counter)
    for g, p in frame_matches:
        votes[p][g] += 1
    out = {}
    for p, c in votes.items():
        g, n = min(c.items(), key=lambda kv: (-kv[1], kv[0]))
        if 2 * n > pred_lengths[p]:
            out[p] = g
    return out


def violation_prf(gt_flags: dict, pred_flags: dict, correspondence: dict) -> dict:
    """Track-level P/R/F1 in percent.

    gt_flags, pred_flags: track id -> bool; correspondence: pred id -> gt id.
    A ground-truth track is credited at most once.
    """
    claimed = set()
    tp = fp = 0
    for p in sorted(pred_flags):
        if not pred_flags[p]:
            continue
        g = correspondence.get(p)
        if g is not None and gt_flags.get(g) and g not in claimed:
            claimed.add(g)
            tp += 1
        else:
            fp += 1
    fn = sum(1 for g, v in gt_flags.items() if v and g not in claimed)
    return prf(tp, fp, fn)


# --- e-ticket truth table ---------------------------------------------------------

@dataclass(frozen=True)
class StageLabel:
    violation: str
    lp_detection: str
    lp_recognition: str


ETICKET_TABLE = {
    (TP, TP, CORRECT): TP,
    (TP, TP, INCORRECT): FP,
    (FP, TP, INCORRECT): FP,
    (FP, TP, CORRECT): FP,
    (TP, FP, INCORRECT): FP,
    (FP, FP, INCORRECT): FP,
    (FN, ABSENT, ABSENT): FN,
    (TP, FN, ABSENT): FN,
    # a wrongly flagged vehicle whose plate was never found
    (FP, FN, ABSENT): FP,
}


def eticket_label(s: StageLabel) -> str:
    key = (s.violation, s.lp_detection, s.lp_recognition)
    if key not in ETICKET_TABLE:
        raise ValueError(f"stage combination {key} is not an e-ticket outcome")
    return ETICKET_TABLE[key]


def eticket_prf(labels, human_in_loop: bool = False) -> dict:
    c = Counter(labels)
    fp = 0 if human_in_loop else c[FP]
    return prf(c[TP], fp, c[FN])


def ticket_stages(ticket, gt_instance) -> StageLabel:
    """Stage outcome of one emitted ticket against its matched ground-truth
    instance (None when unmatched)."""
    violating = gt_instance is not None and bool(gt_instance.violations)
    v = TP if violating else FP
    if ticket.plate is None:
        return StageLabel(v, FN, ABSENT)
    if gt_instance is None:
        return StageLabel(v, FP, INCORRECT)
    return StageLabel(v, TP, CORRECT if ticket.plate == gt_instance.plate else INCORRECT)


# --- plates ---------------------------------------------------------------------

def levenshtein(a: str, b: str) -> int:
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def cer(gt: str, pred: str) -> float:
    if not gt:
        raise ValueError("ground-truth plate must be nonempty")
    return levenshtein(gt, pred or "") / len(gt)


def plate_accuracy(pairs) -> float:
    pairs = list(pairs)
    if not pairs:
        return 0.0
    return 100.0 * sum(1 for g, p in pairs if g == p) / len(pairs)
