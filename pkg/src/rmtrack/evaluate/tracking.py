"""CLEAR MOTA, IDF1 and HOTA over track rows, at object and R-M instance level."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..geom import BBox, iou_matrix, union_box

EPS = np.finfo(float).eps


class FrameRangeError(ValueError):
    pass


@dataclass
class Sequence:
    """Per-frame detections of one side (ground truth or prediction).

    ids are dense indices 0..n_ids-1; ``labels`` maps them back.
    """
    ids: list[np.ndarray]
    boxes: list[np.ndarray]
    classes: list[np.ndarray]
    labels: np.ndarray

    @property
    def n_frames(self) -> int:
        return len(self.ids)

    @property
    def n_ids(self) -> int:
        return len(self.labels)

    @property
    def n_dets(self) -> int:
        return sum(len(i) for i in self.ids)


def to_sequence(rows, n_frames: int) -> Sequence:
    labels = np.array(sorted({r.track_id for r in rows}), dtype=np.int64)
    dense = {int(v): k for k, v in enumerate(labels)}
    per = [[] for _ in range(n_frames)]
    for r in rows:
        if not 0 <= r.frame < n_frames:
            raise FrameRangeError(f"frame {r.frame} outside 0..{n_frames - 1}")
        per[r.frame].append(r)
    ids, boxes, classes = [], [], []
    for frame_rows in per:
        frame_rows.sort(key=lambda r: r.track_id)
        seen = [r.track_id for r in frame_rows]
        if len(set(seen)) != len(seen):
            raise ValueError(f"duplicate track id in frame {frame_rows[0].frame}")
        ids.append(np.array([dense[r.track_id] for r in frame_rows], dtype=np.int64))
        boxes.append(np.array([r.bbox.as_list() for r in frame_rows], dtype=float).reshape(-1, 4))
        classes.append(np.array([r.cls for r in frame_rows], dtype=object))
    return Sequence(ids, boxes, classes, labels)


def instance_rows(rows, cls: str = "rm"):
    """Collapse object rows into one row per (frame, R-M instance).

    The instance box is the union of its members. Rows without an assoc id
    become single-object instances keyed by the negated track id.
    """
    from ..tracker.sort import TrackRow
    groups = defaultdict(list)
    for r in rows:
        key = r.assoc_id if r.assoc_id >= 0 else -r.track_id
        groups[(r.frame, key)].append(r)
    out = []
    for (frame, key), members in sorted(groups.items()):
        box = union_box([m.bbox for m in members])
        out.append(TrackRow(frame, key, cls, key, box, max(m.conf for m in members)))
    return out


def _similarity(gt: Sequence, pr: Sequence, t: int) -> np.ndarray:
    if len(gt.ids[t]) == 0 or len(pr.ids[t]) == 0:
        return np.zeros((len(gt.ids[t]), len(pr.ids[t])))
    sim = iou_matrix([BBox(*b) for b in gt.boxes[t]], [BBox(*b) for b in pr.boxes[t]])
    sim[gt.classes[t][:, None] != pr.classes[t][None, :]] = 0.0
    return sim


def _check(gt: Sequence, pr: Sequence):
    if gt.n_frames != pr.n_frames:
        raise FrameRangeError(f"ground truth has {gt.n_frames} frames, prediction {pr.n_frames}")


def _valid(sim, thresh):
    return (sim >= thresh - EPS) & (sim > 0)


def match_frames(gt: Sequence, pr: Sequence, iou_thresh: float = 0.5) -> list[list[tuple[int, int]]]:
    """Per frame, a maximum-IoU one-to-one matching among pairs above threshold.

    Returned pairs index positions within the frame's gt/pred arrays.
    """
    _check(gt, pr)
    out = []
    for t in range(gt.n_frames):
        sim = _similarity(gt, pr, t)
        ok = _valid(sim, iou_thresh)
        w = np.where(ok, sim, 0.0)
        r, c = linear_sum_assignment(w, maximize=True)
        out.append([(int(i), int(j)) for i, j in zip(r, c) if ok[i, j]])
    return out


def clear_mota(gt: Sequence, pr: Sequence, iou_thresh: float = 0.5) -> dict:
    """CLEAR counts and MOTA; continuing last-frame matches are preferred."""
    _check(gt, pr)
    prev_frame = np.full(gt.n_ids, -1)       # pred matched in the previous frame
    last = np.full(gt.n_ids, -1)             # pred matched most recently
    tp = idsw = 0
    for t in range(gt.n_frames):
        g, p = gt.ids[t], pr.ids[t]
        if len(g) == 0 or len(p) == 0:
            prev_frame[:] = -1
            continue
        sim = _similarity(gt, pr, t)
        ok = _valid(sim, iou_thresh)
        score = 1000.0 * (prev_frame[g][:, None] == p[None, :]) + sim
        score[~ok] = 0.0
        r, c = linear_sum_assignment(score, maximize=True)
        keep = score[r, c] > 0
        r, c = r[keep], c[keep]
        mg, mp = g[r], p[c]
        idsw += int(np.sum((last[mg] >= 0) & (last[mg] != mp)))
        prev_frame[:] = -1
        prev_frame[mg] = mp
        last[mg] = mp
        tp += len(mg)
    n_gt, n_pr = gt.n_dets, pr.n_dets
    fn, fp = n_gt - tp, n_pr - tp
    mota = 1.0 - (fn + fp + idsw) / max(1, n_gt)
    if n_gt == 0 and n_pr == 0:
        mota = 1.0
    return {"mota": mota, "tp": tp, "fp": fp, "fn": fn, "idsw": idsw, "gt": n_gt}


def mota(gt: Sequence, pr: Sequence, iou_thresh: float = 0.5) -> float:
    return clear_mota(gt, pr, iou_thresh)["mota"]


def idf1(gt: Sequence, pr: Sequence, iou_thresh: float = 0.5) -> float:
    """Identity F1 under the globally optimal one-to-one id correspondence."""
    _check(gt, pr)
    n_gt, n_pr = gt.n_dets, pr.n_dets
    if n_gt == 0 and n_pr == 0:
        return 1.0
    counts = np.zeros((gt.n_ids, pr.n_ids))
    for t in range(gt.n_frames):
        g, p = gt.ids[t], pr.ids[t]
        if len(g) and len(p):
            ok = _valid(_similarity(gt, pr, t), iou_thresh)
            gi, pj = np.nonzero(ok)
            np.add.at(counts, (g[gi], p[pj]), 1)
    if counts.size == 0:
        return 0.0
    r, c = linear_sum_assignment(counts, maximize=True)
    idtp = counts[r, c].sum()
    return float(2 * idtp / (n_gt + n_pr))


def hota(gt: Sequence, pr: Sequence, alpha_step: float = 0.05) -> dict:
    """HOTA, DetA and AssA averaged over the localisation thresholds."""
    _check(gt, pr)
    alphas = np.round(alpha_step * np.arange(1, math.ceil(1.0 / alpha_step - 1e-9)), 12)
    n_a = len(alphas)
    n_gt, n_pr = gt.n_dets, pr.n_dets
    if n_gt == 0 or n_pr == 0:
        v = 1.0 if n_gt == n_pr else 0.0
        return {"hota": v, "det_a": v, "ass_a": v, "alphas": alphas.tolist(),
                "hota_alpha": [v] * n_a}

    # global alignment between ids, from soft per-frame overlaps
    potential = np.zeros((gt.n_ids, pr.n_ids))
    gt_count = np.zeros(gt.n_ids)
    pr_count = np.zeros(pr.n_ids)
    sims = []
    for t in range(gt.n_frames):
        g, p = gt.ids[t], pr.ids[t]
        sim = _similarity(gt, pr, t)
        sims.append(sim)
        gt_count[g] += 1
        pr_count[p] += 1
        if len(g) and len(p):
            denom = sim.sum(0)[None, :] + sim.sum(1)[:, None] - sim
            soft = np.zeros_like(sim)
            nz = denom > EPS
            soft[nz] = sim[nz] / denom[nz]
            potential[g[:, None], p[None, :]] += soft
    align = potential / (gt_count[:, None] + pr_count[None, :] - potential)

    tp = np.zeros(n_a)
    matches = np.zeros((n_a, gt.n_ids, pr.n_ids))
    for t in range(gt.n_frames):
        g, p = gt.ids[t], pr.ids[t]
        if len(g) == 0 or len(p) == 0:
            continue
        sim = sims[t]
        score = align[g[:, None], p[None, :]] * sim
        r, c = linear_sum_assignment(score, maximize=True)
        for a, alpha in enumerate(alphas):
            ok = (sim[r, c] >= alpha - EPS) & (score[r, c] > 0)
            tp[a] += ok.sum()
            matches[a, g[r[ok]], p[c[ok]]] += 1

    det_a = tp / (n_gt + n_pr - tp)
    ass_a = np.zeros(n_a)
    for a in range(n_a):
        m = matches[a]
        if tp[a] == 0:
            continue
        ass = m / np.maximum(1.0, gt_count[:, None] + pr_count[None, :] - m)
        ass_a[a] = (m * ass).sum() / tp[a]
    h = np.sqrt(det_a * ass_a)
    return {"hota": float(h.mean()), "det_a": float(det_a.mean()), "ass_a": float(ass_a.mean()),
            "alphas": alphas.tolist(), "hota_alpha": h.tolist()}


def tracking_metrics(gt_rows, pred_rows, n_frames: int, iou_thresh: float = 0.5,
                     alpha_step: float = 0.05) -> dict:
    gt = to_sequence(gt_rows, n_frames)
    pr = to_sequence(pred_rows, n_frames)
    h = hota(gt, pr, alpha_step)
    c = clear_mota(gt, pr, iou_thresh)
    return {"hota": h["hota"], "det_a": h["det_a"], "ass_a": h["ass_a"], "mota": c["mota"],
            "idf1": idf1(gt, pr, iou_thresh),
            "counts": {k: c[k] for k in ("tp", "fp", "fn", "idsw", "gt")},
            "alphas": h["alphas"], "hota_alpha": h["hota_alpha"]}
