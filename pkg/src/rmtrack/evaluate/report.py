"""Scoring one run against its ground truth, and merging several runs."""
from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from ..assoc import MOTORCYCLE, RIDER, form_instances, group_by_frame
from ..config import RunConfig
from ..violate import VIOLATIONS
from .tracking import instance_rows, match_frames, to_sequence, tracking_metrics
from .violations import (FN, TP, ABSENT, StageLabel, cer, eticket_label, eticket_prf,
                         majority_correspondence, plate_accuracy, rm_association_metric,
                         ticket_stages, violation_prf)

MODES = ("auto", "hil", "both")


@dataclass
class EvalReport:
    scenario: str
    n_frames: int
    tracking: dict
    rm_tracking: dict
    assoc_score_pct: float | None = None
    violations: dict = field(default_factory=dict)
    eticket: dict = field(default_factory=dict)
    plates: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"scenario": self.scenario, "n_frames": self.n_frames, "tracking": self.tracking,
                "rm_tracking": self.rm_tracking, "assoc_score_pct": self.assoc_score_pct,
                "violations": self.violations, "eticket": self.eticket, "plates": self.plates}


def gt_instance_frames(log):
    out = []
    for objs in log.frames:
        groups = defaultdict(lambda: [None, []])
        for o in sorted(objs, key=lambda o: o.gt_id):
            if o.cls == MOTORCYCLE:
                groups[o.assoc_gt_id][0] = o.bbox
            else:
                groups[o.assoc_gt_id][1].append(o.bbox)
        out.append([(m, rs) for _, (m, rs) in sorted(groups.items()) if m is not None])
    return out


def detection_instance_frames(detections, n_frames: int, cfg: RunConfig):
    """Per-frame instances formed from detections alone (no tracking)."""
    by_frame = group_by_frame(detections)
    out = []
    for t in range(n_frames):
        dets = by_frame.get(t, [])
        fi = form_instances([d for d in dets if d.cls == RIDER], [d for d in dets if d.cls == MOTORCYCLE],
                            cfg.tau_assoc, cfg.max_riders)
        out.append([(ins.motorcycle.bbox, [r.bbox for r in ins.riders]) for ins in fi.instances])
    return out


def rm_correspondence(gt_rm_rows, pred_rm_rows, n_frames: int, iou_thresh: float) -> dict:
    gt = to_sequence(gt_rm_rows, n_frames)
    pr = to_sequence(pred_rm_rows, n_frames)
    pairs = []
    for t, matched in enumerate(match_frames(gt, pr, iou_thresh)):
        for i, j in matched:
            pairs.append((int(gt.labels[gt.ids[t][i]]), int(pr.labels[pr.ids[t][j]])))
    lengths = Counter(r.track_id for r in pred_rm_rows)
    return majority_correspondence(pairs, lengths)


def score_tickets(tickets, gt_instances, correspondence):
    """E-ticket stage labels, plus (gt, predicted) plate pairs for credited tickets."""
    by_id = {ins.assoc_gt_id: ins for ins in gt_instances}
    claimed = set()
    labels, plates = [], []
    for tk in sorted(tickets, key=lambda t: t.assoc_id):
        g = correspondence.get(tk.assoc_id)
        ins = by_id.get(g) if g not in claimed else None
        stages = ticket_stages(tk, ins)
        if stages.violation == TP:
            claimed.add(g)
            plates.append((ins.plate, tk.plate or ""))
        labels.append(eticket_label(stages))
    for ins in gt_instances:
        if ins.violations and ins.assoc_gt_id not in claimed:
            labels.append(eticket_label(StageLabel(FN, ABSENT, ABSENT)))
    return labels, plates


def evaluate_run(log, pred_rows, detections=None, tickets=None, cfg: RunConfig | None = None,
                 mode: str = "both", name: str | None = None) -> EvalReport:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    cfg = cfg or RunConfig()
    n = log.n_frames
    gt_rows = log.track_rows()
    obj = tracking_metrics(gt_rows, pred_rows, n, cfg.iou_thresh, cfg.hota_alpha_step)
    gt_rm, pred_rm = instance_rows(gt_rows), instance_rows(pred_rows)
    rm = tracking_metrics(gt_rm, pred_rm, n, cfg.iou_thresh, cfg.hota_alpha_step)
    rep = EvalReport(name or log.name, n, obj, rm)

    if detections is not None:
        rep.assoc_score_pct = rm_association_metric(
            gt_instance_frames(log), detection_instance_frames(detections, n, cfg), cfg.iou_thresh)

    if tickets is not None:
        corr = rm_correspondence(gt_rm, pred_rm, n, cfg.iou_thresh)
        for v in VIOLATIONS:
            gt_flags = {ins.assoc_gt_id: v in ins.violations for ins in log.instances}
            pred_flags = {tk.assoc_id: v in tk.violations for tk in tickets}
            rep.violations[v] = violation_prf(gt_flags, pred_flags, corr)
        labels, pairs = score_tickets(tickets, log.instances, corr)
        if mode in ("auto", "both"):
            rep.eticket["automatic"] = eticket_prf(labels)
        if mode in ("hil", "both"):
            rep.eticket["human_in_the_loop"] = eticket_prf(labels, human_in_loop=True)
        rep.plates = {"n": len(pairs),
                      "cer": sum(cer(g, p) for g, p in pairs) / len(pairs) if pairs else None,
                      "plate_accuracy": plate_accuracy(pairs) if pairs else None}
    return rep


def _merge(values):
    present = [v for v in values if v is not None]
    if not present:
        return None
    first = present[0]
    if isinstance(first, dict):
        return {k: _merge([v.get(k) for v in present]) for k in first}
    if isinstance(first, list):
        return [_merge(col) for col in zip(*present)]
    if isinstance(first, bool) or isinstance(first, str):
        return first
    if isinstance(first, int):
        return sum(present)
    return sum(present) / len(present)


def aggregate(reports) -> dict:
    """Counts are summed, rates averaged over runs."""
    js = [r.to_json() for r in reports]
    out = {k: _merge([j[k] for j in js]) for k in ("tracking", "rm_tracking", "assoc_score_pct",
                                                   "violations", "eticket", "plates")}
    return {"n_scenarios": len(js), "n_frames": sum(j["n_frames"] for j in js), **out}


def report_document(reports) -> dict:
    return {"scenarios": [r.to_json() for r in reports], "aggregate": aggregate(reports)}


def write_report(path, reports):
    with open(path, "w") as f:
        json.dump(report_document(reports), f, indent=2)
        f.write("\n")
