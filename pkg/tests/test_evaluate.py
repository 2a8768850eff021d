import itertools
import json
import random

import numpy as np
import pytest

from rmtrack.assoc import MOTORCYCLE, RIDER, group_by_frame
from rmtrack.evaluate import (FrameRangeError, StageLabel, cer, clear_mota, eticket_label,
                              eticket_prf, evaluate_run, f1, hota, idf1, match_frames, mota,
                              plate_accuracy, rm_association_metric, to_sequence, violation_prf)
from rmtrack.evaluate.report import aggregate, write_report
from rmtrack.evaluate.violations import majority_correspondence, prf
from rmtrack.geom import BBox
from rmtrack.simulate import generate, get_preset, preset_suite
from rmtrack.tracker.sort import TrackRow, run_tracker
from rmtrack.violate import assemble_etickets

from oracles import box_iou, brute_idf1, brute_instance_correct_count, levenshtein


def row(frame, tid, box, cls=RIDER, aid=-1):
    return TrackRow(frame, tid, cls, aid, BBox(*box), 1.0)


def seqs(gt, pred, n):
    return to_sequence(gt, n), to_sequence(pred, n)


# --- scripted micro-sequences -------------------------------------------------

def miss_case():
    gt = [row(t, 1, (10 * t, 0, 10, 10)) for t in range(3)]
    return gt, gt[:2], 3


def fp_case():
    gt = [row(t, 1, (10 * t, 0, 10, 10)) for t in range(3)]
    return gt, gt + [row(1, 2, (200, 200, 10, 10))], 3


def idsw_case():
    gt = [row(t, 1, (5 * t, 0, 10, 10)) for t in range(10)]
    pred = [row(t, 1 if t < 5 else 2, (5 * t, 0, 10, 10)) for t in range(10)]
    return gt, pred, 10


@pytest.mark.parametrize("case,want_mota,want_idf1", [
    (miss_case, 2 / 3, 2 * 2 / 5),
    (fp_case, 2 / 3, 2 * 3 / 7),
    (idsw_case, 0.9, 2 * 5 / 20),
])
def test_micro_sequences(case, want_mota, want_idf1):
    gt, pred, n = case()
    g, p = seqs(gt, pred, n)
    assert mota(g, p) == pytest.approx(want_mota, abs=1e-12)
    assert idf1(g, p) == pytest.approx(want_idf1, abs=1e-12)
    assert idf1(g, p) == pytest.approx(brute_idf1(gt, pred), abs=1e-12)


def test_idsw_counts_and_hota():
    g, p = seqs(*idsw_case())
    c = clear_mota(g, p)
    assert (c["tp"], c["fp"], c["fn"], c["idsw"]) == (10, 0, 0, 1)
    h = hota(g, p)
    assert h["det_a"] == pytest.approx(1.0)
    assert h["ass_a"] == pytest.approx(0.5)
    assert h["hota"] == pytest.approx(np.sqrt(0.5))


def test_hota_localisation_sweep():
    gt = [row(0, 1, (0, 0, 10, 10))]
    pred = [row(0, 1, (0, 0, 10, 5))]       # IoU exactly 0.5
    h = hota(*seqs(gt, pred, 1))
    assert h["hota"] == pytest.approx(10 / 19, abs=1e-12)
    assert len(h["alphas"]) == 19


def test_perfect_tracking_every_preset():
    for sc in preset_suite():
        gt, _ = generate(sc)
        rows = gt.track_rows()
        g, p = seqs(rows, rows, sc.n_frames)
        assert mota(g, p) == 1.0 and idf1(g, p) == 1.0
        assert hota(g, p)["hota"] == 1.0


def test_relabel_invariance():
    sc = get_preset("nominal")
    gt, dets = generate(sc)
    pred = run_tracker(group_by_frame(dets), sc.n_frames)
    perm = {tid: 1000 - k for k, tid in enumerate(sorted({r.track_id for r in pred}))}
    relabeled = [TrackRow(r.frame, perm[r.track_id], r.cls, r.assoc_id, r.bbox, r.conf) for r in pred]
    g, p = seqs(gt.track_rows(), pred, sc.n_frames)
    _, q = seqs(gt.track_rows(), relabeled, sc.n_frames)
    assert mota(g, p) == mota(g, q)
    assert idf1(g, p) == idf1(g, q)
    assert hota(g, p)["hota"] == pytest.approx(hota(g, q)["hota"], abs=1e-12)
    h = hota(g, p)
    assert 0 <= h["hota"] <= 1 and 0 <= h["det_a"] <= 1 and 0 <= h["ass_a"] <= 1
    assert mota(g, p) <= 1


def test_class_aware():
    gt = [row(0, 1, (0, 0, 10, 10), RIDER)]
    pred = [row(0, 1, (0, 0, 10, 10), MOTORCYCLE)]
    g, p = seqs(gt, pred, 1)
    assert match_frames(g, p) == [[]]
    assert idf1(g, p) == 0.0


def test_match_frames_basic_and_oracle():
    gt = [row(0, k, (20 * k, 0, 10, 10)) for k in range(3)]
    g, p = seqs(gt, gt, 1)
    assert sorted(match_frames(g, p)[0]) == [(0, 0), (1, 1), (2, 2)]
    g, p = seqs(gt, [], 1)
    assert match_frames(g, p) == [[]]
    assert clear_mota(g, p)["fn"] == 3

    rng = random.Random(7)
    for _ in range(300):
        gb = [(rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(5, 15), rng.uniform(5, 15)) for _ in range(2)]
        pb = [(rng.uniform(0, 20), rng.uniform(0, 20), rng.uniform(5, 15), rng.uniform(5, 15)) for _ in range(2)]
        g, p = seqs([row(0, k, b) for k, b in enumerate(gb)], [row(0, k, b) for k, b in enumerate(pb)], 1)
        got = sum(box_iou(gb[i], pb[j]) for i, j in match_frames(g, p)[0])
        best = 0.0
        for perm in itertools.permutations(range(2)):
            best = max(best, sum(box_iou(gb[i], pb[j]) for i, j in enumerate(perm)
                                 if box_iou(gb[i], pb[j]) >= 0.5))
        assert got == pytest.approx(best, abs=1e-12)


def test_idf1_random_oracle():
    rng = random.Random(3)
    for _ in range(60):
        n = rng.randint(1, 5)
        gt, pred = [], []
        for t in range(n):
            for k in range(rng.randint(0, 3)):
                b = (30.0 * k, 0.0, 10.0, 10.0)
                gt.append(row(t, k + 1, b))
                if rng.random() < 0.8:
                    pred.append(row(t, rng.randint(1, 3) + 10 * k, (b[0] + rng.uniform(-3, 3), 0, 10, 10)))
        if not gt and not pred:
            continue
        g, p = seqs(gt, pred, n)
        assert idf1(g, p) == pytest.approx(brute_idf1(gt, pred), abs=1e-12)


def test_frame_mismatch():
    gt = [row(0, 1, (0, 0, 1, 1))]
    with pytest.raises(FrameRangeError):
        to_sequence([row(5, 1, (0, 0, 1, 1))], 3)
    g = to_sequence(gt, 3)
    with pytest.raises(FrameRangeError):
        mota(g, to_sequence(gt, 4))


# --- association metric ---------------------------------------------------------

def inst(mx, riders):
    return (BBox(mx, 50, 40, 30), [BBox(mx + 10 * k, 10, 10, 30) for k in range(riders)])


def test_association_examples():
    gt = [[inst(0, 2), inst(100, 1)]]
    assert rm_association_metric(gt, gt) == 100.0
    broken = [[(gt[0][0][0], gt[0][0][1][:1]), gt[0][1]]]
    assert rm_association_metric(gt, broken) == 50.0
    assert rm_association_metric(gt, [[]]) == 0.0


def test_association_random_oracle():
    rng = random.Random(11)
    for _ in range(150):
        gt = [inst(rng.choice([0, 60, 120]), rng.randint(1, 3)) for _ in range(rng.randint(0, 3))]
        pred = []
        for _ in range(rng.randint(0, 3)):
            m, rs = inst(rng.choice([0, 60, 120]) + rng.uniform(-8, 8), rng.randint(1, 3))
            rs = [BBox(r.x + rng.uniform(-4, 4), r.y, r.w, r.h) for r in rs]
            rng.shuffle(rs)
            pred.append((m, rs))
        want = 100.0 * brute_instance_correct_count(gt, pred) / len(gt) if gt else 100.0
        assert rm_association_metric([gt], [pred]) == pytest.approx(want, abs=1e-12)


# --- violations and e-tickets ----------------------------------------------------

def test_f1_arithmetic():
    assert f1(84.21, 63.16) == pytest.approx(72.18, abs=0.01)
    assert f1(100.0, 69.57) == pytest.approx(82.05, abs=0.01)
    assert f1(0, 0) == 0.0


def test_violation_prf():
    gt = {1: True, 2: False, 3: True}
    pred = {10: True, 20: False, 30: True}
    perfect = violation_prf(gt, pred, {10: 1, 20: 2, 30: 3})
    assert (perfect["precision"], perfect["recall"], perfect["f1"]) == (100.0, 100.0, 100.0)
    # duplicate prediction for one GT track is a false positive
    r = violation_prf(gt, {10: True, 11: True}, {10: 1, 11: 1})
    assert (r["tp"], r["fp"], r["fn"]) == (1, 1, 1)


def test_majority_correspondence():
    pairs = [(1, 10)] * 3 + [(2, 10)] * 1 + [(2, 20)] * 2
    corr = majority_correspondence(pairs, {10: 5, 20: 5})
    assert corr == {10: 1}


TABLE = [
    (("TP", "TP", "correct"), "TP"),
    (("TP", "TP", "incorrect"), "FP"),
    (("FP", "TP", "incorrect"), "FP"),
    (("FP", "TP", "correct"), "FP"),
    (("TP", "FP", "incorrect"), "FP"),
    (("FP", "FP", "incorrect"), "FP"),
    (("FN", "absent", "absent"), "FN"),
    (("TP", "FN", "absent"), "FN"),
]


def test_eticket_truth_table():
    for stages, want in TABLE:
        assert eticket_label(StageLabel(*stages)) == want
    assert eticket_label(StageLabel("FP", "FN", "absent")) == "FP"
    for bad in [("TP", "absent", "absent"), ("FN", "TP", "correct"), ("TP", "TP", "absent")]:
        with pytest.raises(ValueError):
            eticket_label(StageLabel(*bad))


def test_eticket_prf():
    labels = ["TP"] * 48 + ["FP"] * 9 + ["FN"] * 28
    auto = eticket_prf(labels)
    assert auto["precision"] == pytest.approx(84.21, abs=0.01)
    assert auto["recall"] == pytest.approx(63.16, abs=0.01)
    assert auto["f1"] == pytest.approx(72.18, abs=0.01)
    hil = eticket_prf(labels, human_in_loop=True)
    assert hil["precision"] == 100.0 and hil["recall"] == auto["recall"]
    assert eticket_prf([]) == prf(0, 0, 0)
    assert eticket_prf([])["f1"] == 0.0


# --- plates ---------------------------------------------------------------------

def test_cer_examples():
    assert cer("KA01AB1234", "KA01AB1234") == 0.0
    assert cer("KA01AB1234", "KA01AB1284") == pytest.approx(0.1)
    assert cer("AB", "") == 1.0
    with pytest.raises(ValueError):
        cer("", "AB")
    assert plate_accuracy([("A", "A"), ("B", "C")]) == 50.0


def test_cer_oracle_and_triangle():
    rng = random.Random(5)
    alphabet = "AB01."
    corpus = ["".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12))) for _ in range(60)]
    for _ in range(1000):
        a = "".join(rng.choice(alphabet) for _ in range(rng.randint(1, 12)))
        b = "".join(rng.choice(alphabet) for _ in range(rng.randint(0, 12)))
        assert cer(a, b) == levenshtein(a, b) / len(a)
    for a, b, c in itertools.islice(itertools.permutations(corpus, 3), 3000):
        assert cer(a, c) * len(a) <= cer(a, b) * len(a) + cer(b, c) * len(b)


# --- whole-run reports ---------------------------------------------------------

def test_noiseless_report(tmp_path):
    sc = get_preset("noiseless")
    gt, dets = generate(sc)
    rows = run_tracker(group_by_frame(dets), sc.n_frames)
    rep = evaluate_run(gt, rows, dets, assemble_etickets(rows, dets))
    for level in (rep.tracking, rep.rm_tracking):
        assert (level["hota"], level["mota"], level["idf1"]) == (1.0, 1.0, 1.0)
    assert rep.assoc_score_pct == 100.0
    assert rep.eticket["automatic"]["f1"] == 100.0
    assert rep.plates["cer"] == 0.0 and rep.plates["plate_accuracy"] == 100.0
    write_report(tmp_path / "r.json", [rep, rep])
    doc = json.loads((tmp_path / "r.json").read_text())
    assert list(doc) == ["scenarios", "aggregate"]
    assert list(doc["scenarios"][0]) == ["scenario", "n_frames", "tracking", "rm_tracking",
                                         "assoc_score_pct", "violations", "eticket", "plates"]
    agg = aggregate([rep, rep])
    assert agg["tracking"]["counts"]["gt"] == 2 * rep.tracking["counts"]["gt"]
    assert agg["tracking"]["hota"] == 1.0


def test_report_modes():
    sc = get_preset("noiseless")
    gt, dets = generate(sc)
    rows = run_tracker(group_by_frame(dets), sc.n_frames)
    tk = assemble_etickets(rows, dets)
    assert list(evaluate_run(gt, rows, dets, tk, mode="hil").eticket) == ["human_in_the_loop"]
    assert list(evaluate_run(gt, rows, dets, tk, mode="auto").eticket) == ["automatic"]
    with pytest.raises(ValueError):
        evaluate_run(gt, rows, mode="strict")
