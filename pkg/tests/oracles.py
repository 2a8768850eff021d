"""Independent reference computations used only by the test-suite."""
from __future__ import annotations

import itertools

import numpy as np


def matchings(index):
    """All subsets of hypotheses that use each track and detection at most once."""
    out = []
    n = len(index)
    for mask in range(1 << n):
        tracks, dets, ok = set(), set(), True
        for h in range(n):
            if mask >> h & 1:
                t, d = index[h]
                if t in tracks or d in dets:
                    ok = False
                    break
                tracks.add(t)
                dets.add(d)
        if ok:
            out.append([mask >> h & 1 for h in range(n)])
    return np.array(out, dtype=float).reshape(len(out), n)


def brute_force_joint(p) -> float:
    """Best objective over every feasible (t_r, t_m); links chosen per rider.

    Links decouple per rider once the selections are fixed (each rider may take
    at most one link to a selected motorcycle), so the best link choice for a
    rider is simply its largest positive weighted score.
    """
    l1, l2, l3 = p.lam
    Tr = matchings(p.r_index)
    Tm = matchings(p.m_index)
    base = (Tr @ (l1 * p.s_r))[:, None] + (Tm @ (l2 * p.s_m))[None, :]
    if p.n_r and p.n_m:
        link = np.where(p.feasible, l3 * np.where(p.feasible, p.a, 0.0), -np.inf)
        # bonus[i, m] = best link for rider i under moto selection m
        masked = np.where(Tm[None, :, :] > 0, link[:, None, :], -np.inf)
        bonus = np.maximum(masked.max(axis=2), 0.0)  # (nr, n_tm)
        base = base + Tr @ bonus
    return float(base.max())


def brute_force_joint_full(p) -> float:
    """Enumerates t_r, t_m and every link matrix; tiny problems only."""
    l1, l2, l3 = p.lam
    best = -np.inf
    a = np.where(p.feasible, p.a, 0.0)
    for tr in matchings(p.r_index):
        for tm in matchings(p.m_index):
            sel_r = [i for i in range(p.n_r) if tr[i]]
            sel_m = [j for j in range(p.n_m) if tm[j]]
            options = [[None] + [j for j in sel_m if p.feasible[i, j]] for i in sel_r]
            for choice in itertools.product(*options):
                val = l1 * tr @ p.s_r + l2 * tm @ p.s_m
                for i, j in zip(sel_r, choice):
                    if j is not None:
                        val += l3 * a[i, j]
                best = max(best, val)
    return float(best)


def lap_brute(index, weights) -> float:
    M = matchings(index)
    if M.size == 0:
        return 0.0
    return float((M @ np.asarray(weights, dtype=float)).max())


def random_problem(rng, max_tracks=4, max_dets=4, lam=(1.0, 1.0, 1.0), p_hyp=0.6):
    from rmtrack.tracker.joint import make_problem

    def hyps():
        nt = int(rng.integers(0, max_tracks + 1))
        nd = int(rng.integers(0, max_dets + 1))
        return [(t, d) for t in range(nt) for d in range(nd) if rng.random() < p_hyp]

    r_index, m_index = hyps(), hyps()
    s_r = rng.uniform(-0.3, 1.2, len(r_index))
    s_m = rng.uniform(-0.3, 1.2, len(m_index))
    a = rng.uniform(-1.0, 3.5, (len(r_index), len(m_index)))
    feasible = rng.random(a.shape) > 0.2
    a = np.where(feasible, a, -np.inf)
    return make_problem(s_r, s_m, a, feasible, r_index, m_index, lam)


def levenshtein(a: str, b: str) -> int:
    """Top-down recursion over suffixes; independent of the row-rolling DP."""
    import functools
    import sys
    sys.setrecursionlimit(max(sys.getrecursionlimit(), 4 * (len(a) + len(b)) + 100))

    @functools.lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        if a[i] == b[j]:
            return d(i + 1, j + 1)
        return 1 + min(d(i + 1, j), d(i, j + 1), d(i + 1, j + 1))
    return d(0, 0)


def pixel_set(mask) -> set:
    """Foreground cells of a mask as a set of (row, col)."""
    return {(int(r), int(c)) for r, c in zip(*np.nonzero(mask.dense))}


def set_iou(a: set, b: set) -> float:
    u = a | b
    return len(a & b) / len(u) if u else 0.0


def box_iou(a, b) -> float:
    """IoU of two (x, y, w, h) tuples, written out longhand."""
    ax2, ay2, bx2, by2 = a[0] + a[2], a[1] + a[3], b[0] + b[2], b[1] + b[3]
    iw = max(0.0, min(ax2, bx2) - max(a[0], b[0]))
    ih = max(0.0, min(ay2, by2) - max(a[1], b[1]))
    inter = iw * ih
    union = a[2] * a[3] + b[2] * b[3] - inter
    return inter / union if union > 0 else 0.0


def injections(n_from, n_to):
    """All partial injective maps from range(n_from) into range(n_to)."""
    import itertools
    for img in itertools.product(range(-1, n_to), repeat=n_from):
        used = [v for v in img if v >= 0]
        if len(used) == len(set(used)):
            yield img


def brute_idf1(gt_rows, pred_rows, thresh=0.5) -> float:
    """IDF1 by trying every one-to-one map from gt ids to pred ids."""
    gids = sorted({r.track_id for r in gt_rows})
    pids = sorted({r.track_id for r in pred_rows})
    frames = {}
    for r in gt_rows:
        frames.setdefault(r.frame, ([], []))[0].append(r)
    for r in pred_rows:
        frames.setdefault(r.frame, ([], []))[1].append(r)
    best = 0
    for img in injections(len(gids), len(pids)):
        m = {g: pids[v] for g, v in zip(gids, img) if v >= 0}
        idtp = 0
        for gs, ps in frames.values():
            for g in gs:
                for p in ps:
                    if m.get(g.track_id) == p.track_id and g.cls == p.cls and \
                            box_iou(g.bbox.as_list(), p.bbox.as_list()) >= thresh:
                        idtp += 1
        best = max(best, idtp)
    return 2 * best / (len(gt_rows) + len(pred_rows))


def brute_instance_correct_count(gt_frame, pred_frame, thresh=0.5) -> int:
    """Largest number of GT instances paired one-to-one with predictions that
    satisfy the definition, by exhaustive search over pairings."""
    import itertools

    def correct(g, p):
        if box_iou(g[0].as_list(), p[0].as_list()) < thresh or len(g[1]) != len(p[1]):
            return False
        return any(all(box_iou(a.as_list(), b.as_list()) >= thresh for a, b in zip(g[1], perm))
                   for perm in itertools.permutations(p[1]))

    best = 0
    for img in injections(len(gt_frame), len(pred_frame)):
        best = max(best, sum(1 for g, v in zip(gt_frame, img) if v >= 0 and correct(g, pred_frame[v])))
    return best
