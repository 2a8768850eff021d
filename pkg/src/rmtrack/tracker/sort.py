"""Online rider/motorcycle trackers.

``CrossAssociationTracker`` solves one joint program per frame so rider and
motorcycle assignments are chosen together with the links between them.
``IndependentTracker`` is the per-class ablation: two linear assignments and
association identities recovered afterwards from per-frame instances.
"""
from __future__ import annotations

import csv
import itertools
from collections import Counter, deque
from dataclasses import dataclass, field

import numpy as np

from ..assoc import MOTORCYCLE, RIDER, SacDetection, association_score, form_instances
from ..config import RunConfig
from ..geom import BBox, iou_matrix
from ..motion import KalmanState, kf_init, kf_predict, kf_update, predicted_box
from .joint import JointProblem, JointSolution, _max_matching, constraint_violations, solve_joint

TENTATIVE, CONFIRMED, DEAD = "tentative", "confirmed", "dead"


class FrameOrderError(ValueError):
    pass


class ConstraintError(AssertionError):
    pass


@dataclass
class Track:
    track_id: int
    cls: str
    kf: KalmanState
    buffer: deque
    emb: np.ndarray | None = None
    assoc_id: int | None = None
    hits: int = 1
    misses: int = 0
    age: int = 1
    status: str = TENTATIVE
    history: list = field(default_factory=list)  # (frame, detection) per match

    def set_assoc(self, assoc_id: int):
        if self.assoc_id is not None and self.assoc_id != assoc_id:
            raise ValueError(f"track {self.track_id} already carries assoc id {self.assoc_id}")
        self.assoc_id = assoc_id

    def det_at(self, frame: int) -> SacDetection | None:
        for f, d in reversed(self.buffer):
            if f == frame:
                return d
            if f < frame:
                break
        return None


@dataclass(frozen=True)
class TrackRow:
    frame: int
    track_id: int
    cls: str
    assoc_id: int
    bbox: BBox
    conf: float
    det_id: int = -1


def _cosine(a, b) -> float:
    if a is None or b is None:
        return 0.0
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def hypothesis_score(track: Track, det: SacDetection, cfg: RunConfig) -> float | None:
    """Motion + appearance score of continuing ``track`` with ``det``; None when gated out."""
    if track.cls != det.cls:
        raise ValueError("class mismatch")
    iou = iou_matrix([predicted_box(track.kf)], [det.bbox])[0, 0]
    if iou < cfg.gate_iou:
        return None
    return cfg.w_iou * iou + cfg.w_app * _cosine(track.emb, det.emb)


def buffered_assoc_score(rider: Track, rider_det: SacDetection, moto: Track,
                         moto_det: SacDetection, frame: int, cfg: RunConfig,
                         score=association_score) -> float | None:
    """Association summed over the last ``buffer_k`` frames plus the current
    one, minus ``theta``; None when the two tracks carry different assoc ids."""
    if rider.assoc_id is not None and moto.assoc_id is not None and rider.assoc_id != moto.assoc_id:
        return None
    total = score(rider_det, moto_det)
    for f in range(frame - cfg.buffer_k, frame):
        r, m = rider.det_at(f), moto.det_at(f)
        if r is not None and m is not None:
            total += score(r, m)
    return total - cfg.theta


class CrossAssociationTracker:
    joint = True

    def __init__(self, cfg: RunConfig | None = None, check_constraints: bool = False):
        self.cfg = cfg or RunConfig()
        self.check_constraints = check_constraints
        self.tracks: list[Track] = []     # live
        self.finished: list[Track] = []   # dead after being confirmed
        self.frame: int | None = None
        self._next_track = 1
        self._next_assoc = 1
        self._score_cache: dict[tuple[int, int], tuple] = {}
        self._cache_frame: dict[int, list] = {}
        self.n_solved = 0

    # -- association score with a per-frame cache of detection pairs --------
    def _score(self, r: SacDetection, m: SacDetection) -> float:
        key = (id(r), id(m))
        hit = self._score_cache.get(key)
        if hit is None:
            # keep the detections referenced so their ids stay unique
            hit = (association_score(r, m), r, m)
            self._score_cache[key] = hit
            self._cache_frame.setdefault(r.frame, []).append(key)
        return hit[0]

    def _prune_cache(self, frame: int):
        for f in [f for f in self._cache_frame if f < frame - self.cfg.buffer_k]:
            for key in self._cache_frame.pop(f):
                self._score_cache.pop(key, None)

    def _new_track(self, det: SacDetection, frame: int) -> Track:
        t = Track(self._next_track, det.cls, kf_init(det.bbox, self.cfg.motion),
                  deque([(frame, det)], maxlen=max(self.cfg.buffer_k, 1)),
                  emb=None if det.emb is None else np.array(det.emb))
        t.history.append((frame, det))
        if self.cfg.min_hits <= 1:
            t.status = CONFIRMED
        self._next_track += 1
        self.tracks.append(t)
        return t

    def _hypotheses(self, tracks: list[Track], dets: list[SacDetection]):
        index, scores = [], []
        if not tracks or not dets:
            return index, np.zeros(0)
        ious = iou_matrix([predicted_box(t.kf) for t in tracks], [d.bbox for d in dets])
        for ti, t in enumerate(tracks):
            for di, d in enumerate(dets):
                if ious[ti, di] >= self.cfg.gate_iou:
                    index.append((ti, di))
                    scores.append(self.cfg.w_iou * ious[ti, di]
                                  + self.cfg.w_app * _cosine(t.emb, d.emb))
        return index, np.array(scores, dtype=float)

    def _links(self, frame, r_tracks, r_dets, r_index, m_tracks, m_dets, m_index):
        nr, nm = len(r_index), len(m_index)
        a = np.full((nr, nm), -np.inf)
        feasible = np.zeros((nr, nm), dtype=bool)
        for i, (ti, di) in enumerate(r_index):
            for j, (tj, dj) in enumerate(m_index):
                v = buffered_assoc_score(r_tracks[ti], r_dets[di], m_tracks[tj], m_dets[dj],
                                         frame, self.cfg, score=self._score)
                if v is not None:
                    a[i, j] = v
                    feasible[i, j] = True
        return a, feasible

    def _solve(self, problem: JointProblem) -> JointSolution:
        sol = solve_joint(problem, cap=self.cfg.solver_cap)
        self.n_solved += 1
        if self.check_constraints:
            bad = constraint_violations(problem, sol)
            if bad:
                raise ConstraintError(f"frame {self.frame}: {bad}")
        return sol

    def step(self, frame: int, dets: list[SacDetection]) -> list[TrackRow]:
        if self.frame is not None and frame <= self.frame:
            raise FrameOrderError(f"frame {frame} after {self.frame}")
        if any(d.frame != frame for d in dets):
            raise FrameOrderError(f"detection from another frame passed to frame {frame}")
        if self.frame is not None:
            for skipped in range(self.frame + 1, frame):
                self._advance(skipped, [])
        self._prune_cache(frame)
        return self._advance(frame, dets)

    def _advance(self, frame: int, dets: list[SacDetection]) -> list[TrackRow]:
        cfg = self.cfg
        self.frame = frame
        live = self.tracks
        for t in live:
            t.kf = kf_predict(t.kf, cfg.motion)
            t.age += 1
        r_tracks = [t for t in live if t.cls == RIDER]
        m_tracks = [t for t in live if t.cls == MOTORCYCLE]
        r_dets = [d for d in dets if d.cls == RIDER]
        m_dets = [d for d in dets if d.cls == MOTORCYCLE]
        r_index, s_r = self._hypotheses(r_tracks, r_dets)
        m_index, s_m = self._hypotheses(m_tracks, m_dets)

        if self.joint and cfg.lambda3 != 0:
            a, feasible = self._links(frame, r_tracks, r_dets, r_index, m_tracks, m_dets, m_index)
        else:
            a = np.zeros((len(r_index), len(m_index)))
            feasible = np.ones_like(a, dtype=bool)
        problem = JointProblem(s_r, s_m, a, feasible, tuple(r_index), tuple(m_index),
                               cfg.lam if self.joint else (cfg.lambda1, cfg.lambda2, 0.0))
        sol = self._solve(problem)

        matched_r = {r_index[i]: i for i in np.flatnonzero(sol.t_r)}
        matched_m = {m_index[j]: j for j in np.flatnonzero(sol.t_m)}
        new_by_det: dict[int, Track] = {}
        for tracks, class_dets, matched in ((r_tracks, r_dets, matched_r), (m_tracks, m_dets, matched_m)):
            used_t = {ti: di for ti, di in matched}
            used_d = {di for _, di in matched}
            for ti, t in enumerate(tracks):
                if ti in used_t:
                    d = class_dets[used_t[ti]]
                    t.kf = kf_update(t.kf, d.bbox, cfg.motion)
                    t.hits += 1
                    t.misses = 0
                    t.buffer.append((frame, d))
                    t.history.append((frame, d))
                    if d.emb is not None:
                        if t.emb is None:
                            t.emb = np.array(d.emb)
                        else:
                            v = cfg.emb_momentum * t.emb + (1 - cfg.emb_momentum) * d.emb
                            t.emb = v / np.linalg.norm(v)
                    if t.status == TENTATIVE and t.hits >= cfg.min_hits:
                        t.status = CONFIRMED
                else:
                    t.misses += 1
                    if t.status == TENTATIVE or t.misses > cfg.max_age:
                        t.status = DEAD
            for di, d in enumerate(class_dets):
                if di not in used_d:
                    new_by_det[id(d)] = self._new_track(d, frame)

        for i, j in zip(*np.nonzero(sol.e)):
            rt = r_tracks[r_index[i][0]]
            mt = m_tracks[m_index[j][0]]
            self._link(rt, mt)

        for t in self.tracks:
            if t.status == DEAD and t.hits >= cfg.min_hits:
                self.finished.append(t)
        self.tracks = [t for t in self.tracks if t.status != DEAD]
        return [self._row(t, frame) for t in self.tracks
                if t.status == CONFIRMED and t.history and t.history[-1][0] == frame]

    def _link(self, rt: Track, mt: Track):
        if rt.assoc_id is None and mt.assoc_id is None:
            rt.set_assoc(self._next_assoc)
            mt.set_assoc(self._next_assoc)
            self._next_assoc += 1
        elif rt.assoc_id is None:
            rt.set_assoc(mt.assoc_id)
        elif mt.assoc_id is None:
            mt.set_assoc(rt.assoc_id)
        # equal ids: nothing to do; unequal ids cannot be linked (infeasible)

    @staticmethod
    def _row(t: Track, frame: int, assoc_id: int | None = None) -> TrackRow:
        det = t.history[-1][1]
        aid = t.assoc_id if assoc_id is None else assoc_id
        return TrackRow(frame, t.track_id, t.cls, -1 if aid is None else aid,
                        det.bbox, det.conf, det.det_id)

    def finalize(self) -> list[TrackRow]:
        """Every observation of every track that was ever confirmed, tagged
        with the track's final association id, ordered by (frame, track_id)."""
        rows = []
        for t in self.finished + self.tracks:
            if t.status == TENTATIVE:
                continue
            aid = -1 if t.assoc_id is None else t.assoc_id
            for f, d in t.history:
                rows.append(TrackRow(f, t.track_id, t.cls, aid, d.bbox, d.conf, d.det_id))
        rows.sort(key=lambda r: (r.frame, r.track_id))
        return rows

    def run(self, dets_by_frame: dict[int, list[SacDetection]], n_frames: int) -> list[TrackRow]:
        for f in range(n_frames):
            self.step(f, dets_by_frame.get(f, []))
        return self.finalize()


class IndependentTracker(CrossAssociationTracker):
    """Per-class SORT: no link variables during assignment."""
    joint = False

    def _solve(self, problem: JointProblem) -> JointSolution:
        l1, l2, _ = problem.lam
        _, chosen_r = _max_matching(problem.r_index, l1 * problem.s_r, range(problem.n_r))
        _, chosen_m = _max_matching(problem.m_index, l2 * problem.s_m, range(problem.n_m))
        t_r = np.zeros(problem.n_r, dtype=np.int8)
        t_m = np.zeros(problem.n_m, dtype=np.int8)
        t_r[chosen_r] = 1
        t_m[chosen_m] = 1
        e = np.zeros((problem.n_r, problem.n_m), dtype=np.int8)
        self.n_solved += 1
        obj = float(l1 * t_r @ problem.s_r + l2 * t_m @ problem.s_m)
        return JointSolution(t_r, t_m, e, obj)

    def finalize(self) -> list[TrackRow]:
        rows = super().finalize()
        kept = {r.track_id for r in rows}
        owner = {}  # id(detection) -> track_id
        by_frame: dict[int, list[SacDetection]] = {}
        for t in self.finished + self.tracks:
            if t.track_id in kept:
                for _, d in t.history:
                    owner[id(d)] = t.track_id
                    by_frame.setdefault(d.frame, []).append(d)
        votes: dict[int, Counter] = {}
        for f in sorted(by_frame):
            dets = sorted(by_frame[f], key=lambda d: owner[id(d)])
            riders = [d for d in dets if d.cls == RIDER]
            motos = [d for d in dets if d.cls == MOTORCYCLE]
            inst = form_instances(riders, motos, self.cfg.tau_assoc, self.cfg.max_riders)
            for ins in inst.instances:
                mt = owner[id(ins.motorcycle)]
                for r in ins.riders:
                    votes.setdefault(owner[id(r)], Counter())[mt] += 1
        rider_to_moto = {rt: min(c.items(), key=lambda kv: (-kv[1], kv[0]))[0]
                         for rt, c in votes.items()}
        assoc = {}
        next_id = itertools.count(1)
        for mt in sorted(set(rider_to_moto.values())):
            assoc[mt] = next(next_id)
        for rt, mt in rider_to_moto.items():
            assoc[rt] = assoc[mt]
        for t in self.finished + self.tracks:
            t.assoc_id = assoc.get(t.track_id)
        return [TrackRow(r.frame, r.track_id, r.cls, assoc.get(r.track_id, -1), r.bbox, r.conf, r.det_id)
                for r in rows]


def run_tracker(dets_by_frame, n_frames: int, cfg: RunConfig | None = None,
                baseline: bool = False, check_constraints: bool = False) -> list[TrackRow]:
    cls = IndependentTracker if baseline else CrossAssociationTracker
    return cls(cfg, check_constraints=check_constraints).run(dets_by_frame, n_frames)


def run_independent_baseline(dets_by_frame, n_frames: int, cfg: RunConfig | None = None) -> list[TrackRow]:
    return run_tracker(dets_by_frame, n_frames, cfg, baseline=True)


# --- track CSV ---------------------------------------------------------------

TRACK_HEADER = ["frame", "track_id", "class", "assoc_id", "x", "y", "w", "h", "conf"]


def write_tracks(path, rows: list[TrackRow]):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(TRACK_HEADER)
        for r in rows:
            w.writerow([r.frame, r.track_id, r.cls, r.assoc_id, repr(float(r.bbox.x)), repr(float(r.bbox.y)),
                        repr(float(r.bbox.w)), repr(float(r.bbox.h)), repr(float(r.conf))])


class TrackFormatError(ValueError):
    pass


def read_tracks(path) -> list[TrackRow]:
    rows = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header != TRACK_HEADER:
            raise TrackFormatError(f"{path}: expected header {','.join(TRACK_HEADER)}")
        for lineno, rec in enumerate(reader, 2):
            try:
                frame, tid, cls, aid, x, y, w, h, conf = rec
                if cls not in (RIDER, MOTORCYCLE):
                    raise ValueError(f"unknown class {cls!r}")
                rows.append(TrackRow(int(frame), int(tid), cls, int(aid),
                                     BBox(float(x), float(y), float(w), float(h)), float(conf)))
            except ValueError as exc:
                raise TrackFormatError(f"{path}:{lineno}: {exc}") from exc
    return rows
