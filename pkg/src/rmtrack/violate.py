"""Track-level consolidation of helmet, rider-count and plate evidence into e-tickets."""
from __future__ import annotations

import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

from .assoc import MOTORCYCLE, RIDER, SacDetection

HELMET = "helmet"
NO_HELMET = "no_helmet"
TRIPLE = "triple"
NO_HELMET_V = "no_helmet"
TRIPLE_V = "triple_riding"
VIOLATIONS = (NO_HELMET_V, TRIPLE_V)


class DanglingDetectionError(KeyError):
    pass


def consolidate_helmet(observations) -> str:
    """Majority label over a rider track; ties and empty input give 'helmet'."""
    c = Counter(o for o in observations if o in (HELMET, NO_HELMET))
    return NO_HELMET if c[NO_HELMET] > c[HELMET] else HELMET


def consolidate_triple(count_labels, m: int = 1) -> bool:
    if m < 1:
        raise ValueError("m must be >= 1")
    return sum(1 for c in count_labels if c == TRIPLE) >= m


def is_complete_plate(text: str | None) -> bool:
    return bool(text) and "." not in text and "#" not in text


def consolidate_plate(reads) -> str | None:
    """Modal complete plate string from (text, conf) reads.

    Partial reads are ignored; ties go to the larger summed confidence, then
    to the lexicographically smaller string.
    """
    confs: dict[str, list[float]] = defaultdict(list)
    for text, c in reads:
        if is_complete_plate(text):
            confs[text].append(float(c))
    if not confs:
        return None
    # fsum is exactly rounded, so the tie-break does not depend on read order
    return min(confs, key=lambda s: (-len(confs[s]), -math.fsum(confs[s]), s))


@dataclass(frozen=True)
class ETicket:
    assoc_id: int
    violations: tuple[str, ...]
    plate: str | None
    evidence_frames: tuple[int, ...]
    per_rider_helmet: dict = field(default_factory=dict)   # rider track_id -> label

    def __post_init__(self):
        if not self.violations:
            raise ValueError("an e-ticket needs at least one violation")
        if not self.evidence_frames:
            raise ValueError("an e-ticket needs evidence frames")
        bad = set(self.violations) - set(VIOLATIONS)
        if bad:
            raise ValueError(f"unknown violations {sorted(bad)}")

    def to_json(self) -> dict:
        return {"assoc_id": self.assoc_id, "violations": list(self.violations), "plate": self.plate,
                "evidence_frames": list(self.evidence_frames),
                "per_rider_helmet": {str(k): v for k, v in sorted(self.per_rider_helmet.items())}}

    @classmethod
    def from_json(cls, d: dict) -> "ETicket":
        return cls(int(d["assoc_id"]), tuple(d["violations"]), d.get("plate"),
                   tuple(int(f) for f in d["evidence_frames"]),
                   {int(k): v for k, v in d.get("per_rider_helmet", {}).items()})


def _plate_read(det: SacDetection):
    p = det.attrs.get("plate")
    if isinstance(p, dict):
        return p.get("text"), p.get("conf", 0.0)
    if isinstance(p, str):
        return p, det.conf
    return None


def attach_det_ids(rows, detections):
    """Recover det_ids for rows read back from a track CSV.

    Rows carry their detection's exact box, so (frame, class, box) is a key.
    """
    key = {}
    for d in detections:
        key.setdefault((d.frame, d.cls, tuple(d.bbox.as_list())), d.det_id)
    out = []
    for r in rows:
        k = (r.frame, r.cls, tuple(r.bbox.as_list()))
        if k not in key:
            raise DanglingDetectionError(f"track {r.track_id} frame {r.frame}: no detection with this box")
        out.append(replace(r, det_id=key[k]))
    return out


def assemble_etickets(rows, detections, tau_triple: int = 1) -> list[ETicket]:
    """Group confirmed tracks by assoc_id, consolidate, and keep violating groups.

    rows: tracker output (TrackRow); detections: iterable of SacDetection or a
    det_id -> detection mapping. Rows with det_id < 0 carry no evidence.
    """
    by_id = detections if isinstance(detections, dict) else {d.det_id: d for d in detections}
    groups: dict[int, dict[int, list]] = defaultdict(lambda: defaultdict(list))
    classes: dict[int, str] = {}
    for r in rows:
        if r.assoc_id < 0 or r.det_id < 0:
            continue
        if r.det_id not in by_id:
            raise DanglingDetectionError(f"track {r.track_id} frame {r.frame}: unknown det_id {r.det_id}")
        groups[r.assoc_id][r.track_id].append((r.frame, by_id[r.det_id]))
        classes[r.track_id] = r.cls

    tickets = []
    for aid in sorted(groups):
        tracks = groups[aid]
        helmet = {}
        evidence = set()
        counts, reads, triple_frames = [], [], []
        for tid in sorted(tracks):
            obs = tracks[tid]
            if classes[tid] == RIDER:
                helmet[tid] = consolidate_helmet(d.attrs.get("helmet") for _, d in obs)
                if helmet[tid] == NO_HELMET:
                    evidence.update(f for f, d in obs if d.attrs.get("helmet") == NO_HELMET)
            elif classes[tid] == MOTORCYCLE:
                for f, d in obs:
                    c = d.attrs.get("count")
                    counts.append(c)
                    if c == TRIPLE:
                        triple_frames.append(f)
                    pr = _plate_read(d)
                    if pr is not None:
                        reads.append(pr)
        violations = []
        if any(v == NO_HELMET for v in helmet.values()):
            violations.append(NO_HELMET_V)
        if counts and consolidate_triple(counts, tau_triple):
            violations.append(TRIPLE_V)
            evidence.update(triple_frames)
        if violations:
            tickets.append(ETicket(aid, tuple(violations), consolidate_plate(reads),
                                   tuple(sorted(evidence)), helmet))
    return tickets


def write_etickets(path, tickets):
    with open(path, "w") as f:
        json.dump([t.to_json() for t in tickets], f, indent=2)
        f.write("\n")


def read_etickets(path) -> list[ETicket]:
    with open(path) as f:
        data = json.load(f)
    if not isinstance(data, list):
        raise ValueError(f"{path}: expected a JSON array")
    return [ETicket.from_json(d) for d in data]
