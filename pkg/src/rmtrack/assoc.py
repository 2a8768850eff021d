"""Rider/motorcycle detections and their cross-mask association score."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .geom import (BBox, BinaryMask, GridSpec, MaskError, box_cells, mask_iou,
                   union_box)

RIDER = "rider"
MOTORCYCLE = "motorcycle"
CLASSES = (RIDER, MOTORCYCLE)


@dataclass(frozen=True, eq=False)
class SacDetection:
    frame: int
    cls: str
    bbox: BBox
    conf: float
    seg: BinaryMask
    cross: BinaryMask
    emb: np.ndarray | None = None
    attrs: dict = field(default_factory=dict)
    det_id: int = -1

    def __post_init__(self):
        if self.cls not in CLASSES:
            raise ValueError(f"unknown class {self.cls!r}")
        if not 0.0 <= self.conf <= 1.0:
            raise ValueError(f"confidence {self.conf} outside [0, 1]")
        if self.seg.grid != self.cross.grid:
            raise MaskError("seg and cross masks on different grids")
        if self.emb is not None:
            emb = np.asarray(self.emb, dtype=float)
            if abs(np.linalg.norm(emb) - 1.0) > 1e-6:
                raise ValueError("embedding is not unit norm")
            emb.flags.writeable = False
            object.__setattr__(self, "emb", emb)


class ClassError(ValueError):
    pass


def _restricted_iou(seg: BinaryMask, cross: BinaryMask, box: BBox) -> float:
    # equals mask_iou(seg, mask_restrict(cross, box)) without materializing the mask
    r0, r1, c0, c1 = box_cells(box, cross.grid)
    cw = cross.window
    if cw is not None:
        r0, r1 = max(r0, cw[0]), min(r1, cw[1])
        c0, c1 = max(c0, cw[2]), min(c1, cw[3])
    if cw is None or r1 <= r0 or c1 <= c0:
        return 0.0
    sub = cross.dense[r0:r1, c0:c1]
    n_restricted = int(np.count_nonzero(sub))
    if n_restricted == 0 or seg.count == 0:
        return 0.0
    inter = int(np.count_nonzero(sub & seg.dense[r0:r1, c0:c1]))
    return inter / (seg.count + n_restricted - inter)


def association_score(r: SacDetection, m: SacDetection) -> float:
    """Average of the rider-cross/moto-seg IoU and the rider-seg/moto-cross IoU,
    the latter with the motorcycle's cross mask cut down to the rider's box."""
    if r.cls != RIDER or m.cls != MOTORCYCLE:
        raise ClassError(f"expected (rider, motorcycle), got ({r.cls}, {m.cls})")
    if r.seg.grid != m.seg.grid:
        raise MaskError("rider and motorcycle masks on different grids")
    return 0.5 * (mask_iou(r.cross, m.seg) + _restricted_iou(r.seg, m.cross, r.bbox))


def build_matrix(riders: list[SacDetection], motos: list[SacDetection]) -> np.ndarray:
    out = np.zeros((len(riders), len(motos)))
    for k, r in enumerate(riders):
        for l, m in enumerate(motos):
            out[k, l] = association_score(r, m)
    return out


@dataclass(frozen=True, eq=False)
class RMInstance:
    motorcycle: SacDetection
    riders: tuple[SacDetection, ...]
    bbox: BBox
    instance_id: int | None = None

    @property
    def frame(self) -> int:
        return self.motorcycle.frame


@dataclass
class FrameInstances:
    instances: list[RMInstance]
    unassigned_riders: list[SacDetection]
    unassigned_motos: list[SacDetection]


def form_instances(riders: list[SacDetection], motos: list[SacDetection],
                   tau: float = 0.5, max_riders: int = 4) -> FrameInstances:
    """Attach each rider to its best-scoring motorcycle when that score reaches
    ``tau``. Ties go to the lower motorcycle index. A motorcycle keeps at most
    ``max_riders`` riders, preferring higher scores."""
    frames = {d.frame for d in riders} | {d.frame for d in motos}
    if len(frames) > 1:
        raise ValueError(f"detections span several frames: {sorted(frames)}")
    scores = build_matrix(riders, motos)
    attached: dict[int, list[tuple[float, int]]] = {}
    for k in range(len(riders)):
        if not motos:
            break
        l = int(np.argmax(scores[k]))  # first max on ties
        if scores[k, l] >= tau:
            attached.setdefault(l, []).append((scores[k, l], k))

    used = set()
    instances = []
    for l in sorted(attached):
        members = sorted(attached[l], key=lambda p: (-p[0], p[1]))[:max_riders]
        idx = sorted(k for _, k in members)
        used.update(idx)
        member_riders = tuple(riders[k] for k in idx)
        box = union_box([motos[l].bbox] + [r.bbox for r in member_riders])
        instances.append(RMInstance(motos[l], member_riders, box))
    unassigned_r = [r for k, r in enumerate(riders) if k not in used]
    unassigned_m = [m for l, m in enumerate(motos) if l not in attached]
    return FrameInstances(instances, unassigned_r, unassigned_m)


# --- detections JSON Lines ---------------------------------------------------

def detection_to_json(d: SacDetection) -> dict:
    out = {"frame": d.frame, "class": d.cls, "bbox": d.bbox.as_list(),
           "conf": d.conf, "seg": d.seg.to_json(), "cross": d.cross.to_json()}
    if d.emb is not None:
        out["emb"] = [float(v) for v in d.emb]
    if d.attrs:
        out["attrs"] = d.attrs
    out["det_id"] = d.det_id
    return out


def detection_from_json(obj: dict, grids: dict | None = None) -> SacDetection:
    grids = {} if grids is None else grids

    def mask(d):
        key = (int(d["w"]), int(d["h"]), float(d["cell"]))
        g = grids.setdefault(key, GridSpec(*key))
        return BinaryMask(g, tuple(int(r) for r in d["runs"]))

    emb = obj.get("emb")
    return SacDetection(
        frame=int(obj["frame"]), cls=obj["class"], bbox=BBox.from_list(obj["bbox"]),
        conf=float(obj["conf"]), seg=mask(obj["seg"]), cross=mask(obj["cross"]),
        emb=None if emb is None else np.asarray(emb, dtype=float),
        attrs=obj.get("attrs") or {}, det_id=int(obj["det_id"]))


def write_detections(path, dets: Iterable[SacDetection]):
    with open(path, "w") as f:
        for d in dets:
            f.write(json.dumps(detection_to_json(d), separators=(",", ":")))
            f.write("\n")


class DetectionFormatError(ValueError):
    pass


def read_detections(path) -> list[SacDetection]:
    grids: dict = {}
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                out.append(detection_from_json(json.loads(line), grids))
            except (KeyError, TypeError, ValueError) as exc:
                raise DetectionFormatError(f"{path}:{lineno}: {exc}") from exc
    return out


def group_by_frame(dets: Iterable[SacDetection]) -> dict[int, list[SacDetection]]:
    out: dict[int, list[SacDetection]] = {}
    for d in dets:
        out.setdefault(d.frame, []).append(d)
    return out
