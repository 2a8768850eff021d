"""Synthetic rider/motorcycle sequences: ground truth plus corrupted detections.

All randomness comes from Philox counter-based generators derived from the
scenario seed, with separate streams for the world (spawns, trajectories,
occluders) and for detector noise, so changing a noise knob never moves the
ground truth.
"""
from __future__ import annotations

import json
import math
import string
from dataclasses import dataclass, field

import numpy as np

from ..assoc import MOTORCYCLE, RIDER, SacDetection
from ..geom import BBox, BinaryMask, GridSpec, box_cells, iou_box, rasterize_box, union_box
from .scenario import Scenario

EMB_DIM = 16
COUNT_LABELS = ("none", "single", "double", "triple")
PLATE_BLUR = "."
PLATE_HIDDEN = "#"

# instance layout, as fractions of the instance box height
RIDER_BAND = (0.0, 0.55)
MOTO_BAND = (0.5, 1.0)


@dataclass(frozen=True)
class GTObject:
    gt_id: int
    cls: str
    bbox: BBox
    assoc_gt_id: int
    helmet_label: str | None = None
    count_label: str | None = None
    plate: str | None = None
    occluded_fraction: float = 0.0

    def to_json(self) -> dict:
        d = {"gt_id": self.gt_id, "class": self.cls, "bbox": self.bbox.as_list(),
             "assoc_gt_id": self.assoc_gt_id, "occluded_fraction": self.occluded_fraction}
        if self.cls == RIDER:
            d["helmet_label"] = self.helmet_label
        else:
            d["count_label"] = self.count_label
            d["plate"] = self.plate
        return d

    @classmethod
    def from_json(cls, d: dict) -> "GTObject":
        return cls(int(d["gt_id"]), d["class"], BBox.from_list(d["bbox"]), int(d["assoc_gt_id"]),
                   d.get("helmet_label"), d.get("count_label"), d.get("plate"),
                   float(d.get("occluded_fraction", 0.0)))


@dataclass(frozen=True)
class GTInstance:
    assoc_gt_id: int
    moto_gt_id: int
    rider_gt_ids: tuple[int, ...]
    helmet: dict            # rider gt_id -> helmet | no_helmet
    plate: str
    first_frame: int
    last_frame: int

    @property
    def triple(self) -> bool:
        return len(self.rider_gt_ids) >= 3

    @property
    def violations(self) -> tuple[str, ...]:
        out = []
        if any(v == "no_helmet" for v in self.helmet.values()):
            out.append("no_helmet")
        if self.triple:
            out.append("triple_riding")
        return tuple(out)

    def to_json(self) -> dict:
        return {"assoc_gt_id": self.assoc_gt_id, "moto_gt_id": self.moto_gt_id,
                "rider_gt_ids": list(self.rider_gt_ids),
                "helmet": {str(k): v for k, v in self.helmet.items()},
                "plate": self.plate, "violations": list(self.violations),
                "first_frame": self.first_frame, "last_frame": self.last_frame}

    @classmethod
    def from_json(cls, d: dict) -> "GTInstance":
        return cls(int(d["assoc_gt_id"]), int(d["moto_gt_id"]), tuple(int(v) for v in d["rider_gt_ids"]),
                   {int(k): v for k, v in d["helmet"].items()}, d["plate"],
                   int(d["first_frame"]), int(d["last_frame"]))


@dataclass
class GroundTruthLog:
    name: str
    n_frames: int
    image_w: int
    image_h: int
    grid: GridSpec
    frames: list[list[GTObject]] = field(default_factory=list)
    instances: list[GTInstance] = field(default_factory=list)

    def write(self, path):
        with open(path, "w") as f:
            meta = {"type": "meta", "name": self.name, "n_frames": self.n_frames,
                    "image_w": self.image_w, "image_h": self.image_h,
                    "grid": {"w": self.grid.grid_w, "h": self.grid.grid_h, "cell": self.grid.cell_size}}
            f.write(json.dumps(meta, separators=(",", ":")) + "\n")
            for t, objs in enumerate(self.frames):
                rec = {"type": "frame", "frame": t, "objects": [o.to_json() for o in objs]}
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")
            for ins in self.instances:
                rec = {"type": "instance", **ins.to_json()}
                f.write(json.dumps(rec, separators=(",", ":")) + "\n")

    @classmethod
    def read(cls, path) -> "GroundTruthLog":
        log = None
        frames: dict[int, list[GTObject]] = {}
        instances = []
        with open(path) as f:
            for lineno, line in enumerate(f, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                    kind = rec["type"]
                    if kind == "meta":
                        g = rec["grid"]
                        log = cls(rec["name"], int(rec["n_frames"]), int(rec["image_w"]),
                                  int(rec["image_h"]), GridSpec(int(g["w"]), int(g["h"]), float(g["cell"])))
                    elif kind == "frame":
                        frames[int(rec["frame"])] = [GTObject.from_json(o) for o in rec["objects"]]
                    elif kind == "instance":
                        instances.append(GTInstance.from_json(rec))
                    else:
                        raise ValueError(f"unknown record type {kind!r}")
                except (KeyError, TypeError, ValueError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
        if log is None:
            raise ValueError(f"{path}: missing meta record")
        log.frames = [frames.get(t, []) for t in range(log.n_frames)]
        log.instances = instances
        return log

    def track_rows(self):
        """Ground truth in the tracker CSV layout."""
        from ..tracker.sort import TrackRow
        return [TrackRow(t, o.gt_id, o.cls, o.assoc_gt_id, o.bbox, 1.0)
                for t, objs in enumerate(self.frames) for o in objs]


# --- world ---------------------------------------------------------------------

@dataclass
class _Entity:
    assoc_gt_id: int
    moto_gt_id: int
    rider_gt_ids: list[int]
    helmet: list[str]
    plate: str
    w: float
    h: float
    path: list[tuple[float, float]]   # top-left per frame from first_frame
    first_frame: int
    embs: dict                         # gt_id -> unit vector

    @property
    def last_frame(self) -> int:
        return self.first_frame + len(self.path) - 1

    def boxes(self, t: int) -> tuple[BBox, list[BBox], BBox]:
        x, y = self.path[t - self.first_frame]
        return instance_layout(x, y, self.w, self.h, len(self.rider_gt_ids))


def instance_layout(x, y, w, h, n_riders) -> tuple[BBox, list[BBox], BBox]:
    """Motorcycle box (lower band), rider boxes (upper band slices), union box."""
    moto = BBox(x, y + MOTO_BAND[0] * h, w, (MOTO_BAND[1] - MOTO_BAND[0]) * h)
    rh = (RIDER_BAND[1] - RIDER_BAND[0]) * h
    riders = [BBox(x + i * w / n_riders, y + RIDER_BAND[0] * h, w / n_riders, rh)
              for i in range(n_riders)]
    return moto, riders, BBox(x, y, w, h)


def _unit(rng, dim=EMB_DIM) -> np.ndarray:
    v = rng.normal(size=dim)
    return v / np.linalg.norm(v)


def _plate(rng, template: str) -> str:
    out = []
    for c in template:
        pool = string.ascii_uppercase if c == "L" else string.digits
        out.append(pool[int(rng.integers(len(pool)))])
    return "".join(out)


def _trajectory(sc: Scenario, x, y, vx, vy, turn, w, h, start) -> list[tuple[float, float]]:
    dx, dy = sc.motion.ego_drift
    path = []
    for _ in range(start, sc.n_frames):
        if x < 0 or y < 0 or x + w > sc.image_w or y + h > sc.image_h:
            break
        path.append((x, y))
        c, s = math.cos(turn), math.sin(turn)
        vx, vy = c * vx - s * vy, s * vx + c * vy
        x, y = x + vx + dx, y + vy + dy
    return path


class _World:
    def __init__(self, sc: Scenario, rng):
        self.sc = sc
        self.rng = rng
        self.entities: list[_Entity] = []
        self.next_gt = 1
        self.next_assoc = 1

    def active(self, t):
        return [e for e in self.entities if e.first_frame <= t <= e.last_frame]

    def try_spawn(self, t: int) -> bool:
        sc, rng = self.sc, self.rng
        sp, mo = sc.spawn, sc.motion
        w = rng.uniform(*sp.width)
        h = w * rng.uniform(*sp.height_ratio)
        if w >= sc.image_w or h >= sc.image_h:
            return False
        x = rng.uniform(0, sc.image_w - w)
        y = rng.uniform(0, sc.image_h - h)
        speed = rng.uniform(*mo.speed)
        direction = 1.0 if rng.random() < 0.5 else -1.0
        if rng.random() < mo.opposite_frac:
            speed *= mo.opposite_speed_mult
        slope = rng.uniform(-mo.vertical_frac, mo.vertical_frac)
        vx = direction * speed / math.hypot(1.0, slope)
        vy = vx * slope * direction
        turn = rng.uniform(-mo.curvature, mo.curvature)
        n_riders = 1 + int(rng.choice(3, p=np.asarray(sp.rider_count_probs)))
        helmet = ["helmet" if rng.random() < sp.helmet_prob else "no_helmet" for _ in range(n_riders)]
        plate = _plate(rng, sp.plate_templates[int(rng.integers(len(sp.plate_templates)))])
        embs = [_unit(rng) for _ in range(n_riders + 1)]
        if w / n_riders < 2 * sc.cell_size:
            return False
        box = BBox(x, y, w, h)
        for e in self.active(t):
            if iou_box(box, e.boxes(t)[2]) > 0.0:
                return False
        path = _trajectory(sc, x, y, vx, vy, turn, w, h, t)
        long_enough = len(path) >= sp.min_lifetime
        if not long_enough:
            return False
        moto_id = self.next_gt
        rider_ids = list(range(moto_id + 1, moto_id + 1 + n_riders))
        self.next_gt += n_riders + 1
        ent = _Entity(self.next_assoc, moto_id, rider_ids, helmet, plate, w, h, path, t,
                      dict(zip([moto_id] + rider_ids, embs)))
        self.next_assoc += 1
        self.entities.append(ent)
        return True

    def spawn_step(self, t: int):
        sc = self.sc
        if t == 0:
            want = sc.spawn.initial
        else:
            want = int(self.rng.poisson(sc.spawn.rate))
        if t > sc.n_frames - sc.spawn.min_lifetime:
            want = 0
        for _ in range(want):
            if len(self.active(t)) >= sc.spawn.max_active:
                break
            for _attempt in range(20):
                if self.try_spawn(t):
                    break


def _occluder_boxes(sc: Scenario, rng) -> list[tuple[float, float, float]]:
    out = []
    ow, oh = sc.occluders.size
    for _ in range(sc.occluders.count):
        x0 = rng.uniform(-ow, sc.image_w)
        y0 = rng.uniform(0, max(sc.image_h - oh, 1.0))
        v = sc.occluders.speed * (1.0 if rng.random() < 0.5 else -1.0)
        out.append((x0, y0, v))
    return out


def _occluder_mask(sc: Scenario, occ, t: int, grid: GridSpec) -> np.ndarray:
    arr = np.zeros((grid.grid_h, grid.grid_w), dtype=bool)
    ow, oh = sc.occluders.size
    span = sc.image_w + ow
    for x0, y0, v in occ:
        x = (x0 + ow + v * t) % span - ow
        r0, r1, c0, c1 = box_cells(BBox(x, y0, ow, oh), grid)
        arr[r0:r1, c0:c1] = True
    return arr


def _occluded_fraction(box: BBox, occ_mask: np.ndarray, grid: GridSpec) -> float:
    r0, r1, c0, c1 = box_cells(box, grid)
    n = (r1 - r0) * (c1 - c0)
    if n <= 0:
        return 0.0
    return float(occ_mask[r0:r1, c0:c1].sum()) / n


def count_label(n_riders: int) -> str:
    return COUNT_LABELS[min(n_riders, 3)]


# --- detector noise --------------------------------------------------------------

class _Detector:
    def __init__(self, sc: Scenario, rng, grid: GridSpec):
        self.sc = sc
        self.n = sc.noise
        self.rng = rng
        self.grid = grid
        self.next_det = 0

    def jitter(self, b: BBox) -> BBox:
        s = self.n.box_jitter
        if s == 0:
            return b
        x, y, w, h = b.as_list() + self.rng.normal(0, s, 4)
        return BBox(float(x), float(y), max(float(w), 1.0), max(float(h), 1.0))

    def mask(self, b: BBox) -> BinaryMask:
        k = self.n.mask_jitter_cells
        if k:
            d = int(self.rng.integers(-k, k + 1)) * self.grid.cell_size
            if b.w + 2 * d >= self.grid.cell_size and b.h + 2 * d >= self.grid.cell_size:
                b = BBox(b.x - d, b.y - d, b.w + 2 * d, b.h + 2 * d)
        return rasterize_box(b, self.grid)

    def union_mask(self, boxes) -> BinaryMask:
        arr = np.zeros((self.grid.grid_h, self.grid.grid_w), dtype=bool)
        for b in boxes:
            arr |= self.mask(self.jitter(b)).dense
        return BinaryMask.from_dense(self.grid, arr)

    def emb(self, base: np.ndarray) -> list[float]:
        if self.n.emb_noise == 0:
            v = base
        else:
            v = base + self.rng.normal(0, self.n.emb_noise, base.shape)
            v = v / np.linalg.norm(v)
        return v

    def conf(self) -> float:
        return 1.0 - float(self.rng.uniform(0, self.n.conf_noise)) if self.n.conf_noise else 1.0

    def flip(self, label: str, labels, prob: float) -> str:
        if prob and self.rng.random() < prob:
            others = [v for v in labels if v != label]
            return others[int(self.rng.integers(len(others)))]
        return label

    def plate_read(self, plate: str, moto_h: float) -> dict:
        n = self.n
        if n.plate_hidden_prob and self.rng.random() < n.plate_hidden_prob:
            return {"text": PLATE_HIDDEN, "conf": 0.0}
        p_blur = min(1.0, n.plate_char_prob * n.plate_ref_height / max(moto_h, 1e-6))
        chars = []
        blurred = 0
        for c in plate:
            if p_blur and self.rng.random() < p_blur:
                chars.append(PLATE_BLUR)
                blurred += 1
            elif n.plate_sub_prob and self.rng.random() < n.plate_sub_prob:
                pool = string.digits if c.isdigit() else string.ascii_uppercase
                chars.append(self.flip(c, pool, 1.0))
            else:
                chars.append(c)
        if blurred == len(plate):
            return {"text": PLATE_HIDDEN, "conf": 0.0}
        conf = (1.0 - blurred / len(plate)) * self.conf()
        return {"text": "".join(chars), "conf": conf}

    def make(self, t, cls, box, seg, cross, emb, attrs) -> SacDetection:
        d = SacDetection(t, cls, box, self.conf(), seg, cross, emb, attrs, self.next_det)
        self.next_det += 1
        return d

    def missed(self, occ: float) -> bool:
        p = min(1.0, self.n.miss_prob + self.n.occlusion_miss_mult * occ)
        return p > 0 and self.rng.random() < p

    def false_positives(self, t: int) -> list[SacDetection]:
        n = self.n
        if not n.fp_rate:
            return []
        out = []
        sp = self.sc.spawn
        for _ in range(int(self.rng.poisson(n.fp_rate))):
            cls = RIDER if self.rng.random() < 0.5 else MOTORCYCLE
            w = self.rng.uniform(*sp.width) * (0.4 if cls == RIDER else 1.0)
            h = self.rng.uniform(10.0, 40.0)
            x = self.rng.uniform(0, max(self.sc.image_w - w, 1.0))
            y = self.rng.uniform(0, max(self.sc.image_h - h, 1.0))
            box = BBox(x, y, w, h)
            seg = rasterize_box(box, self.grid)
            cross = BinaryMask.empty(self.grid)
            if self.rng.random() < 0.5:
                cross = rasterize_box(BBox(x, y + (h if cls == RIDER else -h), w, h), self.grid)
            if cls == RIDER:
                attrs = {"helmet": "helmet" if self.rng.random() < 0.5 else "no_helmet"}
            else:
                tpl = sp.plate_templates[int(self.rng.integers(len(sp.plate_templates)))]
                attrs = {"count": COUNT_LABELS[int(self.rng.integers(4))],
                         "plate": self.plate_read(_plate(self.rng, tpl), h)}
            out.append(self.make(t, cls, box, seg, cross, _unit(self.rng), attrs))
        return out


def generate(sc: Scenario) -> tuple[GroundTruthLog, list[SacDetection]]:
    world_seq, occ_seq, noise_seq = np.random.SeedSequence(sc.seed).spawn(3)
    world_rng = np.random.Generator(np.random.Philox(world_seq))
    occ_rng = np.random.Generator(np.random.Philox(occ_seq))
    noise_rng = np.random.Generator(np.random.Philox(noise_seq))

    grid = sc.grid
    world = _World(sc, world_rng)
    occluders = _occluder_boxes(sc, occ_rng)
    det = _Detector(sc, noise_rng, grid)
    log = GroundTruthLog(sc.name, sc.n_frames, sc.image_w, sc.image_h, grid)
    dets: list[SacDetection] = []

    for t in range(sc.n_frames):
        world.spawn_step(t)
        covered = (_occluder_mask(sc, occluders, t, grid) if occluders
                   else np.zeros((grid.grid_h, grid.grid_w), dtype=bool))
        # image bottom is nearest to the camera: visit near to far so each
        # instance can be hidden by the ones in front of it
        objs: list[GTObject] = []
        frame_dets: list[SacDetection] = []
        active = sorted(world.active(t), key=lambda e: (-(e.boxes(t)[2].y2), e.assoc_gt_id))
        for e in active:
            moto_box, rider_boxes, inst_box = e.boxes(t)
            occ = {}
            for gid, b in zip([e.moto_gt_id] + e.rider_gt_ids, [moto_box] + rider_boxes):
                occ[gid] = _occluded_fraction(b, covered, grid)
            if sc.occluders.mutual:
                r0, r1, c0, c1 = box_cells(inst_box, grid)
                covered[r0:r1, c0:c1] = True
            n_r = len(rider_boxes)
            objs.append(GTObject(e.moto_gt_id, MOTORCYCLE, moto_box, e.assoc_gt_id,
                                 count_label=count_label(n_r), plate=e.plate,
                                 occluded_fraction=occ[e.moto_gt_id]))
            for gid, b, hl in zip(e.rider_gt_ids, rider_boxes, e.helmet):
                objs.append(GTObject(gid, RIDER, b, e.assoc_gt_id, helmet_label=hl,
                                     occluded_fraction=occ[gid]))

            # detections: seg from the (jittered) own box, cross from partner boxes
            if not det.missed(occ[e.moto_gt_id]):
                box = det.jitter(moto_box)
                attrs = {"count": det.flip(count_label(n_r), COUNT_LABELS, sc.noise.count_flip),
                         "plate": det.plate_read(e.plate, moto_box.h)}
                frame_dets.append(det.make(t, MOTORCYCLE, box, det.mask(box), det.union_mask(rider_boxes),
                                           det.emb(e.embs[e.moto_gt_id]), attrs))
            for gid, b, hl in zip(e.rider_gt_ids, rider_boxes, e.helmet):
                if det.missed(occ[gid]):
                    continue
                box = det.jitter(b)
                attrs = {"helmet": det.flip(hl, ("helmet", "no_helmet"), sc.noise.helmet_flip)}
                frame_dets.append(det.make(t, RIDER, box, det.mask(box), det.mask(det.jitter(moto_box)),
                                           det.emb(e.embs[gid]), attrs))
        frame_dets.extend(det.false_positives(t))
        log.frames.append(sorted(objs, key=lambda o: o.gt_id))
        dets.extend(frame_dets)

    for e in world.entities:
        log.instances.append(GTInstance(e.assoc_gt_id, e.moto_gt_id, tuple(e.rider_gt_ids),
                                        dict(zip(e.rider_gt_ids, e.helmet)), e.plate,
                                        e.first_frame, e.last_frame))
    return log, dets
