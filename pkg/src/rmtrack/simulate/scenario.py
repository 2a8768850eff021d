"""Declarative scenario description, its JSON schema and the shipped presets."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace

import jsonschema

from ..geom import GridSpec


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class SpawnSpec:
    initial: int = 4
    rate: float = 0.05                 # expected new instances per frame
    max_active: int = 8
    rider_count_probs: tuple[float, float, float] = (0.5, 0.35, 0.15)
    helmet_prob: float = 0.7
    plate_templates: tuple[str, ...] = ("LLDDLLDDDD", "LLDDLDDDD", "LLDDDDDD")
    width: tuple[float, float] = (44.0, 64.0)
    height_ratio: tuple[float, float] = (1.3, 1.7)
    min_lifetime: int = 12


@dataclass(frozen=True)
class MotionSpec:
    speed: tuple[float, float] = (0.5, 2.5)
    curvature: float = 0.0             # max |heading change| per frame, rad
    ego_drift: tuple[float, float] = (0.0, 0.0)
    opposite_frac: float = 0.0
    opposite_speed_mult: float = 3.0
    vertical_frac: float = 0.3         # max |vy / speed| at spawn


@dataclass(frozen=True)
class OccluderSpec:
    count: int = 0
    size: tuple[float, float] = (60.0, 120.0)
    speed: float = 2.0
    mutual: bool = True                # nearer instances hide farther ones


@dataclass(frozen=True)
class NoiseSpec:
    miss_prob: float = 0.0
    occlusion_miss_mult: float = 0.0
    box_jitter: float = 0.0            # px, Gaussian sigma
    fp_rate: float = 0.0               # expected false positives per frame
    mask_jitter_cells: int = 0         # max erosion/dilation, cells
    helmet_flip: float = 0.0
    count_flip: float = 0.0
    plate_char_prob: float = 0.0       # per-character blur at the reference height
    plate_ref_height: float = 40.0     # px of motorcycle box height
    plate_sub_prob: float = 0.0        # per-character misread
    plate_hidden_prob: float = 0.0
    emb_noise: float = 0.0
    conf_noise: float = 0.0


@dataclass(frozen=True)
class Scenario:
    name: str = "custom"
    seed: int = 0
    n_frames: int = 200
    image_w: int = 640
    image_h: int = 360
    cell_size: float = 4.0
    spawn: SpawnSpec = field(default_factory=SpawnSpec)
    motion: MotionSpec = field(default_factory=MotionSpec)
    occluders: OccluderSpec = field(default_factory=OccluderSpec)
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def __post_init__(self):
        try:
            jsonschema.validate(self.to_dict(), SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ScenarioError(_describe(exc)) from exc
        if abs(sum(self.spawn.rider_count_probs) - 1.0) > 1e-9:
            raise ScenarioError("spawn.rider_count_probs must sum to 1")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(math.ceil(self.image_w / self.cell_size),
                        math.ceil(self.image_h / self.cell_size), self.cell_size)

    def to_dict(self) -> dict:
        d = asdict(self)
        return json.loads(json.dumps(d))  # tuples -> lists

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            jsonschema.validate(d, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ScenarioError(_describe(exc)) from exc

        def sub(kind, key):
            raw = dict(d.get(key, {}))
            for k, v in raw.items():
                if isinstance(v, list):
                    raw[k] = tuple(v)
            return kind(**raw)

        top = {k: v for k, v in d.items() if k not in ("spawn", "motion", "occluders", "noise")}
        return cls(**top, spawn=sub(SpawnSpec, "spawn"), motion=sub(MotionSpec, "motion"),
                   occluders=sub(OccluderSpec, "occluders"), noise=sub(NoiseSpec, "noise"))

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ScenarioError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
        return cls.from_dict(data)

    def dump(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def _describe(exc: jsonschema.ValidationError) -> str:
    where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
    return f"field {where}: {exc.message}"


_prob = {"type": "number", "minimum": 0, "maximum": 1}
_nonneg = {"type": "number", "minimum": 0}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 0}
_range = {"type": "array", "items": _nonneg, "minItems": 2, "maxItems": 2}


def _obj(props: dict, required=()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "name": {"type": "string", "minLength": 1},
    "seed": {"type": "integer", "minimum": 0, "maximum": 2 ** 64 - 1},
    "n_frames": {"type": "integer", "minimum": 1},
    "image_w": {"type": "integer", "minimum": 16},
    "image_h": {"type": "integer", "minimum": 16},
    "cell_size": _pos,
    "spawn": _obj({
        "initial": _count, "rate": _nonneg, "max_active": _count,
        "rider_count_probs": {"type": "array", "items": _prob, "minItems": 3, "maxItems": 3},
        "helmet_prob": _prob,
        "plate_templates": {"type": "array", "minItems": 1,
                            "items": {"type": "string", "pattern": "^[LD]+$"}},
        "width": _range, "height_ratio": _range,
        "min_lifetime": {"type": "integer", "minimum": 1},
    }),
    "motion": _obj({
        "speed": _range, "curvature": _nonneg,
        "ego_drift": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "opposite_frac": _prob, "opposite_speed_mult": _pos, "vertical_frac": _prob,
    }),
    "occluders": _obj({
        "count": _count,
        "size": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
        "speed": _nonneg, "mutual": {"type": "boolean"},
    }),
    "noise": _obj({
        "miss_prob": _prob, "occlusion_miss_mult": _nonneg, "box_jitter": _nonneg,
        "fp_rate": _nonneg, "mask_jitter_cells": _count, "helmet_flip": _prob,
        "count_flip": _prob, "plate_char_prob": _prob, "plate_ref_height": _pos,
        "plate_sub_prob": _prob, "plate_hidden_prob": _prob, "emb_noise": _nonneg,
        "conf_noise": _prob,
    }),
}, required=("name", "seed", "n_frames"))


# --- presets -------------------------------------------------------------------

_BASE = Scenario(name="base", seed=1, n_frames=200)

NOISELESS = replace(_BASE, name="noiseless", seed=101, n_frames=150,
                    spawn=replace(_BASE.spawn, initial=4, rate=0.03, max_active=6,
                                  rider_count_probs=(0.4, 0.35, 0.25), helmet_prob=0.6),
                    motion=replace(_BASE.motion, ego_drift=(0.2, 0.0)))

_NOISY = NoiseSpec(miss_prob=0.05, box_jitter=1.0, fp_rate=0.3, mask_jitter_cells=1,
                   helmet_flip=0.1, count_flip=0.1, plate_char_prob=0.15,
                   plate_sub_prob=0.03, plate_hidden_prob=0.05, emb_noise=0.2, conf_noise=0.3)


def occlusion_heavy(seed: int = 301, name: str = "occlusion-heavy") -> Scenario:
    return replace(_BASE, name=name, seed=seed, n_frames=250,
                   spawn=replace(_BASE.spawn, initial=6, rate=0.06, max_active=9,
                                 rider_count_probs=(0.3, 0.4, 0.3)),
                   motion=replace(_BASE.motion, speed=(0.8, 3.0), curvature=0.004),
                   occluders=OccluderSpec(count=3, size=(50.0, 140.0), speed=2.5),
                   noise=replace(_NOISY, miss_prob=0.05, occlusion_miss_mult=1.5,
                                 box_jitter=2.0, fp_rate=0.5, mask_jitter_cells=1))


def preset_suite() -> list[Scenario]:
    return [
        NOISELESS,
        replace(_BASE, name="nominal", seed=201, noise=_NOISY),
        replace(_BASE, name="dense", seed=211,
                spawn=replace(_BASE.spawn, initial=10, rate=0.15, max_active=14),
                noise=_NOISY),
        occlusion_heavy(),
        replace(_BASE, name="low-visibility", seed=401,
                noise=replace(_NOISY, miss_prob=0.2, box_jitter=3.0, fp_rate=1.0,
                              mask_jitter_cells=2, helmet_flip=0.2, count_flip=0.2,
                              plate_char_prob=0.4, plate_sub_prob=0.08,
                              plate_hidden_prob=0.2, emb_noise=0.5)),
        replace(_BASE, name="opposite-lane", seed=501,
                motion=replace(_BASE.motion, opposite_frac=0.5, opposite_speed_mult=3.0,
                               ego_drift=(-0.5, 0.0)),
                noise=_NOISY),
    ]


def occlusion_suite(n_seeds: int = 5) -> list[Scenario]:
    return [occlusion_heavy(seed=3001 + k, name=f"occlusion-heavy-{k + 1}") for k in range(n_seeds)]


def long_occlusion(n_frames: int = 1000) -> Scenario:
    """One long occlusion-heavy sequence, used for timing (at most 30 objects a frame)."""
    return replace(occlusion_heavy(seed=901, name="occlusion-long"), n_frames=n_frames)


def full_suite() -> list[Scenario]:
    return preset_suite() + occlusion_suite() + [long_occlusion()]


def get_preset(name: str) -> Scenario:
    for sc in full_suite():
        if sc.name == name:
            return sc
    raise KeyError(name)
