"""Run configuration: one flat, validated set of knobs shared by every command."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

from .motion import MotionConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # joint assignment objective weights
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    # buffered association score
    theta: float = 0.5
    buffer_k: int = 3
    # hypothesis score and gating
    gate_iou: float = 0.1
    w_iou: float = 1.0
    w_app: float = 0.5
    emb_momentum: float = 0.9
    # track lifecycle
    max_age: int = 30
    min_hits: int = 3
    solver_cap: int = 64
    # Kalman noise
    pos_sigma: float = 1.0
    vel_sigma: float = 0.5
    meas_sigma: float = 1.0
    # per-frame instance formation and consolidation
    tau_assoc: float = 0.5
    max_riders: int = 4
    triple_min_count: int = 1
    # evaluation
    iou_thresh: float = 0.5
    hota_alpha_step: float = 0.05

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.type == "int":
                if isinstance(v, bool) or not isinstance(v, int):
                    raise ConfigError(f"{f.name} must be an integer, got {v!r}")
            elif isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{f.name} must be a number, got {v!r}")
            lo, hi = RANGES[f.name]
            if not lo <= v <= hi:
                raise ConfigError(f"{f.name}={v} outside [{lo}, {hi}]")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise ConfigError("lambda1 and lambda2 cannot both be zero")

    @property
    def motion(self) -> MotionConfig:
        return MotionConfig(self.pos_sigma, self.vel_sigma, self.meas_sigma)

    @property
    def lam(self) -> tuple[float, float, float]:
        return self.lambda1, self.lambda2, self.lambda3

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kinds = {f.name: f.type for f in fields(cls)}
        clean = {}
        for k, v in d.items():
            if kinds[k] == "float" and isinstance(v, int) and not isinstance(v, bool):
                v = float(v)
            clean[k] = v
        return cls(**clean)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            try:
                data = json.load(f)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: expected a JSON object")
        return cls.from_dict(data)

    def override(self, **kw) -> "RunConfig":
        d = self.to_dict()
        d.update({k: v for k, v in kw.items() if v is not None})
        return RunConfig.from_dict(d)


RANGES = {
    "lambda1": (0.0, 100.0), "lambda2": (0.0, 100.0), "lambda3": (0.0, 100.0),
    "theta": (0.0, 10.0), "buffer_k": (0, 100),
    "gate_iou": (0.0, 1.0), "w_iou": (0.0, 100.0), "w_app": (0.0, 100.0),
    "emb_momentum": (0.0, 1.0),
    "max_age": (0, 10_000), "min_hits": (1, 1000), "solver_cap": (1, 4096),
    "pos_sigma": (0.0, 1e4), "vel_sigma": (0.0, 1e4), "meas_sigma": (1e-6, 1e4),
    "tau_assoc": (0.0, 1.0), "max_riders": (1, 16), "triple_min_count": (1, 100_000),
    "iou_thresh": (0.0, 1.0), "hota_alpha_step": (0.01, 0.5),
}

HELP = {
    "lambda1": "weight of rider hypothesis scores",
    "lambda2": "weight of motorcycle hypothesis scores",
    "lambda3": "weight of rider-motorcycle link scores (0 disables joint linking)",
    "theta": "offset subtracted from the buffered association sum",
    "buffer_k": "past frames of masks kept per track for link scoring",
    "gate_iou": "minimum predicted-box IoU for a track/detection hypothesis",
    "w_iou": "weight of motion IoU in hypothesis scores",
    "w_app": "weight of appearance cosine in hypothesis scores",
    "emb_momentum": "moving-average momentum of track appearance",
    "max_age": "frames a confirmed track may go unmatched before it dies",
    "min_hits": "matches needed to confirm a track",
    "solver_cap": "maximum hypotheses per class in one frame",
    "pos_sigma": "Kalman process noise on position/size (px)",
    "vel_sigma": "Kalman process noise on velocity (px/frame)",
    "meas_sigma": "Kalman measurement noise (px)",
    "tau_assoc": "minimum association score to attach a rider in one frame",
    "max_riders": "maximum riders attached to one motorcycle per frame",
    "triple_min_count": "triple-riding frames needed to flag a track",
    "iou_thresh": "IoU threshold for CLEAR/identity/association matching",
    "hota_alpha_step": "step of the HOTA localization threshold sweep",
}
