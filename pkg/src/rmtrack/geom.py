"""Boxes, cell-lattice binary masks and their overlap primitives.

Masks live on a coarse lattice (``GridSpec``) and are stored run-length
encoded, row-major, starting with a background run. A dense boolean view is
decoded lazily and cached on the instance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class BBox:
    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w < 0 or self.h < 0:
            raise ValueError(f"negative box extent {vals}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2.0, self.y + self.h / 2.0

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    @classmethod
    def from_list(cls, v) -> "BBox":
        x, y, w, h = (float(c) for c in v)
        return cls(x, y, w, h)


def union_box(boxes) -> BBox:
    boxes = list(boxes)
    if not boxes:
        raise ValueError("union of no boxes")
    x1 = min(b.x for b in boxes)
    y1 = min(b.y for b in boxes)
    x2 = max(b.x2 for b in boxes)
    y2 = max(b.y2 for b in boxes)
    return BBox(x1, y1, x2 - x1, y2 - y1)


def iou_box(a: BBox, b: BBox) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def iou_matrix(a: list[BBox], b: list[BBox]) -> np.ndarray:
    """Pairwise box IoU, shape ``(len(a), len(b))``."""
    if not a or not b:
        return np.zeros((len(a), len(b)))
    A = np.array([[p.x, p.y, p.x2, p.y2] for p in a])
    B = np.array([[p.x, p.y, p.x2, p.y2] for p in b])
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


@dataclass(frozen=True)
class GridSpec:
    grid_w: int
    grid_h: int
    cell_size: float

    def __post_init__(self):
        if self.grid_w <= 0 or self.grid_h <= 0 or not self.cell_size > 0:
            raise ValueError(f"invalid grid {self}")

    @property
    def n_cells(self) -> int:
        return self.grid_w * self.grid_h


class MaskError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class BinaryMask:
    grid: GridSpec
    runs: tuple[int, ...]

    def __post_init__(self):
        if any(r < 0 for r in self.runs):
            raise MaskError("negative run length")
        if sum(self.runs) != self.grid.n_cells:
            raise MaskError(
                f"runs sum to {sum(self.runs)}, grid has {self.grid.n_cells} cells")

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.grid == other.grid and self.runs == other.runs

    def __hash__(self):
        return hash((self.grid, self.runs))

    @cached_property
    def dense(self) -> np.ndarray:
        """Read-only boolean array of shape ``(grid_h, grid_w)``."""
        arr = rle_decode(self.runs, self.grid.n_cells).reshape(self.grid.grid_h, self.grid.grid_w)
        arr.flags.writeable = False
        return arr

    @cached_property
    def count(self) -> int:
        return int(sum(self.runs[1::2]))

    @cached_property
    def window(self) -> tuple[int, int, int, int] | None:
        """Foreground bounding window ``(r0, r1, c0, c1)``, half-open; None if empty."""
        if self.count == 0:
            return None
        rows = np.flatnonzero(self.dense.any(axis=1))
        cols = np.flatnonzero(self.dense.any(axis=0))
        return int(rows[0]), int(rows[-1]) + 1, int(cols[0]), int(cols[-1]) + 1

    @classmethod
    def from_dense(cls, grid: GridSpec, arr) -> "BinaryMask":
        arr = np.asarray(arr, dtype=bool)
        if arr.shape != (grid.grid_h, grid.grid_w):
            raise MaskError(f"array shape {arr.shape} does not match grid")
        return cls(grid, rle_encode(arr))

    @classmethod
    def empty(cls, grid: GridSpec) -> "BinaryMask":
        return cls(grid, (grid.n_cells,))

    def to_json(self) -> dict:
        return {"w": self.grid.grid_w, "h": self.grid.grid_h,
                "cell": self.grid.cell_size, "runs": list(self.runs)}

    @classmethod
    def from_json(cls, d: dict, grid: GridSpec | None = None) -> "BinaryMask":
        g = GridSpec(int(d["w"]), int(d["h"]), float(d["cell"]))
        if grid is not None and g == grid:
            g = grid
        return cls(g, tuple(int(r) for r in d["runs"]))


def rle_encode(arr) -> tuple[int, ...]:
    """Canonical runs of a boolean array (flattened row-major)."""
    flat = np.asarray(arr, dtype=bool).ravel()
    if flat.size == 0:
        return (0,)
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return tuple(runs)


def rle_decode(runs, n_cells: int) -> np.ndarray:
    runs = np.asarray(runs, dtype=np.int64)
    if runs.size == 0 or (runs < 0).any() or int(runs.sum()) != n_cells:
        raise MaskError("malformed run list")
    values = np.zeros(runs.size, dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs)


def _cell_span(lo: float, hi: float, cell: float, n: int) -> tuple[int, int]:
    # cells whose centre (i + 0.5) * cell satisfies lo <= c < hi
    i0 = math.ceil(lo / cell - 0.5)
    i1 = math.ceil(hi / cell - 0.5)
    return max(i0, 0), min(max(i1, 0), n)


def box_cells(b: BBox, g: GridSpec) -> tuple[int, int, int, int]:
    """Half-open ``(r0, r1, c0, c1)`` range of cells whose centre lies in ``b``."""
    c0, c1 = _cell_span(b.x, b.x2, g.cell_size, g.grid_w)
    r0, r1 = _cell_span(b.y, b.y2, g.cell_size, g.grid_h)
    return r0, max(r1, r0), c0, max(c1, c0)


def rasterize_box(b: BBox, g: GridSpec) -> BinaryMask:
    r0, r1, c0, c1 = box_cells(b, g)
    arr = np.zeros((g.grid_h, g.grid_w), dtype=bool)
    arr[r0:r1, c0:c1] = True
    return BinaryMask.from_dense(g, arr)


def _check_grid(a: BinaryMask, b: BinaryMask):
    if a.grid != b.grid:
        raise MaskError(f"grid mismatch: {a.grid} vs {b.grid}")


def _windows_meet(wa, wb) -> bool:
    return wa[0] < wb[1] and wb[0] < wa[1] and wa[2] < wb[3] and wb[2] < wa[3]


def mask_iou(a: BinaryMask, b: BinaryMask) -> float:
    _check_grid(a, b)
    na, nb = a.count, b.count
    if na == 0 and nb == 0:
        return 0.0
    if na == 0 or nb == 0 or not _windows_meet(a.window, b.window):
        return 0.0
    wa, wb = a.window, b.window
    r0, r1 = max(wa[0], wb[0]), min(wa[1], wb[1])
    c0, c1 = max(wa[2], wb[2]), min(wa[3], wb[3])
    inter = int(np.count_nonzero(a.dense[r0:r1, c0:c1] & b.dense[r0:r1, c0:c1]))
    return inter / (na + nb - inter)


def mask_restrict(m: BinaryMask, b: BBox) -> BinaryMask:
    r0, r1, c0, c1 = box_cells(b, m.grid)
    out = np.zeros_like(m.dense)
    if r1 > r0 and c1 > c0:
        out[r0:r1, c0:c1] = m.dense[r0:r1, c0:c1]
    return BinaryMask.from_dense(m.grid, out)


def mask_union(masks, grid: GridSpec) -> BinaryMask:
    out = np.zeros((grid.grid_h, grid.grid_w), dtype=bool)
    for m in masks:
        if m.grid != grid:
            raise MaskError(f"grid mismatch: {m.grid} vs {grid}")
        out |= m.dense
    return BinaryMask.from_dense(grid, out)
