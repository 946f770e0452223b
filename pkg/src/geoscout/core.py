"""Shared geometric vocabulary: boxes, grids, permutations, seeds.

Everything here is an immutable value with pure operations, safe to share
across threads.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np


class Modality(str, Enum):
    CT = "ct"
    MRI = "mri"
    XRAY = "xray"

    @property
    def volumetric(self) -> bool:
        return self in (Modality.CT, Modality.MRI)


class Difficulty(str, Enum):
    """Per-task geometry presets.

    hard:   3 crops, 2x2 jigsaw, 4x4 anomaly restricted to the central block
    medium: 2 crops, 1x4 strip jigsaw, 4x2 anomaly over the middle rows
    easy:   1 crop, 1x2 jigsaw, 2x2 anomaly over all four patches
    """

    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    @property
    def num_patches(self) -> int:
        return {"easy": 1, "medium": 2, "hard": 3}[self.value]

    @property
    def jigsaw_grid(self) -> "GridSpec":
        return {
            "easy": GridSpec(1, 2),
            "medium": GridSpec(1, 4),
            "hard": GridSpec(2, 2),
        }[self.value]

    @property
    def anomaly_grid(self) -> "GridSpec":
        return {
            "easy": GridSpec(2, 2),
            "medium": GridSpec(4, 2),
            "hard": GridSpec(4, 4),
        }[self.value]

    @property
    def anomaly_centers(self) -> tuple[int, ...]:
        return {
            "easy": (0, 1, 2, 3),
            "medium": (2, 3, 4, 5),
            "hard": (5, 6, 9, 10),
        }[self.value]


@dataclass(frozen=True, order=True)
class GridSpec:
    """Rectangular patch grid, rows x cols, at least two cells."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1 or self.rows * self.cols < 2:
            raise ValueError(f"invalid grid {self.rows}x{self.cols}")

    @property
    def size(self) -> int:
        return self.rows * self.cols


@dataclass(frozen=True, order=True)
class GridCoord:
    u: int  # row
    v: int  # column


@dataclass(frozen=True)
class BBox:
    """Normalized corner box; strictly positive area inside the unit square."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        if not (0.0 <= self.x1 < self.x2 <= 1.0 and 0.0 <= self.y1 < self.y2 <= 1.0):
            raise ValueError(f"invalid bbox {(self.x1, self.y1, self.x2, self.y2)}")

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Permutation:
    """Bijection on {0..n-1}; mapping[i] is the image of position i."""

    mapping: tuple[int, ...]

    def __post_init__(self):
        if sorted(self.mapping) != list(range(len(self.mapping))):
            raise ValueError(f"not a permutation: {self.mapping}")

    def __len__(self) -> int:
        return len(self.mapping)

    def __getitem__(self, i: int) -> int:
        return self.mapping[i]

    def __iter__(self):
        return iter(self.mapping)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    @property
    def is_identity(self) -> bool:
        return all(i == v for i, v in enumerate(self.mapping))

    def compose(self, other: "Permutation") -> "Permutation":
        """Apply `other` first, then self: (self.compose(other))[i] = self[other[i]]."""
        return Permutation(tuple(self.mapping[j] for j in other.mapping))


def permutation_inverse(p: Permutation) -> Permutation:
    inv = [0] * len(p)
    for i, v in enumerate(p.mapping):
        inv[v] = i
    return Permutation(tuple(inv))


def flat_to_grid(k: int, grid: GridSpec) -> GridCoord:
    """Flattened reading-order index -> (row, col)."""
    if not 0 <= k < grid.size:
        raise IndexError(f"flat index {k} out of range for {grid.rows}x{grid.cols}")
    return GridCoord(k // grid.cols, k % grid.cols)


def grid_to_flat(c: GridCoord, grid: GridSpec) -> int:
    if not (0 <= c.u < grid.rows and 0 <= c.v < grid.cols):
        raise IndexError(f"coordinate {(c.u, c.v)} out of range for {grid.rows}x{grid.cols}")
    return c.u * grid.cols + c.v


def iou_xyxy(a: Sequence[float], b: Sequence[float]) -> float:
    """IoU of raw corner tuples.

    Degenerate or inverted boxes (x1 >= x2 or y1 >= y2), which can only come
    from parsed model output, score 0 by definition.
    """
    ax1, ay1, ax2, ay2 = a
    bx1, by1, bx2, by2 = b
    if ax1 >= ax2 or ay1 >= ay2 or bx1 >= bx2 or by1 >= by2:
        return 0.0
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter
    return inter / union


def bbox_iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two valid boxes; symmetric, in [0, 1]."""
    return iou_xyxy(a.as_tuple(), b.as_tuple())


# --- reward breakdown --------------------------------------------------------

@dataclass(frozen=True)
class RewardBreakdown:
    """Per-response reward components.

    r_total = r_acc + r_fmt + r_reason, where r_reason is only nonzero in
    reasoning mode. parse_ok means every required answer item matched the
    grammar.
    """

    r_acc: float
    r_fmt: float
    r_reason: float
    r_total: float
    parse_ok: bool
    sub_components: dict[str, float] = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "r_acc": self.r_acc,
            "r_fmt": self.r_fmt,
            "r_reason": self.r_reason,
            "r_total": self.r_total,
            "parse_ok": self.parse_ok,
            "sub": dict(self.sub_components),
        }


# --- seeding -----------------------------------------------------------------

U64 = 2**64


def derive_seed(dataset_seed: int, source_id: str, task_kind: str, case_index: int) -> int:
    """Stable per-case 64-bit seed.

    blake2b over a canonical text encoding, so the same tuple yields the same
    seed on every platform and in every process.
    """
    payload = f"{dataset_seed}|{source_id}|{task_kind}|{case_index}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "big")


def make_rng(seed: int) -> np.random.Generator:
    """Philox counter-based generator: bit-reproducible for a given seed."""
    return np.random.Generator(np.random.Philox(key=seed % U64))


def all_permutations(n: int) -> list[Permutation]:
    """All permutations of length n in lexicographic order."""
    return [Permutation(p) for p in itertools.permutations(range(n))]
