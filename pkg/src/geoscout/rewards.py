"""Answer grammar, parsing, and the dense geometric reward.

Scoring is total: any text gets a reward, parse failures are encoded as
invalid items and never raise. All functions are pure, so scoring can fan
out across threads without coordination.

Canonical answer grammar (one fixed shape per task so format compliance is
well defined):

    scale   patch 1: level=2 box=[0.250,0.250,0.500,0.500]   (one line per patch)
    topo    order=[2,0,3,1]
    anom    index=5

Reasoning mode wraps the answer in exactly one <think>...</think> block
followed by exactly one <answer>...</answer> block.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Literal, Sequence

from .core import BBox, GridSpec, Permutation, RewardBreakdown, flat_to_grid, iou_xyxy
from .errors import UnknownTaskKind

TaskKind = Literal["scale", "topo", "anom"]
Mode = Literal["direct", "reasoning"]

TASK_KINDS: tuple[TaskKind, ...] = ("scale", "topo", "anom")
MODES: tuple[Mode, ...] = ("direct", "reasoning")


@dataclass(frozen=True)
class RewardConfig:
    """Reward caps and shaping constants.

    tau is the temperature of the distance-decayed anomaly reward;
    scale_mix weighs level classification against box IoU for Task A.
    """

    tau: float = 0.1
    fmt_cap: float = 0.5
    reason_cap: float = 0.5
    acc_cap: float = 1.0
    scale_mix: float = 0.5

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if min(self.fmt_cap, self.reason_cap, self.acc_cap) <= 0:
            raise ValueError("caps must be positive")
        if not 0.0 <= self.scale_mix <= 1.0:
            raise ValueError("scale_mix must lie in [0, 1]")


DEFAULT_CONFIG = RewardConfig()


# --- ground truth containers ---------------------------------------------------

@dataclass(frozen=True)
class ScaleGT:
    levels: tuple[int, ...]
    boxes: tuple[BBox, ...]

    def __post_init__(self):
        if len(self.levels) != len(self.boxes) or not self.levels:
            raise ValueError("levels and boxes must be non-empty and same length")


@dataclass(frozen=True)
class TopoGT:
    order: tuple[int, ...]

    def __post_init__(self):
        Permutation(self.order)  # must be a bijection


@dataclass(frozen=True)
class AnomGT:
    index: int
    grid: GridSpec

    def __post_init__(self):
        if not 0 <= self.index < self.grid.size:
            raise ValueError(f"index {self.index} outside {self.grid.rows}x{self.grid.cols}")


TaskGT = ScaleGT | TopoGT | AnomGT


def gt_kind(gt: TaskGT) -> TaskKind:
    if isinstance(gt, ScaleGT):
        return "scale"
    if isinstance(gt, TopoGT):
        return "topo"
    if isinstance(gt, AnomGT):
        return "anom"
    raise UnknownTaskKind(f"unsupported ground truth {type(gt).__name__}")


def gt_item_count(gt: TaskGT) -> int:
    if isinstance(gt, ScaleGT):
        return len(gt.levels)
    if isinstance(gt, TopoGT):
        return len(gt.order)
    return 1


# --- canonical serialization ----------------------------------------------------

def quantize3(x: float) -> float:
    """Snap to the 3-decimal serialization grid (the grammar's precision)."""
    return float(f"{x:.3f}")


def format_scale_answer(levels: Sequence[int], boxes: Sequence[BBox]) -> str:
    lines = [
        f"patch {i + 1}: level={lvl} box=[{b.x1:.3f},{b.y1:.3f},{b.x2:.3f},{b.y2:.3f}]"
        for i, (lvl, b) in enumerate(zip(levels, boxes))
    ]
    return "\n".join(lines)


def format_topo_answer(order: Sequence[int]) -> str:
    return "order=[" + ",".join(str(v) for v in order) + "]"


def format_anom_answer(index: int) -> str:
    return f"index={index}"


def format_gt_answer(gt: TaskGT) -> str:
    if isinstance(gt, ScaleGT):
        return format_scale_answer(gt.levels, gt.boxes)
    if isinstance(gt, TopoGT):
        return format_topo_answer(gt.order)
    if isinstance(gt, AnomGT):
        return format_anom_answer(gt.index)
    raise UnknownTaskKind(f"unsupported ground truth {type(gt).__name__}")


# --- parsing ---------------------------------------------------------------------

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_INT = r"[-+]?\d+"

_COT_RE = re.compile(r"\A\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*\Z", re.DOTALL)
_PATCH_ANCHOR_RE = re.compile(r"patch\s*(\d+)\s*:", re.IGNORECASE)
_LEVEL_RE = re.compile(rf"level\s*=\s*({_INT})", re.IGNORECASE)
_BOX_RE = re.compile(
    rf"box\s*=\s*\[?\s*({_FLOAT})\s*,\s*({_FLOAT})\s*,\s*({_FLOAT})\s*,\s*({_FLOAT})\s*\]?",
    re.IGNORECASE,
)
_ORDER_RE = re.compile(r"order\s*=\s*\[?([^\[\]\n]*)\]?", re.IGNORECASE)
_INDEX_RE = re.compile(rf"index\s*=\s*({_INT})", re.IGNORECASE)
_INT_TOKEN_RE = re.compile(rf"\A{_INT}\Z")


@dataclass(frozen=True)
class ParsedAnswer:
    """Typed view of whatever the grammar could extract from raw text.

    Slots that failed their pattern hold None and are marked invalid; the
    reward functions turn those into zero contributions.
    """

    kind: TaskKind
    mode: Mode
    item_validity: tuple[bool, ...]
    cot_structure_ok: bool = False
    levels: tuple[int | None, ...] = ()
    boxes: tuple[tuple[float, float, float, float] | None, ...] = ()
    order: tuple[int | None, ...] = ()
    index: int | None = None


def _match_cot(text: str) -> tuple[str, bool]:
    """Return (answer body, envelope ok). Exactly one think block then one
    answer block; on failure the full text is the body."""
    if (
        text.count("<think>") == 1
        and text.count("</think>") == 1
        and text.count("<answer>") == 1
        and text.count("</answer>") == 1
    ):
        m = _COT_RE.match(text)
        if m:
            return m.group(2), True
    return text, False


def _parse_scale_body(body: str, n_items: int) -> dict:
    levels: list[int | None] = [None] * n_items
    boxes: list[tuple[float, float, float, float] | None] = [None] * n_items
    valid = [False] * n_items
    seen: set[int] = set()
    anchors = list(_PATCH_ANCHOR_RE.finditer(body))
    for pos, anchor in enumerate(anchors):
        idx = int(anchor.group(1)) - 1  # grammar is 1-based; first occurrence wins
        if not 0 <= idx < n_items or idx in seen:
            continue
        seen.add(idx)
        seg_end = anchors[pos + 1].start() if pos + 1 < len(anchors) else len(body)
        segment = body[anchor.end() : seg_end]
        lvl_m = _LEVEL_RE.search(segment)
        box_m = _BOX_RE.search(segment)
        if lvl_m:
            levels[idx] = int(lvl_m.group(1))
        if box_m:
            boxes[idx] = tuple(float(g) for g in box_m.groups())  # type: ignore[assignment]
        valid[idx] = lvl_m is not None and box_m is not None
    return {"levels": tuple(levels), "boxes": tuple(boxes), "item_validity": tuple(valid)}


def _parse_topo_body(body: str, n_items: int) -> dict:
    order: list[int | None] = [None] * n_items
    valid = [False] * n_items
    m = _ORDER_RE.search(body)
    if m:
        tokens = [t.strip() for t in m.group(1).split(",")]
        for i in range(min(n_items, len(tokens))):
            if _INT_TOKEN_RE.match(tokens[i]):
                order[i] = int(tokens[i])
                valid[i] = True
    return {"order": tuple(order), "item_validity": tuple(valid)}


def _parse_anom_body(body: str) -> dict:
    m = _INDEX_RE.search(body)
    index = int(m.group(1)) if m else None
    return {"index": index, "item_validity": (m is not None,)}


def parse_answer(text: str, kind: TaskKind, n_items: int, mode: Mode) -> ParsedAnswer:
    """Total parser: any input yields a ParsedAnswer, never an exception."""
    text = text if isinstance(text, str) else ""
    if mode == "reasoning":
        body, cot_ok = _match_cot(text)
    else:
        body, cot_ok = text, False
    if kind == "scale":
        fields = _parse_scale_body(body, n_items)
    elif kind == "topo":
        fields = _parse_topo_body(body, n_items)
    elif kind == "anom":
        fields = _parse_anom_body(body)
    else:
        raise UnknownTaskKind(f"unsupported task kind {kind!r}")
    return ParsedAnswer(kind=kind, mode=mode, cot_structure_ok=cot_ok, **fields)


# --- reward components ------------------------------------------------------------

def reward_scale(
    p: ParsedAnswer, gt: ScaleGT, cfg: RewardConfig = DEFAULT_CONFIG
) -> tuple[float, float, float]:
    """(r_val, r_box, r_acc) for Task A.

    Level hits and box IoUs are averaged over the ground-truth item count;
    missing slots contribute 0. Ground-truth boxes are snapped to the
    3-decimal grammar grid so a verbatim canonical answer scores exactly 1.
    An arity mismatch zeroes everything rather than raising.
    """
    n = len(gt.levels)
    if p.kind != "scale" or len(p.item_validity) != n:
        return 0.0, 0.0, 0.0
    val_hits = sum(1 for i in range(n) if p.levels[i] is not None and p.levels[i] == gt.levels[i])
    iou_sum = 0.0
    for i in range(n):
        if p.boxes[i] is None:
            continue
        ref = tuple(quantize3(c) for c in gt.boxes[i].as_tuple())
        iou_sum += iou_xyxy(p.boxes[i], ref)
    r_val = val_hits / n
    r_box = iou_sum / n
    r_acc = min(cfg.acc_cap, cfg.scale_mix * r_val + (1.0 - cfg.scale_mix) * r_box)
    return r_val, r_box, r_acc


def reward_topo(p: ParsedAnswer, sigma_star: Sequence[int]) -> float:
    """Element-wise slot accuracy; the prediction need not be a permutation."""
    n = len(sigma_star)
    if p.kind != "topo" or n == 0:
        return 0.0
    hits = sum(
        1
        for i in range(min(n, len(p.order)))
        if p.order[i] is not None and p.order[i] == sigma_star[i]
    )
    return hits / n


def reward_anomaly(
    p: ParsedAnswer, k_star: int, grid: GridSpec, cfg: RewardConfig = DEFAULT_CONFIG
) -> float:
    """exp(-euclidean grid distance / tau); invalid or out-of-range index scores 0."""
    if p.kind != "anom" or p.index is None or not 0 <= p.index < grid.size:
        return 0.0
    pred = flat_to_grid(p.index, grid)
    star = flat_to_grid(k_star, grid)
    dist = math.sqrt((pred.u - star.u) ** 2 + (pred.v - star.v) ** 2)
    return math.exp(-dist / cfg.tau)


def reward_format(p: ParsedAnswer, n_items: int, cfg: RewardConfig = DEFAULT_CONFIG) -> float:
    """Item-level format compliance, fmt_cap at full compliance."""
    if n_items <= 0 or len(p.item_validity) != n_items:
        return 0.0
    return cfg.fmt_cap * (sum(p.item_validity) / n_items)


def reward_reason(p: ParsedAnswer, mode: Mode, cfg: RewardConfig = DEFAULT_CONFIG) -> float:
    """Structural reward for the think/answer envelope; always 0 in direct mode."""
    return cfg.reason_cap if mode == "reasoning" and p.cot_structure_ok else 0.0


def total_reward(
    text: str, gt: TaskGT, mode: Mode, cfg: RewardConfig = DEFAULT_CONFIG
) -> RewardBreakdown:
    """Parse and score one response against its ground truth."""
    kind = gt_kind(gt)
    n = gt_item_count(gt)
    p = parse_answer(text, kind, n, mode)
    sub: dict[str, float] = {}
    if isinstance(gt, ScaleGT):
        r_val, r_box, r_acc = reward_scale(p, gt, cfg)
        sub = {"r_val": r_val, "r_box": r_box}
    elif isinstance(gt, TopoGT):
        r_acc = reward_topo(p, gt.order)
    else:
        r_acc = reward_anomaly(p, gt.index, gt.grid, cfg)
    r_acc = min(cfg.acc_cap, r_acc)
    r_fmt = reward_format(p, n, cfg)
    r_reason = reward_reason(p, mode, cfg)
    r_total = r_acc + r_fmt + (r_reason if mode == "reasoning" else 0.0)
    return RewardBreakdown(
        r_acc=r_acc,
        r_fmt=r_fmt,
        r_reason=r_reason,
        r_total=r_total,
        parse_ok=all(p.item_validity),
        sub_components=sub,
    )


# --- wire-format ground truth -------------------------------------------------------

def gt_to_dict(gt: TaskGT) -> dict:
    """JSON-safe ground truth, the shape stored in manifests and reward requests."""
    if isinstance(gt, ScaleGT):
        return {
            "levels": list(gt.levels),
            "boxes": [list(b.as_tuple()) for b in gt.boxes],
        }
    if isinstance(gt, TopoGT):
        return {"order": list(gt.order)}
    if isinstance(gt, AnomGT):
        return {"index": gt.index, "grid": [gt.grid.rows, gt.grid.cols]}
    raise UnknownTaskKind(f"unsupported ground truth {type(gt).__name__}")


def gt_from_dict(kind: str, payload: dict) -> TaskGT:
    """Inverse of gt_to_dict; raises ValueError/KeyError on malformed payloads."""
    if kind == "scale":
        boxes = tuple(BBox(*map(float, b)) for b in payload["boxes"])
        return ScaleGT(tuple(int(v) for v in payload["levels"]), boxes)
    if kind == "topo":
        return TopoGT(tuple(int(v) for v in payload["order"]))
    if kind == "anom":
        rows, cols = payload["grid"]
        return AnomGT(int(payload["index"]), GridSpec(int(rows), int(cols)))
    raise UnknownTaskKind(f"unsupported task kind {kind!r}")
