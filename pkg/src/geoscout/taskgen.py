"""Deterministic synthesis of the three geometric proxy tasks.

Generators are pure functions of (image, spec, seed). The seed drives a
Philox stream, so a stored (source, spec, seed) triple reproduces the task
bit-for-bit. Draw order within each generator is fixed and documented in
the function bodies; changing it changes every emitted dataset.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping

import numpy as np

from .core import BBox, GridSpec, Modality, Permutation, flat_to_grid, make_rng
from .errors import (
    DegenerateReference,
    DimensionMismatch,
    EmptyIndex,
    ImageTooSmall,
    InfeasibleCrop,
    ReferenceUnavailable,
    SchemaError,
)
from .imaging import (
    ImageBuffer,
    center_crop_to_grid,
    compose_grid,
    crop,
    grid_patches,
    load_png,
    resize_bilinear,
    to_channels,
)

MIN_PATCH_SIDE = 8  # pixels


# --- source catalog ----------------------------------------------------------

@dataclass(frozen=True)
class SourceRecord:
    """One catalog entry: an image file plus retrieval/volume metadata."""

    id: str
    modality: Modality
    path: str
    series_id: str | None = None
    z: int | None = None
    embedding_id: str | None = None


class SourceCatalog:
    """Read-only view over catalog records with series and embedding lookups."""

    def __init__(self, records: Iterable[SourceRecord]):
        self.records = list(records)
        self._by_id: dict[str, SourceRecord] = {}
        self._series: dict[str, dict[int, SourceRecord]] = {}
        self._by_embedding: dict[str, SourceRecord] = {}
        for rec in self.records:
            if rec.id in self._by_id:
                raise SchemaError(f"duplicate source id {rec.id!r}")
            self._by_id[rec.id] = rec
            if rec.series_id is not None and rec.z is not None:
                self._series.setdefault(rec.series_id, {})[rec.z] = rec
            if rec.embedding_id is not None:
                self._by_embedding[rec.embedding_id] = rec

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, rec_id: str) -> SourceRecord:
        return self._by_id[rec_id]

    def by_modality(self, modality: Modality) -> list[SourceRecord]:
        return [r for r in self.records if r.modality is modality]

    def series_slices(self, series_id: str) -> dict[int, SourceRecord]:
        return dict(self._series.get(series_id, {}))

    def by_embedding_id(self, embedding_id: str) -> SourceRecord | None:
        return self._by_embedding.get(embedding_id)


def load_catalog(path) -> SourceCatalog:
    """Parse a JSON-lines source catalog.

    Each line: {"id", "modality": "ct|mri|xray", "path", "series_id"?,
    "z"?, "embedding_id"?}.
    """
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                rec = SourceRecord(
                    id=str(obj["id"]),
                    modality=Modality(obj["modality"]),
                    path=str(obj["path"]),
                    series_id=obj.get("series_id"),
                    z=int(obj["z"]) if "z" in obj and obj["z"] is not None else None,
                    embedding_id=obj.get("embedding_id"),
                )
            except (KeyError, ValueError, TypeError) as exc:
                raise SchemaError(f"bad catalog record: {exc}", line=lineno) from exc
            records.append(rec)
    return SourceCatalog(records)


# --- embedding index ---------------------------------------------------------

class EmbeddingIndex:
    """id -> vector store for reference retrieval; read-only after load."""

    def __init__(self, entries: Mapping[str, np.ndarray]):
        if not entries:
            self.ids: list[str] = []
            self.dimension = 0
            self._matrix = np.zeros((0, 0))
            return
        self.ids = sorted(entries)
        vectors = []
        dim = None
        for key in self.ids:
            v = np.asarray(entries[key], dtype=np.float64)
            if v.ndim != 1:
                raise SchemaError(f"embedding {key!r} is not a flat vector")
            if dim is None:
                dim = v.shape[0]
            elif v.shape[0] != dim:
                raise DimensionMismatch(
                    f"embedding {key!r} has dimension {v.shape[0]}, expected {dim}"
                )
            norm = float(np.linalg.norm(v))
            if not np.isfinite(norm) or norm == 0.0:
                raise SchemaError(f"embedding {key!r} has zero or non-finite norm")
            vectors.append(v / norm)
        self.dimension = int(dim)
        self._matrix = np.stack(vectors)  # rows unit-normalized, sorted by id

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, key: str) -> bool:
        return key in set(self.ids)

    def vector(self, key: str) -> np.ndarray:
        return self._matrix[self.ids.index(key)]

    @classmethod
    def load(cls, path) -> "EmbeddingIndex":
        """Parse JSON-lines {"id", "vector": [floats]}; dimension fixed by the first record."""
        entries: dict[str, np.ndarray] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                    key = str(obj["id"])
                    vec = np.asarray(obj["vector"], dtype=np.float64)
                except (KeyError, ValueError, TypeError) as exc:
                    raise SchemaError(f"bad embedding record: {exc}", line=lineno) from exc
                if key in entries:
                    raise SchemaError(f"duplicate embedding id {key!r}", line=lineno)
                entries[key] = vec
        return cls(entries)


def top1_similar(query: np.ndarray, index: EmbeddingIndex, exclude: str | None = None) -> str:
    """Id of the highest-cosine entry, ties broken by lexicographically smallest id."""
    query = np.asarray(query, dtype=np.float64)
    if len(index) == 0 or (len(index) == 1 and exclude in index.ids):
        raise EmptyIndex("no candidate entries besides the excluded id")
    if query.ndim != 1 or query.shape[0] != index.dimension:
        raise DimensionMismatch(
            f"query has dimension {query.shape}, index dimension {index.dimension}"
        )
    qnorm = float(np.linalg.norm(query))
    if qnorm == 0.0:
        raise DimensionMismatch("query vector has zero norm")
    cosines = index._matrix @ (query / qnorm)
    if exclude is not None and exclude in index.ids:
        cosines[index.ids.index(exclude)] = -np.inf
    # ids are sorted, so argmax already lands on the smallest id among ties
    return index.ids[int(np.argmax(cosines))]


# --- Task A: hierarchical scale localization ----------------------------------

@dataclass(frozen=True)
class ScaleTaskSpec:
    """Crop-count, area ratios, ROI bounds and the resize target.

    Level labels are 1-based positions in `scale_ratios`: the default maps
    ratio 0.20 to level 1 (regional view) and 0.0625 to level 2 (focal view).
    `resize_target` of None resizes each patch to the source resolution.
    """

    num_patches: int = 3
    scale_ratios: tuple[float, ...] = (0.20, 0.0625)
    roi_bounds: tuple[float, float] = (0.2, 0.8)
    resize_target: tuple[int, int] | None = None

    def __post_init__(self):
        if not 1 <= self.num_patches <= 3:
            raise ValueError("num_patches must be in 1..3")
        if not all(0.0 < r < 1.0 for r in self.scale_ratios):
            raise ValueError("scale ratios must lie in (0, 1)")
        lo, hi = self.roi_bounds
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("roi bounds must satisfy 0 <= lo < hi <= 1")


@dataclass(frozen=True)
class ScaleTask:
    global_image: ImageBuffer
    patches: tuple[ImageBuffer, ...]
    boxes: tuple[BBox, ...]
    levels: tuple[int, ...]


def crop_side_and_bounds(
    ratio: float, height: int, width: int, roi: tuple[float, float]
) -> tuple[int, tuple[int, int], tuple[int, int]]:
    """Square side l = floor(sqrt(r*H*W)) and the inclusive integer top-left
    ranges that keep the crop inside the ROI in both axes.

    Raises ImageTooSmall for l < MIN_PATCH_SIDE and InfeasibleCrop when the
    ROI leaves no valid top-left position.
    """
    lo, hi = roi
    side = math.floor(math.sqrt(ratio * height * width))
    if side < MIN_PATCH_SIDE:
        raise ImageTooSmall(f"crop side {side}px below minimum {MIN_PATCH_SIDE}px")

    def axis_range(dim: int) -> tuple[int, int]:
        start = math.ceil(lo * dim - 1e-9)
        while start / dim < lo:
            start += 1
        stop = math.floor(hi * dim - side + 1e-9)
        while (stop + side) / dim > hi:
            stop -= 1
        return start, stop

    x_range = axis_range(width)
    y_range = axis_range(height)
    if x_range[0] > x_range[1] or y_range[0] > y_range[1]:
        raise InfeasibleCrop(
            f"ratio {ratio} needs side {side}px, ROI {roi} leaves no room in {width}x{height}"
        )
    return side, x_range, y_range


def gen_scale_task(img: ImageBuffer, spec: ScaleTaskSpec, seed: int) -> ScaleTask:
    """Crop N ROI-constrained square patches and resize them.

    Draw order per patch: ratio index, then x, then y (inclusive integer
    uniform). Boxes are normalized as [x/W, y/H, (x+l)/W, (y+l)/H].
    """
    h, w = img.height, img.width
    bounds = {r: crop_side_and_bounds(r, h, w, spec.roi_bounds) for r in spec.scale_ratios}
    out_h, out_w = spec.resize_target if spec.resize_target is not None else (h, w)

    rng = make_rng(seed)
    patches, boxes, levels = [], [], []
    for _ in range(spec.num_patches):
        ridx = int(rng.integers(0, len(spec.scale_ratios)))
        ratio = spec.scale_ratios[ridx]
        side, (x_lo, x_hi), (y_lo, y_hi) = bounds[ratio]
        x = int(rng.integers(x_lo, x_hi + 1))
        y = int(rng.integers(y_lo, y_hi + 1))
        raw = crop(img, y, x, side, side)
        patches.append(resize_bilinear(raw, out_h, out_w))
        boxes.append(BBox(x / w, y / h, (x + side) / w, (y + side) / h))
        levels.append(ridx + 1)
    return ScaleTask(img, tuple(patches), tuple(boxes), tuple(levels))


# --- Task B: topological jigsaw reconstruction ---------------------------------

@dataclass(frozen=True)
class JigsawTask:
    shuffled: ImageBuffer
    sigma: Permutation  # position i of the shuffled image holds original patch sigma[i]
    grid: GridSpec


def place_jigsaw(img: ImageBuffer, grid: GridSpec, sigma: Permutation) -> ImageBuffer:
    """Compose the shuffled image: position i receives original patch sigma[i]."""
    patches = grid_patches(img, grid)
    return compose_grid([patches[sigma[i]] for i in range(grid.size)], grid)


def reconstruct_jigsaw(task: JigsawTask) -> ImageBuffer:
    """Undo the shuffle: shuffled patch i goes back to position sigma[i]."""
    shuffled_patches = grid_patches(task.shuffled, task.grid)
    restored: list[ImageBuffer | None] = [None] * task.grid.size
    for i in range(task.grid.size):
        restored[task.sigma[i]] = shuffled_patches[i]
    return compose_grid(restored, task.grid)  # type: ignore[arg-type]


def gen_jigsaw_task(img: ImageBuffer, grid: GridSpec, seed: int) -> JigsawTask:
    """Center-crop to grid-divisible dimensions and shuffle the patches.

    The identity permutation is rejected and resampled; an unshuffled puzzle
    carries no supervision.
    """
    cropped = center_crop_to_grid(img, grid)
    if cropped.height // grid.rows < MIN_PATCH_SIDE or cropped.width // grid.cols < MIN_PATCH_SIDE:
        raise ImageTooSmall(
            f"{img.width}x{img.height} gives patches below {MIN_PATCH_SIDE}px on a "
            f"{grid.rows}x{grid.cols} grid"
        )
    rng = make_rng(seed)
    while True:
        sigma = Permutation(tuple(int(i) for i in rng.permutation(grid.size)))
        if not sigma.is_identity:
            break
    return JigsawTask(place_jigsaw(cropped, grid, sigma), sigma, grid)


# --- Task C: anomaly consistency detection -------------------------------------

@dataclass(frozen=True)
class AnomalyTaskSpec:
    """Grid geometry, eligible center indices, and seam-blending parameters."""

    grid: GridSpec = GridSpec(4, 4)
    center_indices: tuple[int, ...] = (5, 6, 9, 10)
    noise_sigma: float = 0.05  # std dev in normalized [0, 1] intensity
    boundary_width: int = 2  # pixels on each side of the pasted patch border

    def __post_init__(self):
        if not self.center_indices:
            raise ValueError("center_indices must be non-empty")
        if any(not 0 <= k < self.grid.size for k in self.center_indices):
            raise ValueError("center indices outside the grid")
        if len(set(self.center_indices)) != len(self.center_indices):
            raise ValueError("duplicate center indices")
        if self.noise_sigma < 0 or self.boundary_width < 0:
            raise ValueError("noise_sigma and boundary_width must be non-negative")


@dataclass(frozen=True)
class AnomalyTask:
    corrupted: ImageBuffer
    k_star: int
    reference_id: str
    grid: GridSpec


ReferenceProvider = Callable[[SourceRecord], tuple[str, ImageBuffer]]


def seam_band_mask(shape_hw: tuple[int, int], grid: GridSpec, k: int, width: int) -> np.ndarray:
    """Boolean mask of the blend band: `width` pixels on each side of patch k's
    border, clipped to the image."""
    h, w = shape_hw
    ph, pw = h // grid.rows, w // grid.cols
    c = flat_to_grid(k, grid)
    y0, y1 = c.u * ph, (c.u + 1) * ph
    x0, x1 = c.v * pw, (c.v + 1) * pw
    mask = np.zeros((h, w), dtype=bool)
    if width == 0:
        return mask
    mask[max(0, y0 - width) : min(h, y1 + width), max(0, x0 - width) : min(w, x1 + width)] = True
    inner_y0, inner_y1 = y0 + width, y1 - width
    inner_x0, inner_x1 = x0 + width, x1 - width
    if inner_y0 < inner_y1 and inner_x0 < inner_x1:
        mask[inner_y0:inner_y1, inner_x0:inner_x1] = False
    return mask


def gen_anomaly_task(
    img: ImageBuffer,
    record: SourceRecord,
    spec: AnomalyTaskSpec,
    refs: ReferenceProvider,
    seed: int,
) -> AnomalyTask:
    """Cut-paste the co-located reference patch into a center cell.

    Draw order: k* (uniform over sorted center indices), then the seam noise
    vector. Noise is added in normalized intensity, clamped to [0, 1], and
    re-quantized to 8 bits; pixels outside patch k* and its seam band are
    untouched.
    """
    ref_id, ref_img = refs(record)
    if ref_img == img:
        raise DegenerateReference(f"reference {ref_id!r} is byte-identical to {record.id!r}")

    target = center_crop_to_grid(img, spec.grid)
    ref_img = to_channels(ref_img, target.channels)
    if (ref_img.height, ref_img.width) == (img.height, img.width):
        reference = center_crop_to_grid(ref_img, spec.grid)
    else:
        reference = resize_bilinear(ref_img, target.height, target.width)

    rng = make_rng(seed)
    centers = tuple(sorted(spec.center_indices))
    k_star = centers[int(rng.integers(0, len(centers)))]

    ph, pw = target.height // spec.grid.rows, target.width // spec.grid.cols
    coord = flat_to_grid(k_star, spec.grid)
    y0, x0 = coord.u * ph, coord.v * pw

    canvas = target.pixels.copy()
    canvas[y0 : y0 + ph, x0 : x0 + pw] = reference.pixels[y0 : y0 + ph, x0 : x0 + pw]

    if spec.noise_sigma > 0 and spec.boundary_width > 0:
        band = seam_band_mask((target.height, target.width), spec.grid, k_star, spec.boundary_width)
        values = canvas[band].astype(np.float64) / 255.0
        values = values + rng.normal(0.0, spec.noise_sigma, size=values.shape)
        canvas[band] = np.rint(np.clip(values, 0.0, 1.0) * 255.0).astype(np.uint8)

    return AnomalyTask(ImageBuffer(canvas), k_star, ref_id, spec.grid)


# --- reference selection --------------------------------------------------------

def select_reference(
    record: SourceRecord,
    catalog: SourceCatalog,
    index: EmbeddingIndex | None = None,
    offset: int = 1,
) -> SourceRecord:
    """Hard-negative reference for a source record.

    Volumetric records take the sibling slice at z+offset, falling back to
    z-offset. Planar records take the top-1 cosine neighbor from the
    embedding index, excluding the record itself.
    """
    if record.modality.volumetric:
        if record.series_id is None or record.z is None:
            raise ReferenceUnavailable(f"volumetric record {record.id!r} lacks series/z")
        slices = catalog.series_slices(record.series_id)
        for z in (record.z + offset, record.z - offset):
            if z in slices and slices[z].id != record.id:
                return slices[z]
        raise ReferenceUnavailable(
            f"no sibling at z = {record.z} +/- {offset} in series {record.series_id!r}"
        )
    if record.embedding_id is None or index is None or record.embedding_id not in index.ids:
        raise ReferenceUnavailable(f"record {record.id!r} has no usable embedding")
    hit = top1_similar(index.vector(record.embedding_id), index, exclude=record.embedding_id)
    ref = catalog.by_embedding_id(hit)
    if ref is None:
        raise ReferenceUnavailable(f"embedding {hit!r} maps to no catalog record")
    return ref


@dataclass
class ReferenceResolver:
    """Reference provider backed by a catalog, embedding index and image loader."""

    catalog: SourceCatalog
    index: EmbeddingIndex | None = None
    offset: int = 1
    loader: Callable[[str], ImageBuffer] = field(default=load_png)

    def __call__(self, record: SourceRecord) -> tuple[str, ImageBuffer]:
        ref = select_reference(record, self.catalog, self.index, self.offset)
        return ref.id, self.loader(ref.path)
