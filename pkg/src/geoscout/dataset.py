"""VQA rendering, quota-driven benchmark assembly, and manifest persistence.

A manifest is one JSON-lines file: the first line is a header object, every
following line is one task record with the documented key order
{"id","task","modality","difficulty","mode","images","prompt",
"ground_truth","seed","spec"}. Serialization is byte-stable for a fixed
(catalog, quota, difficulty, mode, seed) input.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable

from . import __version__
from .core import Difficulty, GridSpec, Modality, derive_seed, make_rng
from .errors import GenerationError, InsufficientSources, SchemaError
from .imaging import ImageBuffer, load_png, save_png
from .rewards import (
    AnomGT,
    ScaleGT,
    TaskGT,
    TaskKind,
    TopoGT,
    format_gt_answer,
    gt_from_dict,
    gt_to_dict,
)
from .taskgen import (
    AnomalyTask,
    AnomalyTaskSpec,
    JigsawTask,
    ReferenceProvider,
    ScaleTask,
    ScaleTaskSpec,
    SourceCatalog,
    SourceRecord,
    gen_anomaly_task,
    gen_jigsaw_task,
    gen_scale_task,
)

log = logging.getLogger("geoscout.dataset")

TASK_ORDER: tuple[TaskKind, ...] = ("scale", "topo", "anom")
MODALITY_ORDER: tuple[Modality, ...] = (Modality.CT, Modality.MRI, Modality.XRAY)

GeneratedTask = ScaleTask | JigsawTask | AnomalyTask


# --- prompt / answer rendering -------------------------------------------------

_REASONING_SUFFIX = (
    "First reason step by step inside <think>...</think>, then give only the final "
    "answer inside <answer>...</answer>."
)
_DIRECT_SUFFIX = "Answer with the final result only, no explanation."

_SCALE_PROMPT = (
    "{images}\n"
    "The first image is the full medical scan; the following {n} image(s) are square "
    "patches cropped from it and resized. Level 1 patches cover 20% of the scan area, "
    "level 2 patches cover 6.25%.\n"
    "For each patch, identify its scale level and the normalized bounding box of the "
    "patch inside the full scan. Reply with one line per patch, exactly in this form:\n"
    "patch 1: level=<1|2> box=[x1,y1,x2,y2]\n"
    "Coordinates are fractions of the scan size in [0,1] with 3 decimals.\n"
    "{suffix}"
)

_TOPO_PROMPT = (
    "<image>\n"
    "This scan was cut into a {rows}x{cols} grid of patches (numbered 0..{last} in "
    "reading order: left to right, top to bottom) and the patches were rearranged.\n"
    "For each position of the shuffled image, name the original patch index now shown "
    "there. Reply exactly in this form:\n"
    "order=[{slots}]\n"
    "{suffix}"
)

_ANOM_PROMPT = (
    "<image>\n"
    "One patch of this scan was replaced with the matching patch of a different scan. "
    "The scan is divided into a {rows}x{cols} grid of patches numbered 0..{last} in "
    "reading order.\n"
    "Name the replaced patch. Reply exactly in this form:\n"
    "index=<patch number>\n"
    "{suffix}"
)

_THINK_STUB = "Checked the geometric constraints against the image."


def render_prompt(task: GeneratedTask, mode: str) -> str:
    """Deterministic instruction text, including one <image> token per input image."""
    suffix = _REASONING_SUFFIX if mode == "reasoning" else _DIRECT_SUFFIX
    if isinstance(task, ScaleTask):
        n = len(task.patches)
        return _SCALE_PROMPT.format(images="\n".join(["<image>"] * (1 + n)), n=n, suffix=suffix)
    if isinstance(task, JigsawTask):
        g = task.grid
        return _TOPO_PROMPT.format(
            rows=g.rows,
            cols=g.cols,
            last=g.size - 1,
            slots=",".join("?" * g.size),
            suffix=suffix,
        )
    if isinstance(task, AnomalyTask):
        g = task.grid
        return _ANOM_PROMPT.format(rows=g.rows, cols=g.cols, last=g.size - 1, suffix=suffix)
    raise TypeError(f"unsupported task {type(task).__name__}")


def ground_truth_of(task: GeneratedTask) -> TaskGT:
    if isinstance(task, ScaleTask):
        return ScaleGT(task.levels, task.boxes)
    if isinstance(task, JigsawTask):
        return TopoGT(task.sigma.mapping)
    if isinstance(task, AnomalyTask):
        return AnomGT(task.k_star, task.grid)
    raise TypeError(f"unsupported task {type(task).__name__}")


def render_gt_answer(task: GeneratedTask, mode: str) -> str:
    """Canonical answer text; scores the mode maximum under the reward engine."""
    body = format_gt_answer(ground_truth_of(task))
    if mode == "reasoning":
        return f"<think>{_THINK_STUB}</think><answer>{body}</answer>"
    return body


# --- composition quota ----------------------------------------------------------

DEFAULT_TASK_SHARES: dict[TaskKind, Fraction] = {
    "scale": Fraction(1, 6),
    "topo": Fraction(1, 2),
    "anom": Fraction(1, 3),
}


@dataclass(frozen=True)
class CompositionQuota:
    """Total size plus modality and task shares (defaults: 1/3 each modality,
    task split 1:3:2)."""

    total: int
    modality_shares: dict[Modality, Fraction] = field(
        default_factory=lambda: {m: Fraction(1, 3) for m in MODALITY_ORDER}
    )
    task_shares: dict[TaskKind, Fraction] = field(
        default_factory=lambda: dict(DEFAULT_TASK_SHARES)
    )

    def __post_init__(self):
        if self.total < 0:
            raise ValueError("total must be non-negative")
        for shares in (self.modality_shares, self.task_shares):
            if sum(shares.values()) != 1:
                raise ValueError("shares must sum to 1")

    def cell_counts(self) -> dict[tuple[Modality, TaskKind], int]:
        """Largest-remainder apportionment over the modality x task cells.

        Exact Fraction arithmetic; remainder ties break in fixed
        (modality, task) order, so the split is deterministic and sums to
        total exactly.
        """
        cells = [(m, t) for m in MODALITY_ORDER for t in TASK_ORDER]
        exact = {
            (m, t): self.total * self.modality_shares[m] * self.task_shares[t]
            for (m, t) in cells
        }
        counts = {cell: int(exact[cell]) for cell in cells}  # floor
        leftover = self.total - sum(counts.values())
        by_remainder = sorted(
            cells, key=lambda cell: (-(exact[cell] - counts[cell]), cells.index(cell))
        )
        for cell in by_remainder[:leftover]:
            counts[cell] += 1
        return counts

    def task_totals(self) -> dict[TaskKind, int]:
        counts = self.cell_counts()
        return {t: sum(counts[(m, t)] for m in MODALITY_ORDER) for t in TASK_ORDER}

    def modality_totals(self) -> dict[Modality, int]:
        counts = self.cell_counts()
        return {m: sum(counts[(m, t)] for t in TASK_ORDER) for m in MODALITY_ORDER}


# --- manifest --------------------------------------------------------------------

RECORD_KEYS = (
    "id",
    "task",
    "modality",
    "difficulty",
    "mode",
    "images",
    "prompt",
    "ground_truth",
    "seed",
    "spec",
)


@dataclass
class Manifest:
    dataset_id: str
    seed: int
    total: int
    difficulty: str
    mode_policy: str
    version: str
    records: list[dict] = field(default_factory=list)

    def header(self) -> dict:
        return {
            "dataset_id": self.dataset_id,
            "seed": self.seed,
            "total": self.total,
            "difficulty": self.difficulty,
            "mode_policy": self.mode_policy,
            "version": self.version,
        }

    def cell_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for rec in self.records:
            key = f"{rec['task']}/{rec['modality']}"
            counts[key] = counts.get(key, 0) + 1
        return counts

    def record_gt(self, rec: dict) -> TaskGT:
        return gt_from_dict(rec["task"], rec["ground_truth"])


def write_manifest_jsonl(manifest: Manifest, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(manifest.header(), ensure_ascii=False) + "\n")
        for rec in manifest.records:
            ordered = {k: rec[k] for k in RECORD_KEYS}
            fh.write(json.dumps(ordered, ensure_ascii=False) + "\n")


def read_manifest_jsonl(path) -> Manifest:
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaError("empty manifest file", line=1)
    try:
        header = json.loads(lines[0])
        manifest = Manifest(
            dataset_id=str(header["dataset_id"]),
            seed=int(header["seed"]),
            total=int(header["total"]),
            difficulty=str(header["difficulty"]),
            mode_policy=str(header["mode_policy"]),
            version=str(header["version"]),
        )
    except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"bad manifest header: {exc}", line=1) from exc
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            missing = [k for k in RECORD_KEYS if k not in rec]
            if missing:
                raise ValueError(f"missing keys {missing}")
            gt_from_dict(rec["task"], rec["ground_truth"])  # validates the payload
        except (json.JSONDecodeError, KeyError, ValueError, TypeError) as exc:
            raise SchemaError(f"bad manifest record: {exc}", line=lineno) from exc
        manifest.records.append(rec)
    return manifest


# --- assembly ----------------------------------------------------------------------

@dataclass(frozen=True)
class GenParams:
    """Generation knobs that are not implied by the difficulty preset."""

    noise_sigma: float = 0.05
    boundary_width: int = 2
    ref_offset: int = 1
    scale_ratios: tuple[float, ...] = (0.20, 0.0625)
    roi_bounds: tuple[float, float] = (0.2, 0.8)
    resize_target: tuple[int, int] | None = None


def _task_specs(difficulty: Difficulty, params: GenParams):
    scale_spec = ScaleTaskSpec(
        num_patches=difficulty.num_patches,
        scale_ratios=params.scale_ratios,
        roi_bounds=params.roi_bounds,
        resize_target=params.resize_target,
    )
    anom_spec = AnomalyTaskSpec(
        grid=difficulty.anomaly_grid,
        center_indices=difficulty.anomaly_centers,
        noise_sigma=params.noise_sigma,
        boundary_width=params.boundary_width,
    )
    return scale_spec, difficulty.jigsaw_grid, anom_spec


def _spec_snapshot(task: TaskKind, source_id: str, difficulty: Difficulty, params: GenParams) -> dict:
    scale_spec, jigsaw_grid, anom_spec = _task_specs(difficulty, params)
    if task == "scale":
        return {
            "source_id": source_id,
            "num_patches": scale_spec.num_patches,
            "ratios": list(scale_spec.scale_ratios),
            "roi": list(scale_spec.roi_bounds),
            "resize": list(scale_spec.resize_target) if scale_spec.resize_target else None,
        }
    if task == "topo":
        return {"source_id": source_id, "grid": [jigsaw_grid.rows, jigsaw_grid.cols]}
    return {
        "source_id": source_id,
        "grid": [anom_spec.grid.rows, anom_spec.grid.cols],
        "center_indices": list(anom_spec.center_indices),
        "noise_sigma": anom_spec.noise_sigma,
        "boundary_width": anom_spec.boundary_width,
        "ref_offset": params.ref_offset,
    }


def generate_case(
    task: TaskKind,
    record: SourceRecord,
    difficulty: Difficulty,
    params: GenParams,
    refs: ReferenceProvider | None,
    seed: int,
    loader: Callable[[str], ImageBuffer] = load_png,
) -> GeneratedTask:
    """Run one generator for one (task, source) pair with a derived seed."""
    img = loader(record.path)
    scale_spec, jigsaw_grid, anom_spec = _task_specs(difficulty, params)
    if task == "scale":
        return gen_scale_task(img, scale_spec, seed)
    if task == "topo":
        return gen_jigsaw_task(img, jigsaw_grid, seed)
    if refs is None:
        raise GenerationError("anomaly generation requires a reference provider")
    return gen_anomaly_task(img, record, anom_spec, refs, seed)


def _case_images(task: GeneratedTask, case_id: str, images_dir: Path) -> list[Path]:
    if isinstance(task, ScaleTask):
        paths = [images_dir / f"{case_id}_g.png"]
        save_png(task.global_image, paths[0])
        for i, patch in enumerate(task.patches, start=1):
            p = images_dir / f"{case_id}_p{i}.png"
            save_png(patch, p)
            paths.append(p)
        return paths
    p = images_dir / f"{case_id}.png"
    save_png(task.shuffled if isinstance(task, JigsawTask) else task.corrupted, p)
    return [p]


def assemble(
    catalog: SourceCatalog,
    quota: CompositionQuota,
    difficulty: Difficulty,
    mode_policy: str,
    seed: int,
    out_dir,
    refs: ReferenceProvider | None = None,
    params: GenParams = GenParams(),
    jobs: int = 1,
    loader: Callable[[str], ImageBuffer] = load_png,
) -> Manifest:
    """Fill every (modality, task) cell exactly, writing PNGs under out_dir/images.

    Sources are sampled without replacement within a cell; a source whose
    generation fails (infeasible crop, missing reference, ...) is logged and
    replaced by the next candidate. mode_policy is "direct", "reasoning" or
    "mixed" (alternating by case index within each cell).
    """
    if mode_policy not in ("direct", "reasoning", "mixed"):
        raise ValueError(f"unknown mode policy {mode_policy!r}")
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    manifest = Manifest(
        dataset_id=f"geoscout-{difficulty.value}-{quota.total}-{seed}",
        seed=seed,
        total=quota.total,
        difficulty=difficulty.value,
        mode_policy=mode_policy,
        version=__version__,
    )

    def build_cell(modality: Modality, task: TaskKind, need: int) -> list[dict]:
        eligible = catalog.by_modality(modality)
        order_rng = make_rng(derive_seed(seed, f"__cell__/{modality.value}", task, 0))
        candidates = [eligible[i] for i in order_rng.permutation(len(eligible))]
        rows: list[dict] = []
        case_index = 0
        for record in candidates:
            if case_index >= need:
                break
            case_seed = derive_seed(seed, record.id, task, case_index)
            try:
                generated = generate_case(
                    task, record, difficulty, params, refs, case_seed, loader
                )
            except GenerationError as exc:
                log.warning("skip %s/%s source %s: %s", task, modality.value, record.id, exc)
                continue
            case_id = f"{task}-{modality.value}-{case_index:06d}"
            mode = mode_policy
            if mode_policy == "mixed":
                mode = "direct" if case_index % 2 == 0 else "reasoning"
            image_paths = _case_images(generated, case_id, images_dir)
            rows.append(
                {
                    "id": case_id,
                    "task": task,
                    "modality": modality.value,
                    "difficulty": difficulty.value,
                    "mode": mode,
                    "images": [str(p.relative_to(out_dir)) for p in image_paths],
                    "prompt": render_prompt(generated, mode),
                    "ground_truth": gt_to_dict(ground_truth_of(generated)),
                    "seed": case_seed,
                    "spec": _spec_snapshot(task, record.id, difficulty, params),
                }
            )
            case_index += 1
        if case_index < need:
            raise InsufficientSources(
                f"cell {task}/{modality.value}: filled {case_index} of {need} "
                f"from {len(candidates)} sources"
            )
        return rows

    cells = quota.cell_counts()
    cell_keys = [(m, t) for m in MODALITY_ORDER for t in TASK_ORDER if cells[(m, t)] > 0]
    if jobs > 1 and len(cell_keys) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(build_cell, m, t, cells[(m, t)]) for (m, t) in cell_keys]
            results = [f.result() for f in futures]
    else:
        results = [build_cell(m, t, cells[(m, t)]) for (m, t) in cell_keys]
    for rows in results:
        manifest.records.extend(rows)
    return manifest


def regenerate_ground_truth(
    record: dict,
    catalog: SourceCatalog,
    refs: ReferenceProvider | None = None,
    loader: Callable[[str], ImageBuffer] = load_png,
) -> dict:
    """Re-run the generator from a manifest record's stored seed and spec.

    Returns the freshly generated ground-truth dict, which must equal the
    stored one for a well-formed manifest.
    """
    spec = record["spec"]
    source = catalog.by_id(spec["source_id"])
    task: TaskKind = record["task"]
    img = loader(source.path)
    if task == "scale":
        generated: GeneratedTask = gen_scale_task(
            img,
            ScaleTaskSpec(
                num_patches=int(spec["num_patches"]),
                scale_ratios=tuple(spec["ratios"]),
                roi_bounds=tuple(spec["roi"]),
                resize_target=tuple(spec["resize"]) if spec.get("resize") else None,
            ),
            int(record["seed"]),
        )
    elif task == "topo":
        generated = gen_jigsaw_task(img, GridSpec(*spec["grid"]), int(record["seed"]))
    else:
        if refs is None:
            raise GenerationError("anomaly regeneration requires a reference provider")
        generated = gen_anomaly_task(
            img,
            source,
            AnomalyTaskSpec(
                grid=GridSpec(*spec["grid"]),
                center_indices=tuple(spec["center_indices"]),
                noise_sigma=float(spec["noise_sigma"]),
                boundary_width=int(spec["boundary_width"]),
            ),
            refs,
            int(record["seed"]),
        )
    return gt_to_dict(ground_truth_of(generated))
