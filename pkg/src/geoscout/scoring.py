"""Benchmark scoring harness and the energy-gap analysis.

The headline score per task is the mean accuracy component scaled by 100;
format/reasoning components ride along in the per-case rows. The overall
average is the unweighted mean over the per-task means, not the case-weighted
mean (the tasks have a 1:3:2 case split, so the two differ).
"""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .core import RewardBreakdown
from .dataset import Manifest
from .errors import DuplicateId, EmptyInput, MissingResponse, SchemaError, UnknownId
from .rewards import DEFAULT_CONFIG, RewardConfig, total_reward

log = logging.getLogger("geoscout.scoring")

TASKS = ("scale", "topo", "anom")


@dataclass(frozen=True)
class CaseScore:
    id: str
    task: str
    modality: str
    mode: str
    missing: bool
    breakdown: RewardBreakdown


@dataclass
class ScoreReport:
    per_task: dict[str, float]  # mean r_acc x 100
    avg: float  # unweighted mean of the per-task means
    parse_fail_rate: float
    cells: dict[str, dict[str, int]]  # task -> modality -> case count
    rows: list[CaseScore] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "per_task": dict(self.per_task),
            "avg": self.avg,
            "parse_fail_rate": self.parse_fail_rate,
            "cells": {t: dict(m) for t, m in self.cells.items()},
        }


def score_responses(
    manifest: Manifest,
    responses: Iterable[dict],
    cfg: RewardConfig = DEFAULT_CONFIG,
    missing_policy: str = "zero",
    jobs: int = 1,
) -> ScoreReport:
    """Score a response stream ({"id", "output"} records) against a manifest.

    Unknown response ids raise UnknownId, duplicates raise DuplicateId.
    Manifest records without a response score 0 with a warning under the
    default "zero" policy, or raise MissingResponse under "strict".
    Per-case scoring is pure, so jobs > 1 fans it out over threads;
    aggregation stays a deterministic sequential reduce.
    """
    if missing_policy not in ("zero", "strict"):
        raise ValueError(f"unknown missing policy {missing_policy!r}")
    by_id = {rec["id"]: rec for rec in manifest.records}
    outputs: dict[str, str] = {}
    for resp in responses:
        rid = str(resp["id"])
        if rid not in by_id:
            raise UnknownId(f"response id {rid!r} not in manifest")
        if rid in outputs:
            raise DuplicateId(f"response id {rid!r} supplied twice")
        outputs[rid] = str(resp.get("output", ""))

    missing_ids = [rid for rid in by_id if rid not in outputs]
    if missing_ids and missing_policy == "strict":
        raise MissingResponse(f"{len(missing_ids)} manifest records without responses")
    if missing_ids:
        log.warning("%d manifest records have no response; scoring them 0", len(missing_ids))

    def score_one(rec: dict) -> CaseScore:
        text = outputs.get(rec["id"], "")
        breakdown = total_reward(text, manifest.record_gt(rec), rec["mode"], cfg)
        return CaseScore(
            id=rec["id"],
            task=rec["task"],
            modality=rec["modality"],
            mode=rec["mode"],
            missing=rec["id"] not in outputs,
            breakdown=breakdown,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(score_one, manifest.records))
    else:
        rows = [score_one(rec) for rec in manifest.records]
    return _aggregate(rows)


def _aggregate(rows: list[CaseScore]) -> ScoreReport:
    per_task: dict[str, float] = {}
    cells: dict[str, dict[str, int]] = {}
    for task in TASKS:
        accs = [r.breakdown.r_acc for r in rows if r.task == task]
        if accs:
            per_task[task] = 100.0 * float(np.mean(accs))
        task_rows = [r for r in rows if r.task == task]
        if task_rows:
            counts: dict[str, int] = {}
            for r in task_rows:
                counts[r.modality] = counts.get(r.modality, 0) + 1
            cells[task] = counts
    avg = float(np.mean(list(per_task.values()))) if per_task else 0.0
    fail_rate = (
        sum(1 for r in rows if not r.breakdown.parse_ok) / len(rows) if rows else 0.0
    )
    return ScoreReport(
        per_task=per_task, avg=avg, parse_fail_rate=fail_rate, cells=cells, rows=rows
    )


def write_report_json(report: ScoreReport, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.as_dict(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")


def write_cases_csv(report: ScoreReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id", "task", "modality", "mode", "missing", "r_acc", "r_fmt", "r_reason",
             "r_total", "parse_ok"]
        )
        for r in report.rows:
            b = r.breakdown
            writer.writerow(
                [r.id, r.task, r.modality, r.mode, int(r.missing), repr(b.r_acc),
                 repr(b.r_fmt), repr(b.r_reason), repr(b.r_total), int(b.parse_ok)]
            )


# --- energy gap -----------------------------------------------------------------

@dataclass(frozen=True)
class EnergyRecord:
    """Negative log-likelihoods (nats) of a factual/counterfactual description pair."""

    pair_id: str
    nll_factual: float
    nll_counterfactual: float

    def __post_init__(self):
        for v in (self.nll_factual, self.nll_counterfactual):
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"NLL values must be finite and non-negative, got {v}")


@dataclass(frozen=True)
class GapStats:
    gap: float  # mean(counterfactual) - mean(factual)
    separation_rate: float  # fraction of pairs with nll_cf > nll_fact
    n: int
    mean_factual: float
    mean_counterfactual: float
    bin_width: float
    bin_edges: tuple[float, ...]
    hist_factual: tuple[int, ...]
    hist_counterfactual: tuple[int, ...]

    def as_dict(self) -> dict:
        return {
            "gap": self.gap,
            "separation_rate": self.separation_rate,
            "n": self.n,
            "mean_factual": self.mean_factual,
            "mean_counterfactual": self.mean_counterfactual,
            "bin_width": self.bin_width,
        }


def energy_gap(records: Iterable[EnergyRecord], bin_width: float = 0.05) -> GapStats:
    """Mean energy gap, separation rate, and fixed-width histograms per side."""
    records = list(records)
    if len(records) < 2:
        raise EmptyInput(f"need at least 2 energy records, got {len(records)}")
    fact = np.array([r.nll_factual for r in records], dtype=np.float64)
    cf = np.array([r.nll_counterfactual for r in records], dtype=np.float64)
    mean_f = float(np.mean(fact))
    mean_c = float(np.mean(cf))
    lo = math.floor(float(min(fact.min(), cf.min())) / bin_width) * bin_width
    hi = math.ceil(float(max(fact.max(), cf.max())) / bin_width) * bin_width
    n_bins = max(1, round((hi - lo) / bin_width))
    edges = np.linspace(lo, lo + n_bins * bin_width, n_bins + 1)
    hist_f, _ = np.histogram(fact, bins=edges)
    hist_c, _ = np.histogram(cf, bins=edges)
    return GapStats(
        gap=mean_c - mean_f,
        separation_rate=float(np.mean(cf > fact)),
        n=len(records),
        mean_factual=mean_f,
        mean_counterfactual=mean_c,
        bin_width=bin_width,
        bin_edges=tuple(float(e) for e in edges),
        hist_factual=tuple(int(c) for c in hist_f),
        hist_counterfactual=tuple(int(c) for c in hist_c),
    )


def read_energy_csv(path) -> list[EnergyRecord]:
    """Parse pair_id,nll_factual,nll_counterfactual rows; the header line is optional."""
    records: list[EnergyRecord] = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if lineno == 1 and row[0].strip().lower() == "pair_id":
                continue
            if len(row) != 3:
                raise SchemaError(f"expected 3 columns, got {len(row)}", line=lineno)
            try:
                records.append(EnergyRecord(row[0], float(row[1]), float(row[2])))
            except ValueError as exc:
                raise SchemaError(f"bad energy row: {exc}", line=lineno) from exc
    return records


def write_hist_csv(stats: GapStats, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_left", "bin_right", "count_factual", "count_counterfactual"])
        for i in range(len(stats.hist_factual)):
            writer.writerow(
                [repr(stats.bin_edges[i]), repr(stats.bin_edges[i + 1]),
                 stats.hist_factual[i], stats.hist_counterfactual[i]]
            )


def write_gap_json(stats: GapStats, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(stats.as_dict(), fh, ensure_ascii=False, indent=2)
        fh.write("\n")
