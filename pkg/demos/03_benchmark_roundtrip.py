"""Assemble a small balanced benchmark, answer it perfectly, and score it.

Shows the full loop: synthetic source catalog -> quota assembly -> manifest
on disk -> responses -> score report. The ground-truth responses must come
back at exactly 100 per task.
"""

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent / "tests"))
from conftest import build_synthetic_sources  # reuse the synthetic catalog builder

from geoscout.core import Difficulty
from geoscout.dataset import CompositionQuota, assemble, write_manifest_jsonl
from geoscout.rewards import format_gt_answer, gt_from_dict
from geoscout.scoring import score_responses
from geoscout.taskgen import EmbeddingIndex, ReferenceResolver, load_catalog

OUT = Path(__file__).parent / "output" / "benchmark"
OUT.mkdir(parents=True, exist_ok=True)

catalog_path, index_path = build_synthetic_sources(OUT / "sources", per_modality=24)
catalog = load_catalog(catalog_path)
refs = ReferenceResolver(catalog, index=EmbeddingIndex.load(index_path))

manifest = assemble(
    catalog,
    CompositionQuota(36),  # same 1:3:2 task split and modality balance as the full set
    Difficulty.HARD,
    mode_policy="direct",
    seed=0,
    out_dir=OUT,
    refs=refs,
)
write_manifest_jsonl(manifest, OUT / "manifest.jsonl")
print(f"assembled {len(manifest.records)} cases: {manifest.cell_counts()}")

# answer every case with its canonical ground-truth string
responses = [
    {"id": rec["id"], "output": format_gt_answer(gt_from_dict(rec["task"], rec["ground_truth"]))}
    for rec in manifest.records
]
report = score_responses(manifest, responses)
print("per-task scores (x100):", json.dumps(report.per_task, indent=None))
print("average:", report.avg, "parse failures:", report.parse_fail_rate)

# one wrong answer moves exactly one task mean
responses[0] = {"id": responses[0]["id"], "output": "order=[0,0,0,0]"}
report = score_responses(manifest, responses)
print("after breaking one response:", json.dumps(report.per_task))
