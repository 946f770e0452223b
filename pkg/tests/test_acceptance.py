"""Acceptance criteria, one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; every tolerance and runtime budget is asserted, not just printed.
"""

import json
import math
import random
import time

import httpx
import numpy as np
import pytest

from geoscout.cli import main
from geoscout.core import BBox, GridSpec, Modality, bbox_iou, derive_seed
from geoscout.dataset import ground_truth_of, read_manifest_jsonl, render_gt_answer
from geoscout.grpo import (
    GrpoConfig,
    make_env,
    run_experiment,
    softmax,
    surrogate_grad,
    surrogate_value,
)
from geoscout.imaging import center_crop_to_grid
from geoscout.rewards import (
    AnomGT,
    TopoGT,
    gt_from_dict,
    total_reward,
)
from geoscout.scoring import EnergyRecord, energy_gap
from geoscout.taskgen import (
    AnomalyTaskSpec,
    ScaleTaskSpec,
    SourceRecord,
    gen_anomaly_task,
    gen_jigsaw_task,
    gen_scale_task,
    reconstruct_jigsaw,
)

from conftest import build_synthetic_sources, random_image
from oracles import JitteredGrid, sample_box


def _report(name: str, detail: str = ""):
    print(f"[ACCEPTANCE] {name}: PASS {detail}".rstrip())


@pytest.fixture(scope="module")
def benchmark_sources(tmp_path_factory):
    """Catalog large enough for the 10,800-case benchmark build."""
    root = tmp_path_factory.mktemp("bench_sources")
    return build_synthetic_sources(
        root, per_modality=1900, image_size=32, slices_per_series=8, textures=64
    )


class TestRewardCeiling:
    def test_canonical_answers_hit_the_ceiling(self):
        started = time.monotonic()
        n_per_kind = 1000
        rec = SourceRecord("src", Modality.CT, "p", "s", 1)
        for i in range(n_per_kind):
            img = random_image(10_000 + i, 48 + i % 17, 48 + (i * 3) % 23)
            ref = random_image(50_000 + i, 48 + i % 17, 48 + (i * 3) % 23)
            tasks = [
                gen_scale_task(
                    img, ScaleTaskSpec(num_patches=1 + i % 3, resize_target=(16, 16)), seed=i
                ),
                gen_jigsaw_task(img, GridSpec(2, 2), seed=i),
                gen_anomaly_task(
                    img, rec, AnomalyTaskSpec(), lambda r: ("ref", ref), seed=i
                ),
            ]
            for task in tasks:
                gt = ground_truth_of(task)
                direct = total_reward(render_gt_answer(task, "direct"), gt, "direct")
                reasoning = total_reward(render_gt_answer(task, "reasoning"), gt, "reasoning")
                assert direct.r_total == 1.5, f"direct ceiling broken at case {i}"
                assert reasoning.r_total == 2.0, f"reasoning ceiling broken at case {i}"
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"reward ceiling run took {elapsed:.1f}s"
        _report(
            "reward ceiling",
            f"(3x{n_per_kind} tasks, direct=1.5 reasoning=2.0 exactly, {elapsed:.1f}s)",
        )


class TestFormulaFixtures:
    def test_topo_two_of_four_slots(self):
        bd = total_reward("order=[2,0,1,3]", TopoGT((2, 0, 3, 1)), "direct")
        assert bd.r_acc == 0.5
        _report("slot-accuracy fixture", "(2 of 4 slots -> 0.5 exactly)")

    def test_anomaly_adjacent_cell_exp_minus_ten(self):
        bd = total_reward("index=6", AnomGT(5, GridSpec(4, 4)), "direct")
        assert bd.r_acc == pytest.approx(math.exp(-10.0), rel=5e-16, abs=0.0)
        _report("distance-decay fixture", f"(adjacent cell -> {bd.r_acc!r}, 1 ulp)")

    def test_format_two_of_three_items(self):
        bd = total_reward("order=[2,0,x]", TopoGT((2, 0, 1)), "direct")
        assert bd.r_fmt == pytest.approx(1 / 3, rel=5e-16, abs=0.0)
        _report("format fixture", "(2 of 3 items -> 1/3, 1 ulp)")


class TestGeneratorRoundTrips:
    def test_round_trips(self):
        started = time.monotonic()

        # jigsaw: bit-exact inverse reconstruction, 500 images per grid
        for grid in (GridSpec(1, 2), GridSpec(1, 4), GridSpec(2, 2)):
            for i in range(500):
                img = random_image(i, 48 + i % 37, 48 + (i * 7) % 53)
                task = gen_jigsaw_task(img, grid, seed=derive_seed(1, f"j{i}", "topo", i))
                assert reconstruct_jigsaw(task) == center_crop_to_grid(img, grid)

        # anomaly: changed pixels confined to patch k* plus its seam band
        spec = AnomalyTaskSpec()
        rec = SourceRecord("src", Modality.MRI, "p", "s", 1)
        for i in range(500):
            h, w = 64 + i % 41, 64 + (i * 3) % 59
            img = random_image(100_000 + i, h, w)
            ref = random_image(200_000 + i, h, w)
            task = gen_anomaly_task(img, rec, spec, lambda r: ("ref", ref), seed=i)
            target = center_crop_to_grid(img, spec.grid)
            diff = np.argwhere(target.pixels != task.corrupted.pixels)
            assert diff.size > 0
            ph, pw = target.height // 4, target.width // 4
            u, v = task.k_star // 4, task.k_star % 4
            d = spec.boundary_width
            assert np.all((diff[:, 0] >= u * ph - d) & (diff[:, 0] < (u + 1) * ph + d))
            assert np.all((diff[:, 1] >= v * pw - d) & (diff[:, 1] < (v + 1) * pw + d))

        # scale: ROI containment exact, area ratio within 5e-3 relative
        rng = np.random.default_rng(404)
        spec_s = ScaleTaskSpec(resize_target=(16, 16))
        for i in range(500):
            h = int(rng.integers(1700, 2049))
            w = int(rng.integers(1700, 2049))
            img = random_image(300_000 + i, h, w)
            task = gen_scale_task(img, spec_s, seed=i)
            for box, level in zip(task.boxes, task.levels):
                assert 0.2 <= box.x1 < box.x2 <= 0.8
                assert 0.2 <= box.y1 < box.y2 <= 0.8
                ratio = (0.20, 0.0625)[level - 1]
                assert abs(box.area - ratio) / ratio < 5e-3

        elapsed = time.monotonic() - started
        assert elapsed < 120.0, f"generator round-trips took {elapsed:.1f}s"
        _report("generator round-trips", f"(3x500 jigsaw + 500 anomaly + 500 scale, {elapsed:.1f}s)")


class TestBenchmarkComposition:
    def _counts(self, manifest_path):
        manifest = read_manifest_jsonl(manifest_path)
        by_task = {"scale": 0, "topo": 0, "anom": 0}
        by_modality = {"ct": 0, "mri": 0, "xray": 0}
        for r in manifest.records:
            by_task[r["task"]] += 1
            by_modality[r["modality"]] += 1
        return by_task, by_modality

    def test_full_benchmark_10800(self, benchmark_sources, tmp_path):
        catalog, index = benchmark_sources
        out = tmp_path / "bench10800"
        rc = main(
            ["gen", "--catalog", str(catalog), "--index", str(index), "--out", str(out),
             "--total", "10800", "--seed", "0", "--jobs", "8"]
        )
        assert rc == 0
        by_task, by_modality = self._counts(out / "manifest.jsonl")
        assert by_task == {"scale": 1800, "topo": 5400, "anom": 3600}
        assert by_modality == {"ct": 3600, "mri": 3600, "xray": 3600}
        _report("benchmark composition 10800", "(1800/5400/3600 tasks, 3600 per modality)")

    def test_desk_check_108(self, benchmark_sources, tmp_path):
        catalog, index = benchmark_sources
        out = tmp_path / "bench108"
        rc = main(
            ["gen", "--catalog", str(catalog), "--index", str(index), "--out", str(out),
             "--total", "108", "--seed", "0"]
        )
        assert rc == 0
        by_task, _ = self._counts(out / "manifest.jsonl")
        assert by_task == {"scale": 18, "topo": 54, "anom": 36}
        _report("benchmark composition 108", "(18/54/36 tasks)")


class TestIoUOracle:
    def test_ten_thousand_pairs_against_monte_carlo(self):
        grid = JitteredGrid(2000, np.random.default_rng(555))  # 4e6 uniform points
        rng = np.random.default_rng(556)
        worst = 0.0
        for _ in range(10_000):
            a, b = sample_box(rng), sample_box(rng)
            err = abs(bbox_iou(BBox(*a), BBox(*b)) - grid.iou_estimate(a, b))
            worst = max(worst, err)
        assert worst < 2e-3, f"worst MC deviation {worst:.2e}"
        _report("IoU Monte-Carlo oracle", f"(1e4 pairs, worst |err| = {worst:.1e} < 2e-3)")


class TestGrpoSimulator:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        h = 1e-5
        worst = 0.0
        for _ in range(100):
            while True:
                logits = rng.normal(size=5)
                old_probs = softmax(logits + rng.normal(scale=0.3, size=5))
                actions = rng.integers(0, 5, size=8)
                advantages = rng.normal(size=8)
                rho = softmax(logits)[actions] / old_probs[actions]
                if np.all(np.abs(rho - 0.8) > 1e-3) and np.all(np.abs(rho - 1.2) > 1e-3):
                    break
            ref = rng.normal(size=5)
            grad = surrogate_grad(logits, ref, old_probs, actions, advantages, 0.2, 0.04)
            fd = np.zeros(5)
            for k in range(5):
                up, dn = logits.copy(), logits.copy()
                up[k] += h
                dn[k] -= h
                fd[k] = (
                    surrogate_value(up, ref, old_probs, actions, advantages, 0.2, 0.04)
                    - surrogate_value(dn, ref, old_probs, actions, advantages, 0.2, 0.04)
                ) / (2 * h)
            rel = float(np.linalg.norm(grad - fd) / max(1.0, np.linalg.norm(fd)))
            worst = max(worst, rel)
        assert worst < 1e-6
        _report("GRPO gradient vs finite differences", f"(100 instances, worst rel {worst:.1e})")

    def test_dense_reaches_threshold_no_later_than_sparse(self):
        started = time.monotonic()
        envs = {mode: make_env("anom4x4", mode) for mode in ("dense", "sparse")}
        cfg = GrpoConfig()  # G=8, beta=0.04, clip 0.2, lr 0.1, 4000 steps
        result = run_experiment(envs, cfg, seeds=list(range(20)))
        dense = result.summary["modes"]["dense"]["median_steps_to_threshold"]
        sparse = result.summary["modes"]["sparse"]["median_steps_to_threshold"]
        elapsed = time.monotonic() - started
        assert math.isfinite(dense) and math.isfinite(sparse)
        assert dense <= sparse, f"dense={dense} sparse={sparse}"
        assert elapsed < 300.0, f"simulator run took {elapsed:.1f}s"
        _report(
            "GRPO dense vs sparse",
            f"(anom4x4 median steps: dense={dense} <= sparse={sparse}, {elapsed:.0f}s)",
        )


class TestEnergyGap:
    def test_reproduces_reported_gaps(self):
        baseline = energy_gap([EnergyRecord(f"b{i}", 1.0, 1.06) for i in range(800)])
        aligned = energy_gap([EnergyRecord(f"a{i}", 1.0, 1.69) for i in range(800)])
        assert baseline.gap == pytest.approx(0.06, abs=1e-12)
        assert aligned.gap == pytest.approx(0.69, abs=1e-12)
        assert aligned.separation_rate == 1.0
        _report("energy gaps", "(0.06 and 0.69 reproduced exactly)")

    def test_translation_equivariance(self):
        rng = np.random.default_rng(88)
        f = rng.uniform(0.2, 4.0, size=800)
        c = rng.uniform(0.2, 4.0, size=800)
        base = energy_gap([EnergyRecord(str(i), f[i], c[i]) for i in range(800)])
        for shift in (0.1, 0.69, 2.5):
            moved = energy_gap(
                [EnergyRecord(str(i), f[i], c[i] + shift) for i in range(800)]
            )
            assert moved.gap - base.gap == pytest.approx(shift, abs=1e-12)
        _report("energy translation equivariance", "(within 1e-12)")


def _random_service_item(rng: random.Random) -> dict:
    kind = rng.choice(["scale", "topo", "anom"])
    mode = rng.choice(["direct", "reasoning"])
    if kind == "topo":
        n = rng.choice([2, 4])
        order = list(range(n))
        rng.shuffle(order)
        guess = [rng.randrange(-1, n + 1) for _ in range(n)]
        body = f"order=[{','.join(map(str, guess))}]"
        gt = {"order": order}
    elif kind == "anom":
        rows, cols = rng.choice([(4, 4), (2, 2), (4, 2)])
        gt = {"index": rng.randrange(rows * cols), "grid": [rows, cols]}
        body = rng.choice(
            [f"index={rng.randrange(-2, rows * cols + 3)}", "noise", "index=abc"]
        )
    else:
        n = rng.choice([1, 3])
        levels, boxes, lines = [], [], []
        for i in range(n):
            x1, y1 = rng.uniform(0, 0.45), rng.uniform(0, 0.45)
            side = rng.uniform(0.05, 0.5)
            boxes.append([x1, y1, min(1.0, x1 + side), min(1.0, y1 + side)])
            levels.append(rng.choice([1, 2]))
            lines.append(
                f"patch {i + 1}: level={rng.choice([1, 2, 7])} "
                f"box=[{rng.uniform(0, 1):.3f},{y1:.3f},{x1 + side:.3f},{y1 + side:.3f}]"
            )
        gt = {"levels": levels, "boxes": boxes}
        body = "\n".join(lines)
    if mode == "reasoning" and rng.random() < 0.6:
        body = f"<think>check</think><answer>{body}</answer>"
    return {"task": kind, "mode": mode, "output": body, "ground_truth": gt}


class TestServiceDifferential:
    def test_ten_thousand_items_bit_for_bit(self, reward_server):
        rng = random.Random(99)
        items = [_random_service_item(rng) for _ in range(10_000)]
        via_http = []
        for lo in range(0, len(items), 1000):
            batch = items[lo : lo + 1000]
            r = httpx.post(reward_server + "/v1/reward", json={"items": batch}, timeout=60.0)
            assert r.status_code == 200
            via_http.extend(r.json()["rewards"])
        assert len(via_http) == len(items)
        for item, got in zip(items, via_http):
            gt = gt_from_dict(item["task"], item["ground_truth"])
            want = total_reward(item["output"], gt, item["mode"]).as_dict()
            assert got == want  # bit-for-bit through JSON
        _report("service/library differential", "(1e4 items identical over HTTP)")

    def test_oversize_batch_rejected(self, reward_server):
        item = {
            "task": "topo", "mode": "direct", "output": "order=[1,0]",
            "ground_truth": {"order": [1, 0]},
        }
        r = httpx.post(
            reward_server + "/v1/reward", json={"items": [item] * 1025}, timeout=60.0
        )
        assert r.status_code == 413
        _report("service batch limit", "(1025 items -> 413)")
