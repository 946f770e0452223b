"""Command-line contract: flags, exit codes, determinism, outputs."""

import json

import pytest

from geoscout.cli import build_parser, main
from geoscout.dataset import read_manifest_jsonl


def _gen(catalog, index, out, total=18, extra=()):
    return main(
        [
            "gen",
            "--catalog", str(catalog),
            "--index", str(index),
            "--out", str(out),
            "--total", str(total),
            "--seed", "3",
            "--jobs", "2",
            *extra,
        ]
    )


class TestGen:
    def test_desk_scale_split(self, synthetic_sources, tmp_path, capsys):
        catalog, index = synthetic_sources
        out = tmp_path / "bench"
        assert _gen(catalog, index, out, total=108) == 0
        manifest = read_manifest_jsonl(out / "manifest.jsonl")
        by_task = {"scale": 0, "topo": 0, "anom": 0}
        by_modality = {"ct": 0, "mri": 0, "xray": 0}
        for rec in manifest.records:
            by_task[rec["task"]] += 1
            by_modality[rec["modality"]] += 1
        assert by_task == {"scale": 18, "topo": 54, "anom": 36}
        assert by_modality == {"ct": 36, "mri": 36, "xray": 36}

    def test_deterministic_manifest_bytes(self, synthetic_sources, tmp_path):
        catalog, index = synthetic_sources
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert _gen(catalog, index, out1) == 0
        assert _gen(catalog, index, out2) == 0
        b1 = (out1 / "manifest.jsonl").read_bytes()
        b2 = (out2 / "manifest.jsonl").read_bytes()
        assert b1 == b2

    def test_missing_catalog_exit_2_names_path(self, tmp_path, capsys):
        rc = main(["gen", "--catalog", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "o")])
        assert rc == 2
        assert "nope.jsonl" in capsys.readouterr().err

    def test_insufficient_sources_exit_3(self, synthetic_sources, tmp_path):
        catalog, index = synthetic_sources
        rc = _gen(catalog, index, tmp_path / "big", total=18000)
        assert rc == 3

    def test_config_file_layering(self, synthetic_sources, tmp_path):
        catalog, index = synthetic_sources
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"total": 36, "difficulty": "easy", "seed": 9}))
        out = tmp_path / "cfgout"
        # flags win over the file: total stays 18 from the flag, difficulty from file
        rc = _gen(catalog, index, out, total=18, extra=("--config", str(cfg)))
        assert rc == 0
        manifest = read_manifest_jsonl(out / "manifest.jsonl")
        assert manifest.total == 18
        assert manifest.difficulty == "easy"
        assert manifest.seed == 3  # flag wins over file

    def test_unknown_config_key_exit_2(self, synthetic_sources, tmp_path):
        catalog, index = synthetic_sources
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"bogus": 1}))
        rc = _gen(catalog, index, tmp_path / "o", extra=("--config", str(cfg)))
        assert rc == 2


class TestScore:
    @pytest.fixture()
    def bench(self, synthetic_sources, tmp_path):
        catalog, index = synthetic_sources
        out = tmp_path / "bench"
        assert _gen(catalog, index, out, total=18) == 0
        return out

    def _gt_responses(self, manifest_path):
        from geoscout.dataset import read_manifest_jsonl
        from geoscout.rewards import format_gt_answer, gt_from_dict

        manifest = read_manifest_jsonl(manifest_path)
        lines = []
        for rec in manifest.records:
            body = format_gt_answer(gt_from_dict(rec["task"], rec["ground_truth"]))
            if rec["mode"] == "reasoning":
                body = f"<think>ok</think><answer>{body}</answer>"
            lines.append({"id": rec["id"], "output": body})
        return lines

    def test_gt_responses_print_hundreds(self, bench, tmp_path, capsys):
        responses = tmp_path / "resp.jsonl"
        responses.write_text(
            "\n".join(json.dumps(r) for r in self._gt_responses(bench / "manifest.jsonl")) + "\n"
        )
        rc = main(
            ["score", "--manifest", str(bench / "manifest.jsonl"),
             "--responses", str(responses), "--report", str(tmp_path / "rep")]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "scale=100.0 topo=100.0 anom=100.0" in out
        report = json.loads((tmp_path / "rep" / "report.json").read_text())
        assert report["avg"] == 100.0
        assert (tmp_path / "rep" / "cases.csv").exists()

    def test_duplicate_id_exit_4(self, bench, tmp_path):
        rows = self._gt_responses(bench / "manifest.jsonl")
        rows.append(rows[0])
        responses = tmp_path / "resp.jsonl"
        responses.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        rc = main(
            ["score", "--manifest", str(bench / "manifest.jsonl"),
             "--responses", str(responses), "--report", str(tmp_path / "rep")]
        )
        assert rc == 4

    def test_strict_missing_exit_4(self, bench, tmp_path):
        responses = tmp_path / "resp.jsonl"
        responses.write_text("")
        rc = main(
            ["score", "--manifest", str(bench / "manifest.jsonl"),
             "--responses", str(responses), "--report", str(tmp_path / "rep"),
             "--missing", "strict"]
        )
        assert rc == 4


class TestSimulate:
    def test_summary_has_two_medians(self, tmp_path, capsys):
        rc = main(
            ["simulate", "--env", "jigsaw1x2", "--reward", "both", "--seeds", "10",
             "--steps", "40", "--out", str(tmp_path / "sim")]
        )
        assert rc == 0
        summary = json.loads((tmp_path / "sim" / "summary.json").read_text())
        assert set(summary["modes"]) == {"dense", "sparse"}
        curves = (tmp_path / "sim" / "curves.csv").read_text().splitlines()
        assert curves[0] == "seed,step,mode,mean_reward,kl"
        assert len(curves) == 1 + 2 * 10 * 41

    def test_zero_steps_only_step_zero(self, tmp_path):
        rc = main(
            ["simulate", "--env", "jigsaw1x2", "--reward", "dense", "--seeds", "10",
             "--steps", "0", "--out", str(tmp_path / "sim")]
        )
        assert rc == 0
        rows = (tmp_path / "sim" / "curves.csv").read_text().splitlines()[1:]
        assert all(row.split(",")[1] == "0" for row in rows)

    def test_unknown_env_exit_2(self, tmp_path, capsys):
        rc = main(["simulate", "--env", "cube3x3", "--out", str(tmp_path / "sim")])
        assert rc == 2
        assert "cube3x3" in capsys.readouterr().err

    def test_fixed_seed_reproduces_curves(self, tmp_path):
        for name in ("s1", "s2"):
            main(
                ["simulate", "--env", "anom2x2", "--reward", "dense", "--seeds", "10",
                 "--steps", "25", "--out", str(tmp_path / name)]
            )
        assert (tmp_path / "s1" / "curves.csv").read_bytes() == (
            tmp_path / "s2" / "curves.csv"
        ).read_bytes()


class TestEnergy:
    def test_aligned_gap(self, tmp_path, capsys):
        pairs = tmp_path / "pairs.csv"
        pairs.write_text(
            "pair_id,nll_factual,nll_counterfactual\n"
            + "\n".join(f"p{i},1.0,1.69" for i in range(50))
            + "\n"
        )
        rc = main(["energy", "--pairs", str(pairs), "--out", str(tmp_path / "en")])
        assert rc == 0
        gap = json.loads((tmp_path / "en" / "gap.json").read_text())
        assert abs(gap["gap"] - 0.69) < 1e-12
        assert gap["separation_rate"] == 1.0
        assert (tmp_path / "en" / "hist.csv").exists()

    def test_identical_columns_zero_gap(self, tmp_path):
        pairs = tmp_path / "pairs.csv"
        pairs.write_text("\n".join(f"p{i},2.0,2.0" for i in range(10)) + "\n")
        rc = main(["energy", "--pairs", str(pairs), "--out", str(tmp_path / "en")])
        assert rc == 0
        gap = json.loads((tmp_path / "en" / "gap.json").read_text())
        assert gap["gap"] == 0.0 and gap["separation_rate"] == 0.0

    def test_shuffled_rows_identical_output(self, tmp_path):
        rows = [f"p{i},{1.0 + i / 40},{1.4 + i / 30}" for i in range(30)]
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_text("\n".join(rows) + "\n")
        b.write_text("\n".join(reversed(rows)) + "\n")
        main(["energy", "--pairs", str(a), "--out", str(tmp_path / "ea")])
        main(["energy", "--pairs", str(b), "--out", str(tmp_path / "eb")])
        assert (tmp_path / "ea" / "gap.json").read_bytes() == (
            tmp_path / "eb" / "gap.json"
        ).read_bytes()
        assert (tmp_path / "ea" / "hist.csv").read_bytes() == (
            tmp_path / "eb" / "hist.csv"
        ).read_bytes()

    def test_malformed_csv_exit_2(self, tmp_path, capsys):
        pairs = tmp_path / "pairs.csv"
        pairs.write_text("p1,1.0\n")
        rc = main(["energy", "--pairs", str(pairs), "--out", str(tmp_path / "en")])
        assert rc == 2


class TestHelp:
    def test_every_flag_documented(self, capsys):
        parser = build_parser()
        flags = {
            "gen": ["--catalog", "--out", "--total", "--difficulty", "--mode", "--seed",
                    "--index", "--ref-offset", "--jobs", "--config"],
            "score": ["--manifest", "--responses", "--report", "--missing", "--jobs"],
            "serve": ["--port", "--host", "--max-batch", "--tau", "--scale-mix"],
            "simulate": ["--env", "--reward", "--seeds", "--steps", "--group-size",
                         "--kl-coeff", "--clip-ratio", "--lr", "--out"],
            "energy": ["--pairs", "--out", "--bin-width"],
        }
        for command, expected in flags.items():
            with pytest.raises(SystemExit):
                parser.parse_args([command, "--help"])
            text = capsys.readouterr().out
            for flag in expected:
                assert flag in text, f"{command} --help missing {flag}"

    def test_unknown_flag_rejected(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["gen", "--catalog", "c", "--out", "o", "--bogus"])
        assert exc.value.code == 2
