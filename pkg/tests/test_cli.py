"""Command-line surface: run artifacts, verify suites, report, answer check."""

import json
import os

import pytest

from voteloop.cli import main

BASE_ARGS = [
    "--corpus-n-train", "12",
    "--corpus-n-test", "4",
    "--k", "9",
    "--rounds", "2",
    "--eval-k", "5",
    "--seed", "3",
]


def run_cli(argv):
    return main([str(a) for a in argv])


class TestRun:
    def test_produces_artifact_set(self, tmp_path):
        out = tmp_path / "run"
        assert run_cli(["run", *BASE_ARGS, "--out-dir", out]) == 0
        for name in ("metrics.csv", "summary.json", "config.json", "tasks.jsonl", "labels.jsonl"):
            assert (out / name).exists(), name
        assert (out / "checkpoints" / "round_000.policy").exists()
        assert (out / "checkpoints" / "round_002.policy").exists()
        assert (out / "datasets" / "round_001.jsonl").exists()

    def test_same_config_gives_byte_identical_metrics(self, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert run_cli(["run", *BASE_ARGS, "--out-dir", out_a]) == 0
        assert run_cli(["run", *BASE_ARGS, "--out-dir", out_b]) == 0
        assert (out_a / "metrics.csv").read_bytes() == (out_b / "metrics.csv").read_bytes()
        assert (out_a / "summary.json").read_bytes() == (out_b / "summary.json").read_bytes()

    def test_config_file_with_cli_override(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"k": 7, "rounds": 1, "corpus_n_train": 10, "corpus_n_test": 4}))
        out = tmp_path / "run"
        assert run_cli(["run", "--config", cfg, "--rounds", "2", "--out-dir", out]) == 0
        echoed = json.loads((out / "config.json").read_text())
        assert echoed["k"] == 7  # from file
        assert echoed["rounds"] == 2  # CLI wins
        assert echoed["out_dir"] == str(out)

    def test_echoed_config_reproduces_run(self, tmp_path):
        out_a = tmp_path / "a"
        assert run_cli(["run", *BASE_ARGS, "--out-dir", out_a]) == 0
        echoed = json.loads((out_a / "config.json").read_text())
        echoed["out_dir"] = str(tmp_path / "b")
        cfg = tmp_path / "replay.json"
        cfg.write_text(json.dumps(echoed))
        assert run_cli(["run", "--config", cfg]) == 0
        assert (out_a / "metrics.csv").read_bytes() == (
            tmp_path / "b" / "metrics.csv"
        ).read_bytes()

    def test_unknown_config_key_is_rejected(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"rounds": 1, "turbo": True}))
        assert run_cli(["run", "--config", cfg, "--out-dir", tmp_path / "x"]) == 2

    def test_bad_config_value_is_usage_error(self, tmp_path):
        assert run_cli(["run", "--rounds", "0", "--out-dir", tmp_path / "x"]) == 2

    def test_out_root_env_var(self, tmp_path, monkeypatch):
        monkeypatch.setenv("VOTELOOP_OUT_ROOT", str(tmp_path))
        assert run_cli(["run", *BASE_ARGS, "--out-dir", "nested/run"]) == 0
        assert (tmp_path / "nested" / "run" / "metrics.csv").exists()


class TestVerify:
    @pytest.mark.parametrize(
        "suite, extra",
        [
            ("closedform", ["--count", "8"]),
            ("proposition1", ["--count", "8"]),
            ("gradients", ["--count", "5"]),
            ("answers", ["--count", "300", "--fuzz", "2000"]),
        ],
    )
    def test_suites_pass(self, suite, extra, capsys):
        assert run_cli(["verify", suite, *extra]) == 0
        out = capsys.readouterr().out
        assert "[pass]" in out

    def test_votes_suite(self, capsys):
        assert run_cli(["verify", "votes"]) == 0
        assert "counting oracle" in capsys.readouterr().out

    def test_jsonl_report_output(self, tmp_path, capsys):
        report = tmp_path / "prop1.jsonl"
        assert run_cli(["verify", "proposition1", "--count", "5", "--out", report]) == 0
        lines = [json.loads(ln) for ln in report.read_text().splitlines()]
        assert len(lines) == 5
        assert all({"suite", "instance", "pass", "beta", "distance"} <= set(rec) for rec in lines)

    def test_unknown_suite_is_usage_error(self):
        with pytest.raises(SystemExit) as err:
            run_cli(["verify", "nonsense"])
        assert err.value.code == 2


class TestReport:
    def test_reports_finished_run(self, tmp_path, capsys):
        out = tmp_path / "run"
        run_cli(["run", *BASE_ARGS, "--out-dir", out])
        capsys.readouterr()
        assert run_cli(["report", out]) == 0
        text = capsys.readouterr().out
        assert "best round" in text

    def test_missing_directory_is_exit_2(self, tmp_path):
        assert run_cli(["report", tmp_path / "empty"]) == 2


class TestAnswerCheck:
    def test_equivalent_pair_exits_zero(self, capsys):
        assert run_cli(["answer", "check", "0.5", "\\frac{1}{2}"]) == 0
        assert "equivalent" in capsys.readouterr().out

    def test_different_pair_exits_one(self, capsys):
        assert run_cli(["answer", "check", "x+1", "1+x"]) == 1
        assert "different" in capsys.readouterr().out
