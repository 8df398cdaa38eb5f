import csv
import json

import pytest

from cdpg.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, main
from cdpg.oracle import MetricsReport

from conftest import FIXTURES

TINY = str(FIXTURES / "digitize_tiny.ini")
FAST = ["--config", TINY, "--iterations", "4", "--set", "trainer.n_contexts=4", "--set", "trainer.m_samples=8", "--set", "run.metric_every=2"]


class TestTrain:
    def test_writes_outputs(self, tmp_path, capsys):
        assert main(["train", *FAST, "--out", str(tmp_path)]) == EXIT_OK
        for name in ("metrics.csv", "stats.csv", "zipf.csv", "config.echo", "report.json", "policy.cdpg"):
            assert (tmp_path / name).exists(), name
        assert "cdpg: 4 iterations" in capsys.readouterr().out

    def test_same_seed_identical(self, tmp_path):
        for d in ("a", "b"):
            assert main(["train", *FAST, "--seed", "7", "--out", str(tmp_path / d)]) == EXIT_OK
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()

    def test_scale_shrinks_iterations(self, tmp_path):
        assert main(["train", *FAST, "--scale", "0.5", "--out", str(tmp_path)]) == EXIT_OK
        assert json.loads((tmp_path / "report.json").read_text())["iterations"] == 2

    def test_env_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CDPG_OUT_DIR", str(tmp_path / "env"))
        assert main(["train", *FAST]) == EXIT_OK
        assert (tmp_path / "env" / "metrics.csv").exists()


class TestExitCodes:
    def test_bad_flag(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--frobnicate"])
        assert exc.value.code == EXIT_CONFIG

    @pytest.mark.parametrize(
        "argv",
        [
            ["train", "--config", "/nonexistent.ini"],
            ["train", "--set", "run.task=poetry"],
            ["train", "--set", "novalue"],
            ["sweep", "--grid", "trainer.alpha"],
            ["compare", "--algo", "cdpg"],
        ],
    )
    def test_config_errors(self, argv, tmp_path):
        assert main([*argv, "--out", str(tmp_path)]) == EXIT_CONFIG

    def test_missing_checkpoint_is_runtime(self, tmp_path):
        assert main(["eval", *FAST, "--out", str(tmp_path)]) == EXIT_RUNTIME

    def test_infeasible_is_runtime(self, tmp_path):
        argv = ["train", *FAST, "--set", "space.max_len=2", "--set", "task.ctx_len_min=3", "--set", "task.n_words=3", "--out", str(tmp_path)]
        assert main(argv) == EXIT_RUNTIME


class TestEvalAndOracle:
    def test_eval_reads_checkpoint(self, tmp_path, capsys):
        assert main(["train", *FAST, "--out", str(tmp_path)]) == EXIT_OK
        capsys.readouterr()
        assert main(["eval", *FAST, "--out", str(tmp_path)]) == EXIT_OK
        assert json.loads(capsys.readouterr().out)["iteration"] == 4
        assert (tmp_path / "eval.csv").exists()

    def test_oracle_trivial_constraint(self, capsys):
        assert main(["oracle", "--config", TINY, "--set", "ebm.scorer=constant"]) == EXIT_OK
        lines = [l for l in capsys.readouterr().out.splitlines() if "Z_c =" in l]
        assert len(lines) == 8
        assert all(l.endswith("Z_c = 1") for l in lines)

    def test_oracle_top_sequences(self, capsys):
        assert main(["oracle", "--config", TINY, "--top", "2", "--split", "test"]) == EXIT_OK
        out = capsys.readouterr().out
        assert "8 test contexts" in out and "E_c KL(pi, a) = 0" in out


class TestSweepCompare:
    def test_sweep(self, tmp_path):
        argv = ["sweep", *FAST, "--grid", "trainer.alpha=0.1,0.2", "--out", str(tmp_path)]
        assert main(argv) == EXIT_OK
        rows = list(csv.DictReader((tmp_path / "sweep.csv").open()))
        assert [r["trainer.alpha"] for r in rows] == ["0.1", "0.2"]
        assert (tmp_path / "alpha-0.2" / "metrics.csv").exists()

    def test_compare_shares_iteration_axis(self, tmp_path):
        assert main(["compare", *FAST, "--out", str(tmp_path)]) == EXIT_OK
        rows = list(csv.DictReader((tmp_path / "compare.csv").open()))
        assert list(rows[0]) == ["algorithm"] + MetricsReport.columns()
        by_algo = {}
        for r in rows:
            by_algo.setdefault(r["algorithm"], []).append(r["iteration"])
        assert sorted(by_algo) == ["cdpg", "dpg", "reinforce", "ziegler"]
        assert len({tuple(v) for v in by_algo.values()}) == 1
        assert by_algo["cdpg"] == ["0", "2", "4"]
