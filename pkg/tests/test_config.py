import pytest

from cdpg.config import ExperimentConfig, load_config, parse_config, resolve_out_dir
from cdpg.errors import ConfigError

from conftest import FIXTURES


class TestParse:
    def test_defaults(self):
        cfg = parse_config("")
        assert cfg == ExperimentConfig()
        assert cfg.trainer.alpha == 0.1 and cfg.trainer.epsilon == 1e-6

    def test_typed_values(self):
        cfg = parse_config("[run]\nseed = 7\nscale = 0.5\n[ziegler]\nkl_target = 3\n[trainer]\nalgorithm = dpg\n")
        assert cfg.run.seed == 7 and cfg.run.scale == 0.5
        assert cfg.trainer.ziegler.kl_target == 3.0
        assert cfg.trainer.algorithm == "dpg"

    @pytest.mark.parametrize(
        "text",
        [
            "[nope]\nx = 1\n",
            "[run]\nwhatever = 1\n",
            "[run]\nseed = seven\n",
            "[trainer]\nseed = 3\n",
            "not an ini",
        ],
    )
    def test_rejected(self, text):
        with pytest.raises(ConfigError):
            parse_config(text)

    @pytest.mark.parametrize(
        "key, value",
        [
            ("run.task", "poetry"),
            ("run.scale", "0"),
            ("run.eval_split", "dev"),
            ("policy.family", "lstm"),
            ("ebm.form", "mixture"),
            ("space.min_len", "9"),
            ("trainer.algorithm", "ppo"),
        ],
    )
    def test_validate(self, key, value):
        cfg = ExperimentConfig()
        cfg.set(key, value)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")


class TestEcho:
    @pytest.mark.parametrize("path", sorted(FIXTURES.glob("*.ini")), ids=lambda p: p.stem)
    def test_round_trip(self, path):
        cfg = load_config(path)
        again = parse_config(cfg.echo())
        assert again == cfg
        assert again.digest() == cfg.digest()

    def test_digest_tracks_changes(self):
        a, b = ExperimentConfig(), ExperimentConfig()
        b.set("trainer.alpha", "0.2")
        assert a.digest() != b.digest()


class TestScale:
    def test_scale_multiplies_counts(self):
        cfg = parse_config("[run]\nscale = 0.25\niterations = 100\nn_train = 8\nn_test = 2\n")
        assert (cfg.iterations, cfg.n_train, cfg.n_test) == (25, 2, 1)

    def test_trainer_config_takes_run_seed(self):
        cfg = parse_config("[run]\nseed = 9\niterations = 4\n")
        t = cfg.trainer_config()
        assert (t.seed, t.iterations) == (9, 4)


class TestOutDir:
    def test_precedence(self, monkeypatch):
        cfg = ExperimentConfig()
        monkeypatch.delenv("CDPG_OUT_DIR", raising=False)
        assert resolve_out_dir(cfg) == cfg.run.out
        monkeypatch.setenv("CDPG_OUT_DIR", "/tmp/env")
        assert resolve_out_dir(cfg) == "/tmp/env"
        assert resolve_out_dir(cfg, "/tmp/flag") == "/tmp/flag"
