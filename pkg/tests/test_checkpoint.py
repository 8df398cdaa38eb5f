import numpy as np
import pytest

from cdpg.checkpoint import CheckpointError, load_lambdas, load_policy, read_array, save_lambdas, save_policy, write_array
from cdpg.seq import Vocab

from conftest import random_policy


class TestPolicyCheckpoint:
    @pytest.mark.parametrize("family", ["bigram", "prefix-tree"])
    def test_round_trip_is_byte_identical(self, tmp_path, family, rng):
        v = Vocab(["N1", "D1", "E1", "<eos>"], entity_subset=["E1"], numeral_pairs={"N1": "D1"})
        pol, contexts = random_policy(v, 4, family, rng, min_len=1)
        a, b = tmp_path / "a.cdpg", tmp_path / "b.cdpg"
        save_policy(a, pol)
        loaded = load_policy(a)
        save_policy(b, loaded)
        assert a.read_bytes() == b.read_bytes()
        assert (tmp_path / "a.cdpg.json").read_text() == (tmp_path / "b.cdpg.json").read_text()
        np.testing.assert_array_equal(loaded.logits, pol.logits)
        assert loaded.family == pol.family
        for c in contexts:
            np.testing.assert_array_equal(loaded.log_probs_over_space(c), pol.log_probs_over_space(c))

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.cdpg"
        p.write_bytes(b"NOPE!" + bytes(10))
        with pytest.raises(CheckpointError):
            read_array(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "x.cdpg"
        write_array(p, "bigram", np.ones((2, 3)))
        p.write_bytes(p.read_bytes()[:-8])
        with pytest.raises(CheckpointError):
            read_array(p)

    def test_array_round_trip(self, tmp_path, rng):
        p = tmp_path / "x.bin"
        arr = rng.normal(size=(2, 3, 4))
        write_array(p, "tag", arr)
        tag, back = read_array(p)
        assert tag == "tag"
        np.testing.assert_array_equal(back, arr)


class TestLambdaCheckpoint:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "x.lambda"
        table = {3: 1.0986, 0: -0.5}
        save_lambdas(p, table)
        assert load_lambdas(p) == table

    def test_wrong_tag(self, tmp_path):
        p = tmp_path / "x.lambda"
        write_array(p, "bigram", np.ones(2))
        (tmp_path / "x.lambda.json").write_text('{"context_ids": [0, 1]}')
        with pytest.raises(CheckpointError):
            load_lambdas(p)
