import numpy as np
import pytest

from cdpg import kernels
from cdpg.seq import Vocab

from conftest import random_policy

try:
    kernels.get_backend("compiled")
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False

needs_compiled = pytest.mark.skipif(not HAVE_COMPILED, reason="compiled kernels not built")


def _inputs(family, min_len, seed, batch=500):
    rng = np.random.default_rng(seed)
    v = Vocab(["A", "B", "C", "<eos>"])
    pol, contexts = random_policy(v, 5, family, rng, n_contexts=3, min_len=min_len, scale=2.0)
    chosen = [contexts[i] for i in rng.integers(0, 3, size=batch)]
    bases = pol.bases(chosen)
    uniforms = rng.random((batch, pol.space.max_len - 1))
    weights = rng.normal(size=batch)
    return pol, bases, uniforms, weights


class TestBackendSelection:
    def test_active_backend_is_named(self):
        assert kernels.BACKEND in ("compiled", "python")

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            kernels.get_backend("fortran")

    @needs_compiled
    def test_compiled_is_default_when_built(self):
        import os

        if os.environ.get("CDPG_PURE_PYTHON", "") in ("", "0"):
            assert kernels.BACKEND == "compiled"


@needs_compiled
@pytest.mark.parametrize("family", ["bigram", "prefix-tree"])
@pytest.mark.parametrize("min_len", [0, 2])
class TestParity:
    def test_sample_identical(self, family, min_len):
        pol, bases, uniforms, _ = _inputs(family, min_len, 1)
        args = pol._args()
        logits, code, K, max_len, mn = args
        py = kernels.get_backend("python").sample(logits, bases, code, K, max_len, mn, uniforms)
        cc = kernels.get_backend("compiled").sample(logits, bases, code, K, max_len, mn, uniforms)
        np.testing.assert_array_equal(py[0], cc[0])
        np.testing.assert_array_equal(py[1], cc[1])
        np.testing.assert_allclose(py[2], cc[2], rtol=0, atol=1e-12)

    def test_logprob_and_grad_agree(self, family, min_len):
        pol, bases, uniforms, weights = _inputs(family, min_len, 2)
        logits, code, K, max_len, mn = pol._args()
        py, cc = kernels.get_backend("python"), kernels.get_backend("compiled")
        tokens, nlen, logp = py.sample(logits, bases, code, K, max_len, mn, uniforms)
        common = (logits, bases, code, K, max_len, mn, tokens, nlen)
        np.testing.assert_allclose(py.logprob(*common), cc.logprob(*common), rtol=0, atol=1e-12)
        np.testing.assert_allclose(py.logprob(*common), logp, rtol=0, atol=1e-12)
        g_py, g_cc = np.zeros_like(logits), np.zeros_like(logits)
        py.accumulate_grad(*common, weights, g_py)
        cc.accumulate_grad(*common, weights, g_cc)
        assert np.abs(g_py).sum() > 0
        np.testing.assert_allclose(g_py, g_cc, rtol=0, atol=1e-10)
