"""Time the compiled policy kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --batch 2048 --repeat 20

Both backends are run on identical inputs; the script checks that they agree
before reporting timings.
"""

import argparse
import timeit

import numpy as np

from cdpg import kernels
from cdpg.seq import BigramPolicy, Context, ContextFeaturizer, PrefixTreePolicy, SequenceSpace, Vocab


def make_policy(family, n_tokens, max_len, rows, seed):
    vocab = Vocab([f"T{i}" for i in range(n_tokens)] + ["<eos>"])
    space = SequenceSpace(vocab, max_len)
    contexts = [Context((i % n_tokens,), i) for i in range(rows)]
    feat = ContextFeaturizer.build("by-id", vocab, contexts)
    cls = BigramPolicy if family == "bigram" else PrefixTreePolicy
    policy = cls(space, feat)
    policy.apply_update(np.random.default_rng(seed).normal(size=policy.params.size))
    return policy, contexts


def run(family, args):
    policy, contexts = make_policy(family, args.tokens, args.max_len, args.rows, args.seed)
    rng = np.random.default_rng(args.seed)
    chosen = [contexts[i] for i in rng.integers(0, len(contexts), size=args.batch)]
    bases = policy.bases(chosen)
    space = policy.space
    uniforms = rng.random((args.batch, max(space.max_len - 1, 0)))
    logits2d, code, K, max_len, min_len = policy._args()
    weights = rng.normal(size=args.batch)
    grad = np.zeros_like(logits2d)
    common = (logits2d, bases, code, K, max_len, min_len)

    results = {}
    for name in ("python", "compiled"):
        mod = kernels.get_backend(name)
        tokens, nlen, logp = mod.sample(*common, uniforms)
        results[name] = (tokens, nlen, logp, mod.logprob(*common, tokens, nlen))
        timings = {
            "sample": lambda: mod.sample(*common, uniforms),
            "logprob": lambda: mod.logprob(*common, tokens, nlen),
            "accumulate_grad": lambda: mod.accumulate_grad(*common, tokens, nlen, weights, grad),
        }
        for op, fn in timings.items():
            best = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            results[(name, op)] = best

    py, cc = results["python"], results["compiled"]
    assert np.array_equal(py[0], cc[0]) and np.array_equal(py[1], cc[1]), "backends sampled different sequences"
    assert np.allclose(py[3], cc[3], rtol=0, atol=1e-12), "backends disagree on log-probabilities"

    print(f"\n{family}: batch={args.batch} K={args.tokens} max_len={args.max_len} rows={args.rows}")
    print(f"{'kernel':<16}{'python ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for op in ("sample", "logprob", "accumulate_grad"):
        p, c = results[("python", op)] * 1e3, results[("compiled", op)] * 1e3
        print(f"{op:<16}{p:>12.3f}{c:>14.3f}{p / c:>9.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--batch", type=int, default=2048)
    parser.add_argument("--tokens", type=int, default=6)
    parser.add_argument("--max-len", type=int, default=6)
    parser.add_argument("--rows", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--family", choices=("bigram", "prefix-tree", "both"), default="both")
    args = parser.parse_args()
    try:
        kernels.get_backend("compiled")
    except ImportError:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    for family in ("bigram", "prefix-tree") if args.family == "both" else (args.family,):
        run(family, args)


if __name__ == "__main__":
    main()
