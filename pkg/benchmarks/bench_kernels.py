"""Time the numba and numpy kernel paths at training-batch shapes.

    python benchmarks/bench_kernels.py [--repeat N] [--batch B]

Prints one row per kernel plus a full forward+backward step for each
backend. The step timing runs in a subprocess so the backend flag
(HEADERQ_DISABLE_NUMBA) is read fresh at import.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from headerq.nn import _kernels

STEP = r"""
import json, sys, timeit
import numpy as np
from headerq.features import build_vocabs, encode_records
from headerq.corpus import GenConfig, generate_corpus
from headerq.model import ModelConfig, backward, build_model, forward_logits
from headerq import nn
recs = generate_corpus(GenConfig(n_messages={batch}, seed=0))
v = build_vocabs(recs)
m = build_model(ModelConfig(), v, seed=0)
x = encode_records(recs, v)
y = x.labels.astype(float)
rng = np.random.default_rng(0)
def step():
    logits, cache = forward_logits(m.params, m.config, x, train=True, rng=rng)
    _, g = nn.bce_loss(logits, y)
    backward(m.params, m.config, cache, g / len(y))
step()
best = min(timeit.repeat(step, number=1, repeat={repeat}))
print(json.dumps({{"backend": nn.BACKEND, "seconds": best}}))
"""


def _best(fn, repeat):
    fn()  # warm-up / JIT
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def kernel_rows(batch, repeat):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(batch, 64, 16))
    h = rng.normal(size=(batch, 58, 64))
    cols = rng.normal(size=(batch, 58, 7 * 16))
    ids = rng.integers(0, 71, size=(batch, 64))
    dout = rng.normal(size=(batch, 64, 16))
    cases = {
        "unfold k=7": lambda k: k["unfold"](x, 7),
        "fold_add k=7": lambda k: k["fold_add"](cols, 7, 64),
        "maxpool_fwd 3/3": lambda k: k["maxpool_fwd"](h, 3, 3),
        "maxpool_bwd 3/3": None,
        "embed_bwd V=71": lambda k: k["embed_bwd"](ids, dout, 71),
    }
    rows = []
    for name, fn in cases.items():
        times = {}
        for label, ks in (("numpy", _kernels.NUMPY_KERNELS), ("numba", _kernels.NUMBA_KERNELS)):
            if ks is None:
                times[label] = float("nan")
                continue
            if fn is None:
                out, idx = ks["maxpool_fwd"](h, 3, 3)
                d = rng.normal(size=out.shape)
                times[label] = _best(lambda: ks["maxpool_bwd"](d, idx, 58), repeat)
            else:
                times[label] = _best(lambda: fn(ks), repeat)
        rows.append((name, times["numpy"], times["numba"]))
    return rows


def step_time(disable_numba, batch, repeat):
    env = dict(os.environ)
    env["HEADERQ_DISABLE_NUMBA"] = "1" if disable_numba else "0"
    out = subprocess.run(
        [sys.executable, "-c", STEP.format(batch=batch, repeat=repeat)],
        env=env, capture_output=True, text=True, check=True,
    )
    return json.loads(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--batch", type=int, default=128)
    args = ap.parse_args()
    if not _kernels.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    print(f"batch={args.batch} repeat={args.repeat} (best of, milliseconds)")
    print(f"{'kernel':<18}{'numpy':>10}{'numba':>10}{'speedup':>9}")
    for name, t_np, t_nb in kernel_rows(args.batch, args.repeat):
        print(f"{name:<18}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>8.1f}x")
    a = step_time(True, args.batch, max(3, args.repeat // 4))
    b = step_time(False, args.batch, max(3, args.repeat // 4))
    print(f"{'train step':<18}{a['seconds'] * 1e3:>10.3f}{b['seconds'] * 1e3:>10.3f}"
          f"{a['seconds'] / b['seconds']:>8.1f}x")


if __name__ == "__main__":
    main()
