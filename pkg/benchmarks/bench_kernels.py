"""Compiled vs pure-Python kernel timings.

    python benchmarks/bench_kernels.py [--repeat N]

Times the im2col/col2im pair behind direct convolution and the max-pool
forward/backward, on V-Net-sized tensors, under each available backend.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from vpx.engine import LayerSpec, backend, conv_backward, conv_forward, conv_method, maxpool_backward, maxpool_forward


def cases(rng):
    x = rng.standard_normal((4, 16, 16, 16, 20)).astype(np.float32)
    w = rng.standard_normal((16, 16, 3, 3, 3)).astype(np.float32)
    spec = LayerSpec.conv(16, 16, 3, rank=3)

    def conv():
        cache = {}
        y = conv_forward(x, spec, w, None, cache=cache)
        conv_backward(y, x, spec, w, cache)

    def pool():
        y, arg = maxpool_forward(x, 2)
        maxpool_backward(y, arg, x.shape)

    return {"conv3d 3x3x3 fwd+bwd (direct)": conv, "maxpool 2x2x2 fwd+bwd": pool}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if backend.compiled_available() else [])
    rng = np.random.default_rng(0)
    results = {}
    with conv_method("direct"):
        for which in backends:
            with backend.using(which):
                for label, fn in cases(rng).items():
                    fn()                                    # warm-up
                    t = min(timeit.repeat(fn, number=1, repeat=args.repeat))
                    results[(label, which)] = t
    print(f"{'kernel':<32} " + " ".join(f"{b:>10}" for b in backends) + ("    speed-up" if len(backends) > 1 else ""))
    for label in cases(rng):
        row = [results[(label, b)] for b in backends]
        line = f"{label:<32} " + " ".join(f"{1000 * t:>8.1f}ms" for t in row)
        if len(row) > 1:
            line += f"    {row[0] / row[1]:>6.2f}x"
        print(line)
    if len(backends) == 1:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`")


if __name__ == "__main__":
    main()
