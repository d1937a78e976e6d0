"""Compare the compiled and plain-numpy kernel backends.

Times the two hot kernels (edge-weight cosines and GCN aggregation,
forward and backward) across graph sizes, then a full alternating
training step on a small synthetic batch. Run directly:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --sizes 8,32,128 --repeats 20
"""

import argparse
import time

import numpy as np

from breaknet import backend
from breaknet.data import SyntheticSpec, generate_synthetic
from breaknet.trainer import (
    TrainConfig,
    build_vectorizers,
    init_params,
    inner_step,
    outer_step,
    prepare_articles,
)


def median_time(func, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def kernel_cases(n, d, rng):
    x = rng.normal(size=(n, d))
    r = rng.normal(size=(n, d))
    w = rng.uniform(0.0, 1.0, size=(n, n))
    np.fill_diagonal(w, 0.0)
    h = rng.normal(size=(n, d))
    d_w = rng.normal(size=(n, n))
    d_agg = rng.normal(size=(n, d))
    return x, r, w, h, d_w, d_agg


def time_kernels(name, sizes, d, repeats):
    backend.use(name)
    rows = {}
    for n in sizes:
        rng = np.random.Generator(np.random.PCG64(n))
        x, r, w, h, d_w, d_agg = kernel_cases(n, d, rng)
        # warm-up triggers compilation on the jit path
        w_cos, cos, xn, rn = backend.cosine_weights_fwd(x, r)
        agg, denom = backend.gcn_aggregate_fwd(w, h)
        backend.cosine_weights_bwd(x, r, cos, xn, rn, d_w)
        backend.gcn_aggregate_bwd(w, h, agg, denom, d_agg)
        rows[n] = {
            "cos_fwd": median_time(lambda: backend.cosine_weights_fwd(x, r), repeats),
            "cos_bwd": median_time(
                lambda: backend.cosine_weights_bwd(x, r, cos, xn, rn, d_w), repeats),
            "agg_fwd": median_time(lambda: backend.gcn_aggregate_fwd(w, h), repeats),
            "agg_bwd": median_time(
                lambda: backend.gcn_aggregate_bwd(w, h, agg, denom, d_agg), repeats),
        }
    return rows


def time_train_step(name, repeats):
    backend.use(name)
    spec = SyntheticSpec(n_articles=16, sentences_min=8, sentences_max=16,
                         signal_pool_size=6, distractor_pool_size=60, seed=3)
    articles, _ = generate_synthetic(spec)
    cfg = TrainConfig(d=32, h=16, seed=3, batch_size=16)
    node_vec, seq_vec = build_vectorizers(cfg)
    batch = prepare_articles(articles, node_vec, seq_vec)
    store = init_params(cfg)

    def step():
        inner_step(batch, store, cfg)
        outer_step(batch, store, cfg)

    step()  # warm up
    return median_time(step, repeats)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="8,32,128,512",
                        help="comma-separated graph sizes")
    parser.add_argument("--dim", type=int, default=32)
    parser.add_argument("--repeats", type=int, default=30)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    available = ["numba", "numpy"]
    try:
        backend.use("numba")
    except (ImportError, ValueError) as exc:
        print(f"compiled backend unavailable ({exc}); timing numpy only")
        available = ["numpy"]

    results = {name: time_kernels(name, sizes, args.dim, args.repeats)
               for name in available}

    kernels = ("cos_fwd", "cos_bwd", "agg_fwd", "agg_bwd")
    header = f"{'n':>5} {'kernel':>8}" + "".join(f"{b:>12}" for b in available)
    if len(available) == 2:
        header += f"{'speedup':>9}"
    print(f"kernel timings, d={args.dim}, median of {args.repeats} runs (seconds)")
    print(header)
    for n in sizes:
        for kernel in kernels:
            line = f"{n:>5} {kernel:>8}"
            for name in available:
                line += f"{results[name][n][kernel]:>12.2e}"
            if len(available) == 2:
                ratio = results["numpy"][n][kernel] / results["numba"][n][kernel]
                line += f"{ratio:>8.1f}x"
            print(line)

    print()
    print(f"alternating train step (16 articles, d=32, h=16), "
          f"median of {args.repeats} runs")
    for name in available:
        print(f"  {name:>6}: {time_train_step(name, args.repeats):.4f}s")


if __name__ == "__main__":
    main()
