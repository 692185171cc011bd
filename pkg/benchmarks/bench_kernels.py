"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--per-room N] [--repeat R]
"""
import argparse
import time

import numpy as np

from msirl import kernels
from msirl.discretize import FractalRoomSpec, build_fractal_environment, build_markov_chain, sample_states
from msirl.dynamics import single_integrator


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--per-room", type=int, default=40)
    ap.add_argument("--pairs", type=int, default=200_000)
    ap.add_argument("--steps", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    backends = ["python"]
    if kernels.HAVE_EXTENSION:
        backends.insert(0, "cython")
    else:
        print("compiled extension not built; timing the fallback only")

    env = build_fractal_environment(FractalRoomSpec(door_width=0.5))
    rng = np.random.default_rng(0)
    p = rng.uniform(0, 9, (args.pairs, 2))
    q = p + rng.normal(scale=0.3, size=p.shape)
    states = sample_states(env, args.per_room, seed=0)
    dyn = single_integrator(1.0)
    chain = build_markov_chain(dyn, states, env, 0.1, 3.0)
    P = chain.P
    cum = kernels.row_cumulative(P.indptr, P.data)
    u = rng.random(args.steps)

    cases = {
        f"segments_blocked ({args.pairs} pairs x {len(env.walls)} walls)":
            lambda b: kernels.segments_blocked(p, q, env.walls, backend=b),
        f"sample_path ({args.steps} steps, n={chain.n})":
            lambda b: kernels.sample_path(P.indptr, P.indices, cum, 0, u, backend=b),
        f"build_markov_chain (n={chain.n})":
            lambda b: build_markov_chain(dyn, states, env, 0.1, 3.0, backend=b).P.data,
    }
    print(f"{'kernel':<52}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, fn in cases.items():
        times, outs = [], []
        for b in backends:
            t, out = best_of(lambda: fn(b), args.repeat)
            times.append(t)
            outs.append(np.asarray(out))
        if len(outs) == 2:
            assert np.array_equal(outs[0], outs[1]), f"backends disagree on {name}"
        speed = f"{times[-1] / times[0]:>9.1f}x" if len(times) == 2 else ""
        print(f"{name:<52}" + "".join(f"{t:>11.3f}s" for t in times) + speed)


if __name__ == "__main__":
    main()
