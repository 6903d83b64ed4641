"""Compare the compiled (Cython) and numpy kernel backends.

Times full simulations (gather, bytecode dfun, noise, update) for each
shipped model on synthetic networks of increasing size, and reports
node-steps per second plus the speedup of the compiled core.

    python3 benchmarks/bench_backends.py [--steps N] [--sizes 16 64 256] [--repeat R]
"""
import argparse
import time

from neuroloom import _backend
from neuroloom.connectome import build_sparse, random_connectome
from neuroloom.dsl import load_model
from neuroloom.engine import SimConfig, Simulator

MODELS = {"ReducedWongWang": 0.05, "Kuramoto": 0.01, "Epileptor": 0.01}


def time_run(model, sc, backend, steps, repeat, kernel):
    best = float("inf")
    for _ in range(repeat):
        cfg = SimConfig(n_steps=steps, G=MODELS[model.name], backend=backend, kernel=kernel,
                        dt=0.05 if model.name == "Epileptor" else 0.1)
        sim = Simulator(model, sc, cfg)
        t0 = time.perf_counter()
        sim.advance(steps)
        best = min(best, time.perf_counter() - t0)
        sim.close()
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=500)
    ap.add_argument("--sizes", type=int, nargs="+", default=[16, 64, 256])
    ap.add_argument("--density", type=float, default=0.3)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--kernel", choices=["bytecode", "native"], default="bytecode")
    args = ap.parse_args(argv)

    backends = _backend.available()
    if "cython" not in backends:
        print("compiled core not built; only the numpy backend is available")
    header = f"{'model':<16}{'n':>6}{'edges':>8}" + "".join(f"{b + ' ns/s':>16}" for b in backends)
    print(header + (f"{'speedup':>10}" if len(backends) > 1 else ""))
    for name in MODELS:
        model = load_model(name)
        for n in args.sizes:
            c = random_connectome(n, density=args.density, seed=n, max_length=60)
            sc = build_sparse(c, 3.0, 0.05 if name == "Epileptor" else 0.1)
            secs = {b: time_run(model, sc, b, args.steps, args.repeat, args.kernel)
                    for b in backends}
            row = f"{name:<16}{n:>6}{sc.n_edges:>8}"
            row += "".join(f"{n * args.steps / secs[b]:>16.3g}" for b in backends)
            if len(backends) > 1:
                row += f"{secs['python'] / secs['cython']:>9.1f}x"
            print(row)


if __name__ == "__main__":
    main()
