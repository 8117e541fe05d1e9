"""Compare the compiled and pure-Python kernel backends.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from incompfit import _kernels as K
from incompfit.brd import BRD_MODELS, OBS_INDEX, design_matrix, fit_brd
from incompfit.datasets import load_growth, load_spo, trim_growth
from incompfit.gaussian import MODELS, fit_gaussian
from incompfit.ignorance import ignorance_interval


def workloads():
    t = load_spo()
    ds = trim_growth(load_growth())
    X, _ = design_matrix(BRD_MODELS["BRD7"])
    args = K.as_kernel_args(X, OBS_INDEX, t.observed_vector())
    theta = np.zeros(X.shape[1])
    return {
        "brd_loglik_grad x1000": lambda: [K.brd_loglik_grad(*args[:3], theta, args[3]) for _ in range(1000)],
        "brd_em BRD7 (slow EM)": lambda: K.brd_em(*args[:3], theta, args[3], 20000, 1e-8),
        "fit_brd BRD1-9": lambda: [fit_brd(t, s) for s in BRD_MODELS.values()],
        "ignorance model10 (51 pts)": lambda: ignorance_interval(t, "model10", grid=51, ranges=((-16, 30),)),
        "fit_gaussian model1 ML": lambda: fit_gaussian(ds, MODELS["model1"], "ml"),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = K.available_backends()
    print(f"{'workload':32s}" + "".join(f"{b:>14s}" for b in backends) + "   speedup")
    for name, fn in workloads().items():
        times = []
        for b in backends:
            K.use_backend(b)
            times.append(min(timeit.repeat(fn, number=1, repeat=args.repeat)))
        sp = times[-1] / times[0] if len(times) == 2 else float("nan")
        print(f"{name:32s}" + "".join(f"{t * 1e3:12.1f}ms" for t in times) + f"   {sp:6.1f}x")
    K.use_backend(backends[0])


if __name__ == "__main__":
    main()
