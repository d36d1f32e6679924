"""Wall-clock comparison of the three gate solvers on simulated data."""
import argparse
import math
import time

import numpy as np

from rmoe.data import benchmark_simulation_spec, simulate
from rmoe.em import FitOptions, fit
from rmoe.model import Hyperparams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--replicates", type=int, default=5)
    ap.add_argument("--lam", type=float, default=10.0)
    ap.add_argument("--gamma", type=float, default=4.0)
    ap.add_argument("--starts", type=int, default=3)
    a = ap.parse_args()

    opts = FitOptions(n_starts=a.starts)
    times = {s: [] for s in ("mm", "ca", "pn")}
    iters = {s: [] for s in times}
    for seed in range(1, a.replicates + 1):
        d, _ = simulate(benchmark_simulation_spec(a.n, seed))
        for solver in times:
            hp = Hyperparams(lam=a.lam, gamma=a.gamma, rho=0.1 * math.log(d.n), K=2, solver=solver)
            if seed == 1:
                fit(d, hp, FitOptions(n_starts=1, max_em_iters=2))  # compile
            t0 = time.perf_counter()
            res = fit(d, hp, opts)
            times[solver].append(time.perf_counter() - t0)
            iters[solver].append(res.n_iters)

    print(f"{'solver':>6s} {'mean s':>8s} {'sd s':>8s} {'EM iters':>9s}")
    for s in times:
        t = np.array(times[s])
        print(f"{s:>6s} {t.mean():8.3f} {t.std():8.3f} {np.mean(iters[s]):9.1f}")


if __name__ == "__main__":
    main()
