"""How often BIC picks each number of components across simulated replicates."""
import argparse
import collections

from rmoe.data import benchmark_simulation_spec, simulate
from rmoe.em import FitOptions
from rmoe.selection import build_grid, select


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=300)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--K-set", default="1,2,3")
    ap.add_argument("--grid", type=int, nargs=2, default=(3, 3), metavar=("M1", "M2"))
    ap.add_argument("--starts", type=int, default=2)
    a = ap.parse_args()

    K_set = tuple(int(k) for k in a.K_set.split(","))
    counts = collections.Counter()
    for seed in range(1, a.replicates + 1):
        d, _ = simulate(benchmark_simulation_spec(a.n, seed))
        hp, _, _ = select(d, build_grid(d.n, *a.grid, K_set=K_set), FitOptions(n_starts=a.starts))
        counts[hp.K] += 1
        print(f"seed {seed:3d}: K={hp.K} lambda={hp.lam:.3f} gamma={hp.gamma:.3f}")
    for K in K_set:
        print(f"K={K}: {counts[K]}/{a.replicates}")


if __name__ == "__main__":
    main()
