"""Replicate a standard normal from one fBm path and print the diverger bookkeeping.

    python3 demos/replicate_one_path.py [seed]
"""
import sys

from scipy import stats

from holderrep.diverger import DivergerState, build_mesh
from holderrep.paths import TimeGrid, simulate_fbm
from holderrep.replicate import replicate_distribution

H = 0.75


def main(seed: int = 0) -> None:
    path = simulate_fbm(H, TimeGrid.unit(2**16), seed=seed)
    state = DivergerState(gamma=1.2, eta=0.05, mu=1.5, alpha=0.7, level_scale=0.05)
    mesh = build_mesh(1.2, 1.5, 200)
    cdf = lambda x: stats.norm.cdf(x / 0.5**H)
    ip, terminal = replicate_distribution(path, stats.norm.ppf, cdf, 0.5, state, mesh)
    target = stats.norm.ppf(cdf(path.values[path.grid.index_of(0.5)]))
    print(f"target  g(X(1/2)) = {target:+.10f}")
    print(f"terminal int psi dX = {terminal:+.10f}")
    print(f"diverger failure: {bool(ip.meta.get('failure', False))}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 0)
