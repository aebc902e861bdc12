"""Monte Carlo variance of (1-s)^{-1/2}-weighted integrals against W and B^H.

    python3 demos/oscillator_variance.py [n_paths]
"""
import math
import sys

import numpy as np
from scipy import special

from holderrep.paths import ProcessModel, TimeGrid

H = 0.75


def main(n_paths: int = 2000) -> None:
    grid = TimeGrid.unit(2**12)
    t = grid.times[:-1]
    W, B = ProcessModel("mixed", H).sample_components(grid, seed=0, n_paths=n_paths)
    w = np.where(t < 1.0 - grid.step - 1e-15, (1.0 - t) ** -0.5, 0.0)
    b = np.diff(B, axis=1) @ w
    print(f"Var int (1-s)^(-1/2) dB^H = {np.var(b, ddof=1):.4f}  "
          f"(limit {2 * H * special.beta(2 * H - 1, 0.5):.4f})")
    dW = np.diff(W, axis=1)
    for tt in (0.5, 0.75, 0.9):
        u = dW @ np.where(t < tt - 1e-15, (1.0 - t) ** -0.5, 0.0)
        print(f"Var u({tt}) = {np.var(u, ddof=1):.4f}  (-ln(1-t) = {-math.log(1 - tt):.4f})")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2000)
