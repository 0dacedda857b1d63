"""Ulam approximation of the Gauss invariant density.

The stationary vector of the bin-to-bin transition matrix converges to
h(x) = 1 / ((1 + x) ln 2) at first order in the bin width.
"""

import numpy as np

from skewtransfer.branch_maps import make_gauss
from skewtransfer.transfer1d import build_ulam, l1_distance, stationary_density


def h_exact(x):
    return 1.0 / ((1.0 + np.asarray(x)) * np.log(2.0))


def main():
    fmap = make_gauss()
    prev = None
    print(f"{'bins':>6} {'L1 error':>12} {'ratio':>7}")
    for n in (256, 512, 1024, 2048, 4096):
        err = l1_distance(stationary_density(build_ulam(fmap, n)), h_exact)
        ratio = "" if prev is None else f"{err / prev:7.3f}"
        print(f"{n:>6} {err:12.3e} {ratio}")
        prev = err


if __name__ == "__main__":
    main()
