"""Decay of correlations for the y-coordinate on the dyadic skew product.

Operator route (exact pushes of u2 times the invariant path) against
Birkhoff sums along random orbits.
"""

from pathlib import Path

from skewtransfer.config import build_system, load_config
from skewtransfer.correlations import birkhoff_correlation, coordinate_y, correlation_sequence
from skewtransfer.skew import compute_invariant

CFG = Path(__file__).resolve().parents[1] / "configs" / "dyadic.cfg"


def main():
    cfg = load_config(CFG)
    S = build_system(cfg)
    u = coordinate_y()
    P0, _ = compute_invariant(S, 256, 50)
    op = correlation_sequence(S, P0, u, u, 12)
    mc = birkhoff_correlation(S, u, u, 10, n_orbits=cfg.run["n_orbits"], seed=cfg.seed)
    print(f"operator fit: C_n ~ {op.amplitude:.5f} * {op.rate:.5f}^n\n")
    print(f"{'n':>3} {'operator':>12} {'monte carlo':>12} {'stderr':>10}")
    for n in range(op.values.size):
        tail = f"{mc.values[n]:12.3e} {mc.stderr[n]:10.2e}" if n < mc.values.size else ""
        print(f"{n:3d} {op.values[n]:12.3e} {tail}")


if __name__ == "__main__":
    main()
