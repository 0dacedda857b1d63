"""The W-norm on signed atomic measures, and what merging costs."""

import numpy as np

from skewtransfer.fiber import AtomicMeasure, merge_atoms, random_measure, w_distance, w_norm

rng = np.random.default_rng(3)

dipole = AtomicMeasure([0.2, 0.6], [1.0, -1.0])
print("dipole 0.2 / 0.6        ", w_norm(dipole))
print("same with highs         ", w_norm(dipole, method="highs"))
print("probability, 40 atoms   ", w_norm(random_measure(rng, 40, probability=True)))

mu = random_measure(rng, 2000, probability=True)
print(f"\n{'eps':>8} {'atoms':>6} {'W error':>10} {'eps*|mu|':>10}")
for eps in (1e-5, 1e-4, 1e-3, 1e-2):
    out = merge_atoms(mu, eps)
    print(f"{eps:8.0e} {out.n_atoms:6d} {w_distance(mu, out):10.3e} {eps * mu.total_variation:10.3e}")
