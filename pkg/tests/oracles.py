"""Independent reference computations used only by the tests."""

import numpy as np
from scipy.optimize import linprog


def gauss_h1(x):
    return 1.0 / ((1.0 + np.asarray(x, dtype=float)) * np.log(2.0))


def grid_lp_wnorm(positions, weights, resolution=1e-3):
    """Brute-force dual LP: max sum w h(x) over |h| <= 1, Lip(h) <= 1 on a dense node set.

    Nodes are the uniform grid of the given resolution plus the atom positions,
    with Lipschitz constraints between neighbouring nodes.
    """
    positions = np.asarray(positions, dtype=float)
    weights = np.asarray(weights, dtype=float)
    grid = np.linspace(0.0, 1.0, int(round(1.0 / resolution)) + 1)
    nodes = np.unique(np.concatenate([grid, positions]))
    m = nodes.size
    c = np.zeros(m)
    np.add.at(c, np.searchsorted(nodes, positions), -weights)
    d = np.diff(nodes)
    rows = np.repeat(np.arange(m - 1), 2)
    cols = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1).ravel()
    vals = np.tile([-1.0, 1.0], m - 1)
    from scipy.sparse import coo_matrix, vstack

    D = coo_matrix((vals, (rows, cols)), shape=(m - 1, m))
    A = vstack([D, -D]).tocsr()
    b = np.concatenate([d, d])
    # default feasibility slack (1e-7) swamps Lipschitz rows between atoms closer than that
    res = linprog(c, A_ub=A, b_ub=b, bounds=[(-1.0, 1.0)] * m, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    assert res.status == 0, res.message
    return -res.fun


def monomial_eigenvalues(lengths, degree):
    """Eigenvalues of the transfer operator of full increasing linear branches on polynomials.

    ``P(x^k) = sum_i a_i (a_i y + b_i)^k`` has leading coefficient
    ``sum_i a_i^(k+1)``, so the operator is triangular in the monomial basis.
    """
    a = np.asarray(lengths, dtype=float)
    return np.array([np.sum(a ** (k + 1)) for k in range(degree + 1)])


def brute_transfer(fmap, h, y, n_branches):
    """Direct branch sum of ``h(x) / |f'(x)|`` over preimages, branch by branch."""
    total = 0.0
    for i in range(1, n_branches + 1):
        b = fmap.branch(i)
        lo, hi = sorted((b.image_left, b.image_right))
        if lo < y < hi:
            x = b.inverse(y)
            total += h(x) / abs(b.derivative(x))
    return total
