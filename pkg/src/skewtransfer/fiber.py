"""Signed atomic measures on the fibre [0, 1], the W-norm, and fibre maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from . import _kernels
from .branch_maps import PiecewiseMap
from .errors import AtomCapError, ConstructionError, ContractViolation, GapError

ATOM_CAP = 100_000
FIBER_PROBE_BRANCHES = 10_000
RANGE_SLACK = 1e-12


class AtomicMeasure:
    """Finite signed measure ``sum_k w_k delta_{x_k}`` on [0, 1].

    Positions are stored sorted and unique; atoms sharing a position are
    merged by adding weights at construction.
    """

    __slots__ = ("positions", "weights")

    def __init__(self, positions, weights, *, presorted: bool = False):
        x = np.asarray(positions, dtype=float).ravel()
        w = np.asarray(weights, dtype=float).ravel()
        if x.shape != w.shape:
            raise ValueError("positions and weights must have the same length")
        if x.size and (x.min() < 0.0 or x.max() > 1.0 or np.isnan(x).any()):
            raise ValueError("atom positions must lie in [0, 1]")
        if not np.all(np.isfinite(w)):
            raise ValueError("atom weights must be finite")
        if not presorted and x.size > 1:
            order = np.argsort(x, kind="stable")
            x, w = x[order], w[order]
            first = np.concatenate([[True], x[1:] != x[:-1]])
            if not first.all():
                starts = np.nonzero(first)[0]
                w = np.add.reduceat(w, starts)
                x = x[starts]
        x.flags.writeable = False
        w.flags.writeable = False
        self.positions = x
        self.weights = w

    # construction helpers
    @classmethod
    def delta(cls, x: float, mass: float = 1.0) -> "AtomicMeasure":
        return cls([x], [mass])

    @classmethod
    def zero(cls) -> "AtomicMeasure":
        return cls([], [])

    @classmethod
    def from_pairs(cls, pairs) -> "AtomicMeasure":
        pairs = list(pairs)
        if not pairs:
            return cls.zero()
        x, w = zip(*pairs)
        return cls(x, w)

    def pairs(self):
        return list(zip(self.positions.tolist(), self.weights.tolist()))

    @property
    def n_atoms(self) -> int:
        return self.positions.size

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    @property
    def total_variation(self) -> float:
        return float(np.abs(self.weights).sum())

    def is_probability(self, tol: float = 1e-12) -> bool:
        return bool(np.all(self.weights >= 0) and abs(self.total_mass - 1.0) <= tol)

    def scaled(self, c: float) -> "AtomicMeasure":
        return AtomicMeasure(self.positions, c * self.weights, presorted=True)

    def __add__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        return AtomicMeasure(np.concatenate([self.positions, other.positions]),
                             np.concatenate([self.weights, other.weights]))

    def __neg__(self) -> "AtomicMeasure":
        return self.scaled(-1.0)

    def __sub__(self, other: "AtomicMeasure") -> "AtomicMeasure":
        return self + (-other)

    def __eq__(self, other) -> bool:
        return (isinstance(other, AtomicMeasure)
                and np.array_equal(self.positions, other.positions)
                and np.array_equal(self.weights, other.weights))

    def __repr__(self) -> str:
        return f"AtomicMeasure(n_atoms={self.n_atoms}, mass={self.total_mass:.6g})"

    def integrate(self, fn) -> float:
        return float(np.dot(self.weights, fn(self.positions)))


def random_measure(rng: np.random.Generator, n_atoms: int, signed: bool = True,
                   probability: bool = False) -> AtomicMeasure:
    x = rng.uniform(0.0, 1.0, size=n_atoms)
    if probability:
        w = rng.uniform(0.0, 1.0, size=n_atoms)
        w /= w.sum()
    elif signed:
        w = rng.uniform(-1.0, 1.0, size=n_atoms)
    else:
        w = rng.uniform(0.0, 1.0, size=n_atoms)
    return AtomicMeasure(x, w)


# -- W-norm -----------------------------------------------------------------


def _w_norm_highs(x: np.ndarray, w: np.ndarray) -> float:
    m = x.size
    d = np.diff(x)
    rows = np.repeat(np.arange(m - 1), 2)
    cols = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1).ravel()
    vals = np.tile([-1.0, 1.0], m - 1)
    D = sp.csr_matrix((vals, (rows, cols)), shape=(m - 1, m))
    A = sp.vstack([D, -D]).tocsr()
    b = np.concatenate([d, d])
    res = linprog(-w, A_ub=A, b_ub=b, bounds=[(-1.0, 1.0)] * m, method="highs",
                  options={"primal_feasibility_tolerance": 1e-10,
                           "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        raise RuntimeError(f"HiGHS failed: {res.message}")
    return float(-res.fun)


def w_norm(mu: AtomicMeasure, method: str = "dp", atom_cap: int = ATOM_CAP) -> float:
    """``sup { sum_k w_k h(x_k) : |h| <= 1, Lip(h) <= 1 }``.

    Only adjacent Lipschitz constraints are needed: any assignment satisfying
    them extends to a 1-Lipschitz function on [0, 1] by linear interpolation,
    and the box constraint survives interpolation.

    ``method="dp"`` solves the equivalent transport problem exactly in
    ``O(m log m)``; ``method="highs"`` hands the LP over the values ``h(x_k)``
    to HiGHS.
    """
    m = mu.n_atoms
    if m > atom_cap:
        raise AtomCapError(f"{m} atoms exceeds the cap of {atom_cap}")
    if m == 0:
        return 0.0
    w = mu.weights
    if m == 1 or np.all(w >= 0) or np.all(w <= 0):
        return abs(float(w.sum()))
    if method == "dp":
        return float(_kernels.wnorm_sorted(mu.positions, w))
    if method == "highs":
        return _w_norm_highs(mu.positions, w)
    raise ValueError(f"unknown method {method!r}")


def w_distance(mu: AtomicMeasure, nu: AtomicMeasure, method: str = "dp") -> float:
    return w_norm(mu - nu, method=method)


def merge_atoms(mu: AtomicMeasure, epsilon: float) -> AtomicMeasure:
    """Cluster atoms lying within ``epsilon`` of a cluster's first atom.

    Every atom moves by at most ``epsilon``, so the result is within
    ``epsilon * total_variation(mu)`` of ``mu`` in the W-norm.
    """
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    if epsilon == 0 or mu.n_atoms < 2:
        return mu
    ptr = np.array([0, mu.n_atoms], dtype=np.int64)
    _, x, w = _kernels.merge_segments(ptr, mu.positions, mu.weights, float(epsilon))
    return AtomicMeasure(x, w, presorted=True)


# -- fibre maps -------------------------------------------------------------


@dataclass(frozen=True)
class FiberMapSpec:
    """Fibre map ``G(x, y)`` given branchwise as ``G_i(x, y)``.

    ``on_branch(i, x, y)`` is vectorized.  ``alpha`` bounds the fibre
    Lipschitz constant, ``global_lip`` the Lipschitz constant in the base
    variable (uniform over branches).
    """

    base: PiecewiseMap
    on_branch: Callable
    alpha: float
    per_branch_lip: Callable
    global_lip: float
    name: str = "fiber"
    params: dict = field(default_factory=dict)

    def apply(self, x: float, y):
        i = self.base.locate(np.asarray([x], dtype=float))[0]
        if i == 0:
            raise GapError(f"x={x!r} is not interior to a base branch")
        y = np.asarray(y, dtype=float)
        return self.on_branch(np.full(y.shape, i), np.full(y.shape, x), y)


def _seq_eval(seq, i):
    """Evaluate a coefficient sequence given as constant, finite list or callable."""
    i = np.asarray(i, dtype=np.int64)
    if callable(seq):
        out = seq(i)
        if np.ndim(out) == 0 and np.ndim(i) > 0:
            out = np.vectorize(seq, otypes=[float])(i)
        return np.asarray(out, dtype=float) * np.ones(i.shape)
    if np.ndim(seq) == 0:
        return np.full(i.shape, float(seq))
    arr = np.asarray(seq, dtype=float)
    return arr[np.clip(i - 1, 0, arr.size - 1)]


def _probe_indices(base: PiecewiseMap, cap: int = FIBER_PROBE_BRANCHES) -> np.ndarray:
    return base.indices(cap)


def make_stepwise_alpha(base: PiecewiseMap, alphas, offsets=None, name: str = "stepwise") -> FiberMapSpec:
    """``G(x, y) = alpha_i y + c_i`` on branch ``i`` (``c_i = 0`` by default).

    ``alphas``/``offsets`` may be constants, finite lists (the last entry is
    repeated) or callables of the branch index.  ``alpha`` is the supremum
    over the first 10^4 branches.
    """
    off = 0.0 if offsets is None else offsets
    idx = _probe_indices(base)
    a = _seq_eval(alphas, idx)
    c = _seq_eval(off, idx)
    alpha = float(a.max())
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ConstructionError("fibre contraction rates must be finite and >= 0")
    if alpha >= 1.0:
        raise ConstructionError(f"sup alpha_i = {alpha} must be < 1")
    if np.any(c < 0) or np.any(a + c > 1.0 + RANGE_SLACK):
        raise ConstructionError("alpha_i y + c_i must map [0, 1] into [0, 1]")

    def on_branch(i, x, y):
        return _seq_eval(alphas, i) * y + _seq_eval(off, i)

    return FiberMapSpec(base, on_branch, alpha, lambda i: np.zeros(np.shape(i)), 0.0, name,
                        {"alphas": alphas, "offsets": offsets})


def make_lipschitz_coeff(base: PiecewiseMap, coeffs: Callable, sup_lip: float, offsets=None,
                         name: str = "lipschitz", samples_per_branch: int = 16) -> FiberMapSpec:
    """``G(x, y) = h_i(x) y + c_i`` with ``0 <= h_i <= alpha < 1`` and ``Lip(h_i) <= sup_lip``.

    ``coeffs(i, x)`` is vectorized.  ``alpha`` is the sampled supremum of
    ``h_i`` over the probed branches.
    """
    if sup_lip < 0 or not np.isfinite(sup_lip):
        raise ConstructionError("sup_lip must be finite and >= 0")
    off = 0.0 if offsets is None else offsets
    idx = _probe_indices(base, 2000)
    a, b = base.left(idx), base.right(idx)
    t = (np.arange(samples_per_branch) + 0.5) / samples_per_branch
    xs = a[:, None] + (b - a)[:, None] * np.concatenate([[1e-9], t, [1 - 1e-9]])[None, :]
    ii = np.broadcast_to(idx[:, None], xs.shape)
    hv = coeffs(ii, xs)
    c = _seq_eval(off, idx)
    alpha = float(np.max(hv))
    if np.min(hv) < 0:
        raise ConstructionError("coefficients h_i must be >= 0")
    if alpha >= 1.0:
        raise ConstructionError(f"sup h_i = {alpha} must be < 1")
    if np.any(c < 0) or np.any(hv.max(axis=1) + c > 1.0 + RANGE_SLACK):
        raise ConstructionError("h_i(x) y + c_i must map [0, 1] into [0, 1]")

    def on_branch(i, x, y):
        return coeffs(i, x) * y + _seq_eval(off, i)

    return FiberMapSpec(base, on_branch, alpha, lambda i: np.full(np.shape(i), float(sup_lip)),
                        float(sup_lip), name, {"sup_lip": sup_lip, "offsets": offsets})


def fiber_push(G: FiberMapSpec, x: float, mu: AtomicMeasure) -> AtomicMeasure:
    """Push ``mu`` through ``y -> G(x, y)``; weights are untouched."""
    if mu.n_atoms == 0:
        return mu
    y = G.apply(x, mu.positions)
    if y.min() < -RANGE_SLACK or y.max() > 1.0 + RANGE_SLACK:
        raise ContractViolation(f"G({x}, .) leaves [0, 1]: range [{y.min()}, {y.max()}]")
    return AtomicMeasure(np.clip(y, 0.0, 1.0), mu.weights)


def check_fiber_contraction(G: FiberMapSpec, n_samples: int = 2000, seed: int = 0, n_probe: int = 200):
    """Worst sampled excess of ``|G(x,y1) - G(x,y2)| - alpha |y1 - y2|`` (should be <= 1e-12)."""
    rng = np.random.default_rng(seed)
    idx = G.base.indices(n_probe)
    i = rng.choice(idx, size=n_samples)
    a, b = G.base.left(i), G.base.right(i)
    x = a + (b - a) * rng.uniform(0.01, 0.99, size=n_samples)
    y1, y2 = rng.uniform(size=n_samples), rng.uniform(size=n_samples)
    excess = np.abs(G.on_branch(i, x, y1) - G.on_branch(i, x, y2)) - G.alpha * np.abs(y1 - y2)
    return float(excess.max())
