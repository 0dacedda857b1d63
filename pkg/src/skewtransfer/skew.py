"""Disintegrated measures on the unit square and the skew-product transfer operator.

A :class:`LeafPath` stores one fibre measure per leaf of a uniform grid of
the base; leaf ``j`` sits at the bin midpoint ``(j + 1/2)/n`` and its total
mass is the marginal density there.  All leaves live in three flat arrays so
that the push, the norms and the merges run as segmented array operations.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import _kernels
from .branch_maps import PiecewiseMap, iterate_with_derivative
from .errors import ContractViolation, ConvergenceError, FitError, HypothesisViolation, SkewTransferError
from .fiber import RANGE_SLACK, AtomicMeasure, FiberMapSpec
from .fitting import fit_exponential
from .transfer1d import GridDensity, bv_norm

DEFAULT_TAIL_TOL = 1e-8
DEFAULT_MERGE_EPS = 1e-6
DEFAULT_ATOM_CAP = 512
MAX_PUSH_BRANCHES = 1 << 16


@dataclass(frozen=True)
class SkewSystem:
    base: PiecewiseMap
    fiber: FiberMapSpec
    iterate_k: int = 1
    name: str = "system"

    def __post_init__(self):
        if self.iterate_k < 1:
            raise ValueError("iterate_k must be >= 1")
        if self.fiber.base is not self.base:
            raise ValueError("fibre map was built over a different base map")


# -- leaf paths -------------------------------------------------------------


def _ptr_from_counts(counts: np.ndarray) -> np.ndarray:
    ptr = np.zeros(counts.size + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr


def _drop_zeros(ptr, x, w):
    keep = w != 0.0
    if keep.all():
        return ptr, x, w
    seg = np.repeat(np.arange(ptr.size - 1), np.diff(ptr))
    counts = np.bincount(seg[keep], minlength=ptr.size - 1)
    return _ptr_from_counts(counts), x[keep], w[keep]


def _segmented(ids, x, w, n_segments, eps: float = 0.0):
    """Sort atoms by (segment, position) and merge within ``eps`` (0 = exact duplicates)."""
    order = np.lexsort((x, ids))
    ptr = _ptr_from_counts(np.bincount(ids, minlength=n_segments))
    ptr, xs, ws = _kernels.merge_segments(ptr, np.ascontiguousarray(x[order]),
                                          np.ascontiguousarray(w[order]), float(eps))
    return _drop_zeros(ptr, xs, ws)


def _gather_index(ptr, segs):
    """Flat atom indices of segments ``segs`` (in order) and their lengths."""
    lens = ptr[segs + 1] - ptr[segs]
    total = int(lens.sum())
    starts = np.repeat(ptr[segs] - np.concatenate([[0], np.cumsum(lens)[:-1]]), lens)
    return starts + np.arange(total), lens


@dataclass
class LeafPath:
    """Fibre measures on a uniform leaf grid, stored as segmented arrays."""

    ptr: np.ndarray
    positions: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def n_leaves(self) -> int:
        return self.ptr.size - 1

    @property
    def tag(self) -> str:
        return str(self.meta.get("tag", "path"))

    def leaf_ids(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_leaves), np.diff(self.ptr))

    def leaf(self, j: int) -> AtomicMeasure:
        a, b = self.ptr[j], self.ptr[j + 1]
        return AtomicMeasure(self.positions[a:b], self.weights[a:b], presorted=True)

    def leaves(self) -> List[AtomicMeasure]:
        return [self.leaf(j) for j in range(self.n_leaves)]

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_leaves) + 0.5) / self.n_leaves

    def masses(self) -> np.ndarray:
        return np.bincount(self.leaf_ids(), weights=self.weights, minlength=self.n_leaves)

    def marginal(self) -> GridDensity:
        return GridDensity(self.masses())

    def total_mass(self) -> float:
        return float(self.masses().mean())

    def max_atoms(self) -> int:
        return int(np.diff(self.ptr).max(initial=0))

    @classmethod
    def from_leaves(cls, leaves, meta: Optional[dict] = None) -> "LeafPath":
        leaves = list(leaves)
        ptr = _ptr_from_counts(np.array([m.n_atoms for m in leaves], dtype=np.int64))
        x = np.concatenate([m.positions for m in leaves]) if leaves else np.zeros(0)
        w = np.concatenate([m.weights for m in leaves]) if leaves else np.zeros(0)
        return cls(ptr, x.astype(float), w.astype(float), dict(meta or {}))

    def scaled(self, c: float) -> "LeafPath":
        return LeafPath(self.ptr.copy(), self.positions.copy(), c * self.weights, dict(self.meta))

    def _combine(self, other: "LeafPath", sign: float) -> "LeafPath":
        if other.n_leaves != self.n_leaves:
            raise ValueError("paths live on different leaf grids")
        ids = np.concatenate([self.leaf_ids(), other.leaf_ids()])
        x = np.concatenate([self.positions, other.positions])
        w = np.concatenate([self.weights, sign * other.weights])
        ptr, xs, ws = _segmented(ids, x, w, self.n_leaves)
        return LeafPath(ptr, xs, ws, {"tag": "combination"})

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __neg__(self):
        return self.scaled(-1.0)

    def integrate(self, u) -> float:
        """``int u d(mu)`` for ``u(x, y)`` vectorized: mean over leaves of the atom sums."""
        x = np.repeat(self.midpoints(), np.diff(self.ptr))
        return float(np.dot(self.weights, u(x, self.positions)) / self.n_leaves)


def product_path(n_leaves: int, nu2: AtomicMeasure, tol: float = 1e-12) -> LeafPath:
    """Every leaf carries a copy of the probability ``nu2``."""
    if n_leaves < 1:
        raise ValueError("n_leaves must be >= 1")
    if not nu2.is_probability(tol):
        raise ContractViolation("product_path needs a probability fibre measure")
    k = nu2.n_atoms
    ptr = np.arange(n_leaves + 1, dtype=np.int64) * k
    return LeafPath(ptr, np.tile(nu2.positions, n_leaves), np.tile(nu2.weights, n_leaves),
                    {"tag": "product"})



def random_path(rng: np.random.Generator, n_leaves: int, n_atoms: int = 4,
                constant_marginal: bool = True) -> LeafPath:
    """Random positive path with ``n_atoms`` atoms per leaf and mean marginal 1.

    With ``constant_marginal`` every leaf is a probability; otherwise leaf
    masses are drawn at random and rescaled to mean 1.
    """
    x = rng.uniform(0.0, 1.0, size=(n_leaves, n_atoms))
    w = rng.uniform(0.05, 1.0, size=(n_leaves, n_atoms))
    w /= w.sum(axis=1, keepdims=True)
    if not constant_marginal:
        m = rng.uniform(0.0, 2.0, size=n_leaves)
        w *= (m / m.mean())[:, None]
    ids = np.repeat(np.arange(n_leaves), n_atoms)
    ptr, xs, ws = _segmented(ids, x.ravel(), w.ravel(), n_leaves)
    return LeafPath(ptr, xs, ws, {"tag": "random"})

# -- norms ------------------------------------------------------------------


def leaf_w_norms(P: LeafPath) -> np.ndarray:
    return _kernels.wnorm_segments(P.ptr, P.positions, P.weights)


def l1_norm(P: LeafPath) -> float:
    """Mean over leaves of the W-norm of the leaf measure."""
    return float(leaf_w_norms(P).mean())


def s1_norm(P: LeafPath) -> float:
    return bv_norm(P.marginal()) + l1_norm(P)


def adjacent_distances(P: LeafPath) -> np.ndarray:
    """W-distances between consecutive leaves."""
    n = P.n_leaves
    if n < 2:
        return np.zeros(0)
    ids = P.leaf_ids()
    plus = ids >= 1
    minus = ids <= n - 2
    seg = np.concatenate([ids[plus] - 1, ids[minus]])
    x = np.concatenate([P.positions[plus], P.positions[minus]])
    w = np.concatenate([P.weights[plus], -P.weights[minus]])
    ptr, xs, ws = _segmented(seg, x, w, n - 1)
    return _kernels.wnorm_segments(ptr, xs, ws)


def path_variation(P: LeafPath) -> float:
    """Sum of W-distances between adjacent leaves (variation restricted to the grid)."""
    return float(adjacent_distances(P).sum())


# -- push -------------------------------------------------------------------


def push_branch_count(base: PiecewiseMap, tail_tol: float) -> int:
    try:
        n = base.truncation_index(tail_tol, cap=MAX_PUSH_BRANCHES)
    except SkewTransferError:
        n = MAX_PUSH_BRANCHES
    return n


def _segment_keys(ptr, x, w):
    return [x[ptr[j]:ptr[j + 1]].tobytes() + w[ptr[j]:ptr[j + 1]].tobytes() for j in range(ptr.size - 1)]


def _unique_ids(keys):
    table = {}
    ids = np.empty(len(keys), dtype=np.int64)
    for j, k in enumerate(keys):
        ids[j] = table.setdefault(k, len(table))
    return ids, len(table)


def push_leafpath(S: SkewSystem, P: LeafPath, tail_tol: float = DEFAULT_TAIL_TOL,
                  merge_eps: float = DEFAULT_MERGE_EPS, atom_cap: int = DEFAULT_ATOM_CAP) -> LeafPath:
    """One application of the skew-product transfer operator to a leaf path.

    Output leaf ``gamma`` collects, for each branch ``i`` whose image contains
    ``gamma``, the measure of the input leaf containing ``x = f_i^-1(gamma)``
    pushed through ``G(x, .)`` and weighted by ``1/|f'(x)|``.  Leaves reached
    by no branch get the zero measure.

    Budgets recorded in ``meta``:

    * ``merge_budget`` -- per-leaf W-error of compaction (``eps * |leaf|``),
      summed (``merge_budget_sum``) and averaged (``merge_budget_l1``);
    * ``tail_budget`` -- mass bound of the dropped branches
      (``tail_slope_sum(N) * max |leaf mass|``).
    """
    n = P.n_leaves
    base, fib = S.base, S.fiber
    gam = P.midpoints()
    N = push_branch_count(base, tail_tol)
    idx = base.indices(N)

    hit = (base.image_left(idx)[:, None] < gam[None, :]) & (gam[None, :] < base.image_right(idx)[:, None])
    bi, j = np.nonzero(hit)
    i = idx[bi]
    x = base.inverse(i, gam[j])
    g = 1.0 / np.abs(base.derivative(i, x))
    src = np.clip(np.floor(x * n).astype(np.int64), 0, n - 1)

    # identical output leaves are computed once when G does not depend on x
    if fib.global_lip == 0.0:
        in_uid, _ = _unique_ids(_segment_keys(P.ptr, P.positions, P.weights))
        order = np.argsort(j, kind="stable")
        i, x, g, src, j = i[order], x[order], g[order], src[order], j[order]
        jptr = _ptr_from_counts(np.bincount(j, minlength=n))
        sig = np.stack([i.astype(float), in_uid[src].astype(float), g], axis=1)
        out_uid, n_unique = _unique_ids([sig[jptr[k]:jptr[k + 1]].tobytes() for k in range(n)])
        first = np.full(n_unique, -1, dtype=np.int64)
        for k in range(n - 1, -1, -1):
            first[out_uid[k]] = k
        rep = first[out_uid[j]] == j
        i, x, g, src = i[rep], x[rep], g[rep], src[rep]
        pair_out = out_uid[j[rep]]
    else:
        out_uid, n_unique = np.arange(n), n
        pair_out = j

    aidx, lens = _gather_index(P.ptr, src)
    y_in = P.positions[aidx]
    w = P.weights[aidx] * np.repeat(g, lens)
    y = fib.on_branch(np.repeat(i, lens), np.repeat(x, lens), y_in)
    if y.size and (y.min() < -RANGE_SLACK or y.max() > 1.0 + RANGE_SLACK):
        raise ContractViolation(f"fibre map leaves [0, 1]: range [{y.min()}, {y.max()}]")
    y = np.clip(y, 0.0, 1.0)
    out_ids = np.repeat(pair_out, lens)

    tv = np.bincount(out_ids, weights=np.abs(w), minlength=n_unique)
    order = np.lexsort((y, out_ids))
    uptr = _ptr_from_counts(np.bincount(out_ids, minlength=n_unique))
    uptr, ux, uw = _kernels.merge_segments(uptr, np.ascontiguousarray(y[order]),
                                           np.ascontiguousarray(w[order]), float(merge_eps))
    uptr, ux, uw, used = _kernels.cap_segments(uptr, ux, uw, float(merge_eps), int(atom_cap))
    uptr, ux, uw = _drop_zeros(uptr, ux, uw)
    budget_u = (merge_eps + used) * tv

    if n_unique == n and np.array_equal(out_uid, np.arange(n)):
        ptr, xs, ws = uptr, ux, uw
    else:
        aidx, lens = _gather_index(uptr, out_uid)
        ptr, xs, ws = _ptr_from_counts(lens), ux[aidx], uw[aidx]
    budget = budget_u[out_uid]
    masses_in = np.abs(P.masses())
    tail = 0.0 if (base.is_finite and N >= base.declared_count) else base.tail_slope_sum(N)
    out = LeafPath(ptr, xs, ws)
    zero_leaves = int(np.count_nonzero(np.diff(ptr) == 0))
    out.meta = {
        "tag": f"push({P.tag})",
        "n_branches": int(N),
        "merge_budget_l1": float(budget.mean()),
        "merge_budget_sum": float(budget.sum()),
        "merge_budget_max": float(budget.max(initial=0.0)),
        "tail_budget": float(tail * masses_in.max(initial=0.0)),
        "zero_leaves": zero_leaves,
        "zero_leaf_convention": "zero measure",
        "unique_leaves": int(n_unique),
        "cap_merges": int(np.count_nonzero(used)),
    }
    return out


def push_n(S: SkewSystem, P: LeafPath, n: int, **kw) -> List[LeafPath]:
    """``[P, F P, ..., F^n P]``."""
    out = [P]
    for _ in range(n):
        out.append(push_leafpath(S, out[-1], **kw))
    return out


# -- constants of the variation bounds --------------------------------------


@dataclass
class GStatistics:
    k: int
    esssup: float
    variation: float
    tail_allowance: float
    n_samples: int
    n_branches: int


def g_statistics(base: PiecewiseMap, k: int = 1, n_samples: int = 10_000, max_branches: int = 2000) -> GStatistics:
    """Sampled esssup and variation of ``g_k = 1/|(f^k)'|``.

    Samples are spread over the probed branches in proportion to their length
    with at least two per branch (placed next to both endpoints), so jumps at
    the probed partition points are seen.  The unprobed tail contributes at
    most ``tail * s^(k-1)`` to the supremum and ``3 tail * s^(k-1)`` to the
    variation, with ``tail = tail_slope_sum(N)`` and ``s = max(1, sup g)``.
    """
    try:
        N = base.truncation_index(1e-12, cap=max_branches)
    except SkewTransferError:
        N = max_branches
    idx = base.indices(N)
    a, b = base.left(idx), base.right(idx)
    L = b - a
    counts = np.maximum(2, np.floor(n_samples * L).astype(np.int64))
    pts = []
    for ai, Li, c in zip(a, L, counts):
        t = np.linspace(1e-9, 1.0 - 1e-9, int(c))
        pts.append(ai + Li * t)
    xs = np.concatenate(pts)
    xs = np.sort(xs)
    _, d = iterate_with_derivative(base, xs, k)
    gk = 1.0 / np.abs(d[np.isfinite(d)])
    g1_sup = float(np.max(1.0 / base.slope_inf(idx)))
    tail = 0.0 if (base.is_finite and N >= base.declared_count) else float(base.tail_slope_sum(N))
    allowance = tail * max(1.0, g1_sup) ** (k - 1)
    esssup = max(float(gk.max()), allowance)
    var = float(np.abs(np.diff(gk)).sum()) + 3.0 * allowance
    return GStatistics(k, esssup, var, allowance, int(xs.size), int(N))


def variation_constants(S: SkewSystem, k: int = 1, n_samples: int = 10_000):
    """``(alpha_k, U_k) = (alpha^k esssup g_k, |G|_lip esssup g_k + V(g_k))``."""
    st = g_statistics(S.base, k, n_samples)
    return S.fiber.alpha**k * st.esssup, S.fiber.global_lip * st.esssup + st.variation


def bv_bound_constants(S: SkewSystem, n_samples: int = 10_000):
    """Contraction and additive constants of the uniform variation bound.

    Raises :class:`HypothesisViolation` unless ``alpha4 < 1``.
    """
    a4, u4 = variation_constants(S, S.iterate_k, n_samples)
    if not a4 < 1.0:
        raise HypothesisViolation(f"alpha^k esssup 1/|(f^k)'| = {a4:.6g} is not < 1 (k={S.iterate_k})")
    return a4, u4


# -- invariant measure and equilibrium --------------------------------------


def compute_invariant(S: SkewSystem, n_leaves: int = 256, n_iters: int = 60,
                      tail_tol: float = DEFAULT_TAIL_TOL, merge_eps: float = DEFAULT_MERGE_EPS,
                      atom_cap: int = DEFAULT_ATOM_CAP, start: Optional[LeafPath] = None,
                      stop_tol: float = 0.0, keep_iterates: bool = False):
    """Iterate the push from ``m x delta_{1/2}`` (or ``start``).

    Returns ``(path, residuals)`` with ``residuals[n] = ||F^{n+1} P - F^n P||_1``;
    with ``keep_iterates`` the iterates are stored in ``path.meta["iterates"]``.
    A residual that fails to drop below the one 20 steps earlier while still
    above the compaction floor raises :class:`ConvergenceError`.
    """
    P = start if start is not None else product_path(n_leaves, AtomicMeasure.delta(0.5))
    history = []
    iterates = [P] if keep_iterates else None
    for it in range(n_iters):
        Q = push_leafpath(S, P, tail_tol=tail_tol, merge_eps=merge_eps, atom_cap=atom_cap)
        r = l1_norm(Q - P)
        history.append(r)
        floor = max(1e-9, 4.0 * (Q.meta["merge_budget_l1"] + Q.meta["tail_budget"]))
        if it >= 20 and r >= history[it - 20] and r > floor:
            raise ConvergenceError(f"residual not decreasing after {it + 1} steps ({r:.3g})",
                                   residual=r, history=history)
        P = Q
        if keep_iterates:
            iterates.append(Q)
        if r <= stop_tol:
            break
    P.meta["tag"] = "invariant"
    P.meta["residuals"] = list(history)
    if keep_iterates:
        P.meta["iterates"] = iterates
    return P, history


@dataclass
class EquilibriumRecord:
    values: np.ndarray
    amplitude: float
    rate: float
    residual: float
    merge_budget: float
    noise_floor: float = 0.0
    note: str = ""


def noise_floor(values, window: int = 4, stall_ratio: float = 0.8) -> float:
    """Level at which a decaying sequence stalls, or 0 if its tail still contracts.

    The tail is stalled when each of its last ``window`` step ratios exceeds
    ``stall_ratio``; the floor is then the smallest value in that window.
    """
    v = np.asarray(values, dtype=float)
    if v.size < window + 1 or np.any(v[-window - 1:] <= 0):
        return 0.0
    ratios = v[-window:] / v[-window - 1:-1]
    return float(v[-window:].min()) if np.all(ratios > stall_ratio) else 0.0


def equilibrium_rate(S: SkewSystem, P: LeafPath, Q: LeafPath, n: int = 16,
                     tail_tol: float = DEFAULT_TAIL_TOL, merge_eps: float = DEFAULT_MERGE_EPS,
                     atom_cap: int = DEFAULT_ATOM_CAP) -> EquilibriumRecord:
    """``a_k = ||F^k P - F^k Q||_1`` for ``k <= n`` with a tail-half geometric fit.

    When the sequence stalls at the compaction noise floor, values below ten
    times that floor are left out of the fit.
    """
    a = [l1_norm(P - Q)]
    budget = 0.0
    for _ in range(n):
        P = push_leafpath(S, P, tail_tol=tail_tol, merge_eps=merge_eps, atom_cap=atom_cap)
        Q = push_leafpath(S, Q, tail_tol=tail_tol, merge_eps=merge_eps, atom_cap=atom_cap)
        budget += P.meta["merge_budget_l1"] + Q.meta["merge_budget_l1"]
        a.append(l1_norm(P - Q))
    a = np.asarray(a)
    floor = noise_floor(a)
    try:
        fit = fit_exponential(a, skip_below=max(1e-13, 10.0 * floor))
        return EquilibriumRecord(a, fit.amplitude, fit.rate, fit.residual, budget, floor)
    except FitError as exc:
        return EquilibriumRecord(a, 0.0, 0.0, float("nan"), budget, floor, note=f"degenerate: {exc}")
