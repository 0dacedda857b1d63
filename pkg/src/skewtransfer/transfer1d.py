"""The one-dimensional transfer operator and its Ulam discretization."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .branch_maps import PiecewiseMap
from .errors import ContractViolation, ConvergenceError, SkewTransferError

DENSE_EIG_CEILING = 2048
BRANCH_BLOCK = 1024


@dataclass
class GridDensity:
    """Step function on the uniform grid of [0, 1], constant on ``[j/n, (j+1)/n)``."""

    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or self.values.size == 0:
            raise ValueError("density values must be a non-empty 1-D array")

    @property
    def n_bins(self) -> int:
        return self.values.size

    @property
    def integral(self) -> float:
        return float(self.values.mean())

    def is_probability(self, tol: float = 1e-9) -> bool:
        return bool(np.all(self.values >= 0) and abs(self.integral - 1.0) <= tol)

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) / self.n_bins

    def __call__(self, x):
        j = np.clip(np.floor(np.asarray(x, dtype=float) * self.n_bins).astype(np.int64), 0, self.n_bins - 1)
        return self.values[j]


def variation(h: GridDensity) -> float:
    return float(np.abs(np.diff(h.values)).sum())


def bv_norm(h: GridDensity) -> float:
    return float(np.abs(h.values).mean()) + variation(h)


def l1_distance(h: GridDensity, func: Callable, subsamples: int = 64) -> float:
    """Integral of ``|h - func|`` by a midpoint rule with ``subsamples`` nodes per bin."""
    n = h.n_bins
    offs = (np.arange(subsamples) + 0.5) / subsamples
    x = ((np.arange(n)[:, None] + offs[None, :]) / n).ravel()
    diff = np.abs(np.repeat(h.values, subsamples) - func(x))
    return float(diff.mean())


# -- pointwise operator -----------------------------------------------------


class PointwiseValue(NamedTuple):
    value: float
    error_bound: float
    n_branches: int


def _as_vectorized(h):
    def call(x):
        out = h(x)
        if np.ndim(out) == 0:
            return np.vectorize(h, otypes=[float])(x)
        return np.asarray(out, dtype=float)

    return call


def transfer_pointwise(
    fmap: PiecewiseMap, h, y: float, tail_tol: float = 1e-6, h_sup: Optional[float] = None
) -> PointwiseValue:
    """Evaluate ``(P_f h)(y) = sum_i h(f_i^-1 y) g(f_i^-1 y) 1[y in f_i(I_i)]``.

    The branch sum is cut at the first ``N`` with ``h_sup * tail_slope_sum(N) <= tail_tol``.
    When ``h_sup`` is not given it is estimated from a 4097-point sample of ``h``.
    """
    if not 0.0 < y < 1.0:
        raise ValueError(f"y={y!r} must lie in (0, 1)")
    if tail_tol <= 0:
        raise ValueError("tail_tol must be positive")
    hv = _as_vectorized(h)
    if h_sup is None:
        h_sup = float(np.max(np.abs(hv(np.linspace(0.0, 1.0, 4097)[1:-1]))))
    if not math.isfinite(h_sup):
        raise ContractViolation("transfer_pointwise needs a bounded density")
    n = fmap.truncation_index(tail_tol / max(h_sup, 1e-300))
    total = 0.0
    for start in range(1, n + 1, 1 << 16):
        i = np.arange(start, min(start + (1 << 16), n + 1), dtype=np.int64)
        hit = (fmap.image_left(i) < y) & (y < fmap.image_right(i))
        i = i[hit]
        if i.size == 0:
            continue
        x = fmap.inverse(i, np.full(i.shape, y))
        total += float(np.sum(hv(x) / np.abs(fmap.derivative(i, x))))
    bound = h_sup * fmap.tail_slope_sum(n) if not fmap.is_finite or n < fmap.declared_count else 0.0
    return PointwiseValue(total, float(bound), int(n))


# -- Ulam matrix ------------------------------------------------------------


@dataclass
class UlamMatrix:
    """Row-stochastic Ulam matrix; ``M[i, j]`` is the mass flow from bin i to bin j."""

    matrix: sp.csr_matrix
    map_name: str
    n_branches: int
    redistributed_mass: float
    meta: dict = field(default_factory=dict)

    @property
    def n_bins(self) -> int:
        return self.matrix.shape[0]

    def act(self, values: np.ndarray) -> np.ndarray:
        """Row-vector action ``values @ M``."""
        return self.matrix.T @ values

    def apply(self, h: GridDensity, n: int = 1) -> GridDensity:
        v = h.values
        for _ in range(n):
            v = self.act(v)
        return GridDensity(v)


def ulam_branch_count(fmap: PiecewiseMap, tail_tol: float, cap: int = 10**7) -> int:
    """Branches retained for assembly.

    Finite families keep every branch.  Countable families keep branches
    until a whole block of consecutive branches is shorter than ``tail_tol``
    (lengths of the shipped families decrease eventually) or the remaining
    tail is shorter than ``tail_tol``.
    """
    if fmap.is_finite:
        return fmap.declared_count
    start = 1
    while start < cap:
        i = np.arange(start, start + BRANCH_BLOCK, dtype=np.int64)
        lengths = fmap.right(i) - fmap.left(i)
        if fmap.tail_length(start - 1) <= tail_tol:
            return start - 1
        if np.all(lengths <= tail_tol):
            keep = np.nonzero(lengths > tail_tol)[0]
            return start - 1 + (int(keep[-1]) + 1 if keep.size else 0)
        start += BRANCH_BLOCK
    return cap


def _single_bin_block(fmap, idx, src, n, edges):
    """Branches contained in one source bin: one dense row contribution each."""
    lo = fmap.image_left(idx)[:, None]
    hi = fmap.image_right(idx)[:, None]
    ycl = np.clip(edges[None, :], lo, hi)
    xs = fmap.inverse(idx[:, None], ycl)
    rows = np.abs(np.diff(xs, axis=1)) * n
    # branches arrive sorted by source bin within a block for the shipped
    # families; group contiguous runs so each run is summed in index order
    change = np.nonzero(np.diff(src))[0] + 1
    starts = np.concatenate([[0], change])
    summed = np.add.reduceat(rows, starts, axis=0)
    r, c = np.nonzero(summed)
    return src[starts][r], c, summed[r, c]


def _multi_bin_branch(fmap, i, n, edges):
    """Exact interval algebra for a branch crossing source-bin edges."""
    a = float(fmap.left(np.asarray(i)))
    b = float(fmap.right(np.asarray(i)))
    lo = float(fmap.image_left(np.asarray(i)))
    hi = float(fmap.image_right(np.asarray(i)))
    src_cut = edges[(edges > a) & (edges < b)]
    tgt = edges[(edges > lo) & (edges < hi)]
    tgt_cut = fmap.inverse(np.full(tgt.shape, i), tgt)
    xs = np.unique(np.concatenate([[a, b], src_cut, tgt_cut]))
    xs = xs[(xs >= a) & (xs <= b)]
    w = np.diff(xs)
    mid = 0.5 * (xs[1:] + xs[:-1])
    keep = w > 0
    w, mid = w[keep], mid[keep]
    s = np.clip(np.floor(mid * n).astype(np.int64), 0, n - 1)
    y = fmap.forward(np.full(mid.shape, i), mid)
    t = np.clip(np.floor(y * n).astype(np.int64), 0, n - 1)
    return s, t, w * n


def _assemble_block(fmap, idx, n, edges):
    a = fmap.left(idx)
    b = fmap.right(idx)
    ka = np.floor(a * n).astype(np.int64)
    kb = np.ceil(b * n).astype(np.int64) - 1
    ka = np.clip(ka, 0, n - 1)
    kb = np.clip(kb, 0, n - 1)
    single = ka == kb
    parts = []
    if np.any(single):
        parts.append(_single_bin_block(fmap, idx[single], ka[single], n, edges))
    for i in idx[~single]:
        parts.append(_multi_bin_branch(fmap, int(i), n, edges))
    if not parts:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, np.zeros(0)
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(3))


def build_ulam(fmap: PiecewiseMap, n_bins: int, tail_tol: float = 1e-8, threads: int = 1) -> UlamMatrix:
    """Assemble the Ulam matrix branch by branch from exact branch inverses.

    Rows that miss mass (untraversed tail branches) are rescaled to sum to
    one; the total rescaled mass, in units of Lebesgue measure, is reported
    as ``redistributed_mass``.  Rows that receive nothing copy the nearest
    non-empty row.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    n = int(n_bins)
    edges = np.arange(n + 1) / n
    n_branches = ulam_branch_count(fmap, tail_tol)
    blocks = [np.arange(s, min(s + BRANCH_BLOCK, n_branches + 1), dtype=np.int64)
              for s in range(1, n_branches + 1, BRANCH_BLOCK)]

    def work(idx):
        return _assemble_block(fmap, idx, n, edges)

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, blocks))
    else:
        results = [work(idx) for idx in blocks]
    rows = np.concatenate([r[0] for r in results]) if results else np.zeros(0, dtype=np.int64)
    cols = np.concatenate([r[1] for r in results]) if results else np.zeros(0, dtype=np.int64)
    vals = np.concatenate([r[2] for r in results]) if results else np.zeros(0)

    M = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    M.sum_duplicates()
    M.sort_indices()
    row_sum = np.asarray(M.sum(axis=1)).ravel()
    deficit = np.clip(1.0 - row_sum, 0.0, None)
    redistributed = float(np.abs(1.0 - row_sum).sum() / n)

    empty = np.nonzero(row_sum <= 0)[0]
    scale = np.where(row_sum > 0, 1.0 / np.where(row_sum > 0, row_sum, 1.0), 0.0)
    M = sp.diags(scale) @ M
    M = M.tocsr()
    if empty.size:
        filled = np.nonzero(row_sum > 0)[0]
        if filled.size == 0:
            raise SkewTransferError(f"{fmap.name}: no branch mass at {n} bins")
        lil = M.tolil()
        for r in empty:
            src = filled[np.argmin(np.abs(filled - r))]
            lil[r] = M.getrow(src)
        M = lil.tocsr()
    M.sort_indices()
    meta = {"empty_rows": int(empty.size), "max_row_deficit": float(deficit.max(initial=0.0))}
    return UlamMatrix(M, fmap.name, n_branches, redistributed, meta)


@dataclass
class NodalMatrix:
    """Collocation matrix of the transfer operator on continuous piecewise-linear
    functions with nodes ``k/n``; ``(P h)(y_k) = sum_m A[k, m] h(x_m)``.

    Linear functions are reproduced exactly, so eigenvalues whose eigenfunctions
    are smooth survive even when they sit inside the essential spectrum of the
    operator on BV (where step-function Ulam matrices cannot see them).
    """

    matrix: sp.csr_matrix
    map_name: str
    n_branches: int
    tail_weight: float

    @property
    def n_bins(self) -> int:
        return self.matrix.shape[0] - 1


def build_nodal(fmap: PiecewiseMap, n_bins: int, tail_tol: float = 1e-8, max_branches: int = 4096) -> NodalMatrix:
    """Assemble the nodal collocation matrix.

    Branches beyond ``min(truncation index, max_branches)`` are lumped onto
    node 0 with the weight ``tail_slope_sum(N)``; all shipped countable
    families accumulate at 0 or have negligible tails there.
    """
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    n = int(n_bins)
    y = np.arange(n + 1) / n
    try:
        N = fmap.truncation_index(tail_tol)
    except SkewTransferError:
        N = max_branches
    N = min(N, max_branches) if not fmap.is_finite else fmap.declared_count
    rows, cols, vals = [], [], []
    for start in range(1, N + 1, 256):
        idx = np.arange(start, min(start + 256, N + 1), dtype=np.int64)[:, None]
        inside = (fmap.image_left(idx) <= y[None, :]) & (y[None, :] <= fmap.image_right(idx))
        bi, k = np.nonzero(inside)
        i = idx[bi, 0]
        x = fmap.inverse(i, y[k])
        g = 1.0 / np.abs(fmap.derivative(i, x))
        m = np.clip(np.floor(x * n).astype(np.int64), 0, n - 1)
        t = x * n - m
        rows += [k, k]
        cols += [m, m + 1]
        vals += [g * (1.0 - t), g * t]
    tail = 0.0 if (fmap.is_finite and N >= fmap.declared_count) else float(fmap.tail_slope_sum(N))
    if tail > 0:
        rows.append(np.arange(n + 1))
        cols.append(np.zeros(n + 1, dtype=np.int64))
        vals.append(np.full(n + 1, tail))
    A = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n + 1, n + 1)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return NodalMatrix(A, fmap.name, int(N), tail)


def stationary_density(M: UlamMatrix, tol: float = 1e-12, max_iter: int = 100000) -> GridDensity:
    """Power iteration ``d <- d M`` from the uniform density.

    The residual is the L1 norm ``mean |dM - d|``.
    """
    n = M.n_bins
    d = np.ones(n)
    history = []
    MT = M.matrix.T.tocsr()
    for it in range(1, max_iter + 1):
        nxt = MT @ d
        nxt *= n / nxt.sum()
        res = float(np.abs(nxt - d).mean())
        history.append(res)
        d = nxt
        if res <= tol:
            out = GridDensity(d, {"iterations": it, "residual": res, "history": history})
            return out
    raise ConvergenceError(
        f"power iteration did not reach {tol:g} in {max_iter} steps", residual=history[-1], history=history
    )


def spectral_gap_estimate(M, dense_ceiling: int = DENSE_EIG_CEILING):
    """Modulus of the second eigenvalue of an Ulam or nodal matrix.

    The leading (Perron) eigenvalue is the one closest to 1; the report
    lists the leading moduli and the solver used.
    """
    n = M.matrix.shape[0]
    if n <= dense_ceiling:
        ev = np.linalg.eigvals(M.matrix.toarray())
        method = "dense"
    else:
        v0 = np.linspace(1.0, 2.0, n)
        try:
            ev = spla.eigs(M.matrix.tocsc(), k=6, which="LM", v0=v0, return_eigenvectors=False,
                           tol=1e-12, maxiter=20 * n)
        except spla.ArpackNoConvergence as exc:  # pragma: no cover - solver failure
            raise ConvergenceError(f"ARPACK failed: {exc}") from exc
        method = "arnoldi"
    mods = np.sort(np.abs(ev))[::-1]
    # drop the Perron eigenvalue 1 (the one closest to 1)
    k = int(np.argmin(np.abs(ev - 1.0)))
    rest = np.delete(ev, k)
    lam2 = float(np.max(np.abs(rest))) if rest.size else 0.0
    kind = "nodal" if isinstance(M, NodalMatrix) else "ulam"
    return lam2, {"method": method, "discretization": kind, "size": n, "leading_moduli": mods[:6].tolist()}


# -- Lasota-Yorke probe -----------------------------------------------------


@dataclass
class LYProbeReport:
    n: int
    samples: np.ndarray  # columns: |h|_v, |h|_1, |P^n h|_v
    r_grid: np.ndarray
    c_frontier: np.ndarray
    r: float
    C: float
    note: str = "empirical envelope over a random sample; evidence, not a proof"

    def constant_at(self, r: float) -> float:
        hv, h1, phv = self.samples.T
        return float(np.max(np.clip((phv - r**self.n * hv) / h1, 0.0, None)))


def random_step_density(rng: np.random.Generator, n_bins: int) -> GridDensity:
    k = int(rng.integers(1, 21))
    cuts = np.sort(rng.uniform(0.0, 1.0, size=k))
    levels = rng.uniform(-1.0, 1.0, size=k + 1)
    mids = (np.arange(n_bins) + 0.5) / n_bins
    return GridDensity(levels[np.searchsorted(cuts, mids)])


def ly_probe(fmap: PiecewiseMap, n: int, trials: int = 100, seed: int = 0, n_bins: int = 1024,
             ulam: Optional[UlamMatrix] = None) -> LYProbeReport:
    """Sample ``(|h|_v, |h|_1, |P^n h|_v)`` and fit the smallest envelope
    ``|P^n h|_v <= r^n |h|_v + C |h|_1``.

    For each ``r`` on a grid, ``C(r)`` is the smallest constant valid for the
    sample.  The reported pair minimises the summed envelope over the sample.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    M = ulam if ulam is not None else build_ulam(fmap, n_bins)
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(trials):
        h = random_step_density(rng, M.n_bins)
        ph = M.apply(h, n)
        rows.append((bv_norm(h), float(np.abs(h.values).mean()), bv_norm(ph)))
    samples = np.asarray(rows)
    hv, h1, phv = samples.T
    r_grid = np.linspace(0.0, 1.5, 301)
    c = np.array([np.max(np.clip((phv - r**n * hv) / h1, 0.0, None)) for r in r_grid])
    cost = np.array([np.sum(r**n * hv + ci * h1) for r, ci in zip(r_grid, c)])
    k = int(np.argmin(cost))
    return LYProbeReport(n, samples, r_grid, c, float(r_grid[k]), float(c[k]))
