"""Countable-branch interval maps.

A :class:`PiecewiseMap` is described by vectorized evaluators of the branch
index ``i`` (1-based) and the point ``x``; nothing is stored per branch, so
countably infinite families cost nothing until a branch is asked for.  Tail
bounds are part of the description because every truncated branch sum in the
package is controlled by them.

Conventions
-----------
* ``locate`` returns 0 for points on the (measure-zero) complement of the
  open branch intervals; partition endpoints are such points.
* ``tail_slope_sum(N)`` is an upper bound for ``sum_{i>N} sup_{I_i} 1/|f_i'|``.
  For increasing convex branches this is ``sum_{i>N} 1/f_i'(a_i)``.
* ``tail_length(N)`` is an upper bound for ``sum_{i>N} (b_i - a_i)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConstructionError, DomainError, GapError, ImageRangeError

ArrayFn = Callable[..., np.ndarray]

CONVEXITY_TOL = 1e-9


@dataclass(frozen=True)
class BranchDescriptor:
    """One monotone branch ``f_i`` on the open interval ``(left, right)``."""

    index: int
    left: float
    right: float
    forward: Callable[[float], float]
    derivative: Callable[[float], float]
    inverse: Callable[[float], float]
    image_left: float
    image_right: float
    slope_inf: float
    increasing: bool

    @property
    def length(self) -> float:
        return self.right - self.left

    def contains(self, x: float) -> bool:
        return self.left < x < self.right

    def in_image(self, y: float) -> bool:
        return self.image_left < y < self.image_right


@dataclass(frozen=True)
class PiecewiseMap:
    """A countable family of monotone branches on disjoint subintervals of [0, 1].

    All evaluators are vectorized: ``left(i)``, ``forward(i, x)`` etc. accept
    numpy arrays of branch indices and points and broadcast.
    """

    name: str
    left: ArrayFn
    right: ArrayFn
    forward: ArrayFn
    derivative: ArrayFn
    inverse: ArrayFn
    image_left: ArrayFn
    image_right: ArrayFn
    slope_inf: ArrayFn
    increasing: ArrayFn
    locate: ArrayFn
    tail_slope_sum: Callable[[int], float]
    tail_length: Callable[[int], float]
    declared_count: Optional[int] = None
    # None = not declared; the f'(0) > 1 condition is then left unchecked
    zero_is_accumulation: Optional[bool] = None
    params: dict = field(default_factory=dict)

    @property
    def is_finite(self) -> bool:
        return self.declared_count is not None

    def branch(self, i: int) -> BranchDescriptor:
        if i < 1 or (self.declared_count is not None and i > self.declared_count):
            raise IndexError(f"{self.name}: no branch {i}")
        idx = np.asarray(i)
        lo, hi = float(self.left(idx)), float(self.right(idx))
        return BranchDescriptor(
            index=i,
            left=lo,
            right=hi,
            forward=lambda x: float(self.forward(idx, np.asarray(x, dtype=float))),
            derivative=lambda x: float(self.derivative(idx, np.asarray(x, dtype=float))),
            inverse=lambda y: float(self.inverse(idx, np.asarray(y, dtype=float))),
            image_left=float(self.image_left(idx)),
            image_right=float(self.image_right(idx)),
            slope_inf=float(self.slope_inf(idx)),
            increasing=bool(self.increasing(idx)),
        )

    def indices(self, n: int) -> np.ndarray:
        """The first ``n`` branch indices (fewer for a finite family)."""
        if self.declared_count is not None:
            n = min(n, self.declared_count)
        return np.arange(1, n + 1, dtype=np.int64)

    def truncation_index(self, tol: float, cap: int = 10**8) -> int:
        """Smallest N with ``tail_slope_sum(N) <= tol`` (or the branch count)."""
        if self.declared_count is not None:
            return self.declared_count
        if self.tail_slope_sum(cap) > tol:
            raise ConstructionError(
                f"{self.name}: tail bound {self.tail_slope_sum(cap):.3g} still above {tol:g} at N={cap}"
            )
        lo, hi = 0, 1
        while self.tail_slope_sum(hi) > tol:
            lo, hi = hi, min(2 * hi, cap)
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if self.tail_slope_sum(mid) > tol:
                lo = mid
            else:
                hi = mid
        return hi

    def apply(self, x) -> np.ndarray:
        """Vectorized f(x); NaN on gap points."""
        x = np.asarray(x, dtype=float)
        i = self.locate(x)
        out = np.full(x.shape, np.nan)
        ok = i > 0
        out[ok] = self.forward(i[ok], x[ok])
        return out

    def g(self, x) -> np.ndarray:
        """Vectorized 1/|f'(x)|, zero on gap points."""
        x = np.asarray(x, dtype=float)
        i = self.locate(x)
        out = np.zeros(x.shape)
        ok = i > 0
        out[ok] = 1.0 / np.abs(self.derivative(i[ok], x[ok]))
        return out


@dataclass
class ClassReport:
    is_T: bool
    is_TE: bool
    beta: float
    witnesses: list
    checked_branches: int
    iterate: int = 1

    def witness(self, label: str):
        for name, value in self.witnesses:
            if name == label:
                return value
        raise KeyError(label)


# -- scalar front door ------------------------------------------------------


def _check_unit(x: float) -> None:
    if not (0.0 <= x <= 1.0):
        raise DomainError(f"x={x!r} is outside [0, 1]")


def branch_at(fmap: PiecewiseMap, x: float) -> Optional[int]:
    """Index of the branch whose open interval contains ``x``; None on a gap."""
    _check_unit(x)
    i = int(fmap.locate(np.asarray([x], dtype=float))[0])
    return i if i > 0 else None


def _branch_or_gap(fmap: PiecewiseMap, x: float) -> int:
    i = branch_at(fmap, x)
    if i is None:
        raise GapError(f"{fmap.name}: x={x!r} is not interior to any branch")
    return i


def eval_map(fmap: PiecewiseMap, x: float) -> float:
    i = _branch_or_gap(fmap, x)
    return float(fmap.forward(np.asarray(i), np.asarray(x, dtype=float)))


def eval_derivative(fmap: PiecewiseMap, x: float) -> float:
    i = _branch_or_gap(fmap, x)
    return float(fmap.derivative(np.asarray(i), np.asarray(x, dtype=float)))


def eval_inverse(fmap: PiecewiseMap, i: int, y: float) -> float:
    b = fmap.branch(i)
    if not b.in_image(y):
        raise ImageRangeError(
            f"{fmap.name}: y={y!r} outside image ({b.image_left}, {b.image_right}) of branch {i}"
        )
    return b.inverse(y)


def iterate_with_derivative(fmap: PiecewiseMap, x, k: int):
    """Return ``(f^k(x), (f^k)'(x))`` vectorized; NaN wherever an orbit hits a gap."""
    y = np.array(x, dtype=float, copy=True)
    d = np.ones_like(y)
    for _ in range(k):
        i = fmap.locate(np.where(np.isnan(y), 0.0, y))
        bad = (i == 0) | np.isnan(y)
        ii = np.where(bad, 1, i)
        yy = np.where(bad, 0.5, y)
        d = np.where(bad, np.nan, d * fmap.derivative(ii, yy))
        y = np.where(bad, np.nan, fmap.forward(ii, yy))
    return y, d


# -- class membership -------------------------------------------------------


def _branch_samples(a: float, b: float, n: int) -> np.ndarray:
    width = b - a
    inner = a + width * (np.arange(n) + 0.5) / n
    edge = width * 1e-9
    return np.concatenate([[a + edge], inner, [b - edge]])


def check_class(
    fmap: PiecewiseMap, n_probe: int = 50, samples_per_branch: int = 64, iterate: int = 1
) -> ClassReport:
    """Probe membership in the convex class T and the expanding class T_E.

    Checks run over the first ``n_probe`` branches on sampled points.

    ``is_T`` always refers to the map itself; ``is_TE`` and ``beta`` refer to
    the ``iterate``-fold composition.
    """
    if n_probe < 1:
        raise ValueError("n_probe must be >= 1")
    idx = fmap.indices(n_probe)
    n = len(idx)
    witnesses = []

    lefts, rights = fmap.left(idx).astype(float), fmap.right(idx).astype(float)
    lengths = rights - lefts
    coverage = float(lengths.sum() + fmap.tail_length(n))
    coverage_ok = abs(coverage - 1.0) <= 1e-9
    witnesses.append(("partition_coverage", coverage))

    order = np.argsort(lefts)
    overlap = float(np.max(lefts[order][1:] - rights[order][:-1], initial=0.0))
    disjoint = bool(np.all(lefts[order][1:] >= rights[order][:-1] - 1e-15))
    witnesses.append(("disjoint", disjoint))

    monotone = increasing = convex = vanishing = True
    worst_second_diff = np.inf
    worst_left_value = 0.0
    g_sup_sampled = 0.0
    for i, a, b in zip(idx, lefts, rights):
        xs = _branch_samples(a, b, samples_per_branch)
        ii = np.full(xs.shape, i)
        der = fmap.derivative(ii, xs)
        signs = np.sign(der)
        if not (np.all(signs > 0) or np.all(signs < 0)):
            monotone = False
        if not np.all(signs > 0):
            increasing = False
        g_sup_sampled = max(g_sup_sampled, float(np.max(1.0 / np.abs(der))))
        h = (b - a) / (4.0 * samples_per_branch)
        mid = xs[1:-1]
        mid = mid[(mid - h > a) & (mid + h < b)]
        if mid.size:
            jj = np.full(mid.shape, i)
            sd = fmap.forward(jj, mid + h) - 2.0 * fmap.forward(jj, mid) + fmap.forward(jj, mid - h)
            worst_second_diff = min(worst_second_diff, float(sd.min()))
        val = float(fmap.forward(np.asarray(i), np.asarray(a + (b - a) * 1e-10)))
        worst_left_value = max(worst_left_value, abs(val))
    convex = worst_second_diff >= -CONVEXITY_TOL
    vanishing = increasing and worst_left_value <= 1e-6
    witnesses += [
        ("monotone", monotone),
        ("increasing", increasing),
        ("min_second_difference", worst_second_diff),
        ("max_left_limit", worst_left_value),
    ]

    inv_slopes = 1.0 / fmap.slope_inf(idx).astype(float)
    tails = np.array([fmap.tail_slope_sum(N) for N in (1, max(n // 2, 1), n)], dtype=float)
    tail_monotone = bool(np.all(np.diff(tails) <= 1e-15))
    slope_sum = float(inv_slopes.sum() + fmap.tail_slope_sum(n))
    summable = math.isfinite(slope_sum) and tail_monotone
    witnesses.append(("slope_reciprocal_sum", slope_sum))
    witnesses.append(("tail_slope_sum", float(fmap.tail_slope_sum(n))))

    # f'(0) > 1 is only required when 0 is not an accumulation point, and only
    # checkable when the family declares which case it is in
    cond3 = True
    if fmap.zero_is_accumulation is None:
        witnesses.append(("zero_condition", "undeclared"))
    elif fmap.zero_is_accumulation:
        witnesses.append(("zero_condition", "0 is an accumulation point"))
    else:
        i0 = int(fmap.locate(np.asarray([1e-12]))[0])
        slope0 = float(fmap.derivative(np.asarray(i0), np.asarray(1e-12))) if i0 else 0.0
        cond3 = slope0 > 1.0
        witnesses.append(("zero_condition", slope0))

    is_T = bool(coverage_ok and disjoint and increasing and convex and vanishing and summable and cond3)

    if iterate == 1:
        beta = max(g_sup_sampled, float(inv_slopes.max()), float(fmap.tail_slope_sum(n)))
    else:
        xs = np.concatenate([_branch_samples(a, b, samples_per_branch) for a, b in zip(lefts, rights)])
        _, d = iterate_with_derivative(fmap, xs, iterate)
        gk = 1.0 / np.abs(d[np.isfinite(d)])
        # orbit pieces outside the probed branches: bounded by tail * (sup g)^(k-1)
        tail_bound = fmap.tail_slope_sum(n) * max(1.0, g_sup_sampled) ** (iterate - 1)
        beta = max(float(gk.max()), float(tail_bound))
    witnesses.append((f"sup_g_iterate_{iterate}", beta))
    is_TE = bool(coverage_ok and disjoint and monotone and beta < 1.0)
    return ClassReport(is_T=is_T, is_TE=is_TE, beta=beta, witnesses=witnesses,
                       checked_branches=n, iterate=iterate)


# -- families ---------------------------------------------------------------


def _const(value):
    return lambda i: np.full(np.shape(i), value, dtype=float)


def _pow2(i):
    return np.ldexp(1.0, np.asarray(i, dtype=np.int64))


def _dyadic_locate(x):
    """Index i with 2^-i < x < 2^(1-i); 0 on endpoints and outside (0, 1)."""
    x = np.asarray(x, dtype=float)
    m, e = np.frexp(x)
    i = (1 - e).astype(np.int64)
    bad = (x <= 0.0) | (x >= 1.0) | (m == 0.5)
    return np.where(bad, 0, i)


def make_dyadic_slopes() -> PiecewiseMap:
    """Full linear branches ``f_i(x) = 2^i x - 1`` on ``(2^-i, 2^(1-i))``."""
    return PiecewiseMap(
        name="dyadic",
        left=lambda i: _pow2(-np.asarray(i)),
        right=lambda i: _pow2(1 - np.asarray(i)),
        forward=lambda i, x: _pow2(i) * x - 1.0,
        derivative=lambda i, x: _pow2(i) * np.ones_like(x, dtype=float),
        inverse=lambda i, y: (y + 1.0) * _pow2(-np.asarray(i)),
        image_left=_const(0.0),
        image_right=_const(1.0),
        slope_inf=lambda i: _pow2(i),
        increasing=lambda i: np.ones(np.shape(i), dtype=bool),
        locate=_dyadic_locate,
        tail_slope_sum=lambda N: math.ldexp(1.0, -N),
        tail_length=lambda N: math.ldexp(1.0, -N),
        zero_is_accumulation=True,
    )


def _gauss_locate(x):
    x = np.asarray(x, dtype=float)
    ok = (x > 0.0) & (x < 1.0)
    xs = np.where(ok, x, 0.5)
    i = np.floor(1.0 / xs).astype(np.int64)
    i = np.maximum(i, 1)
    # repair floating-point rounding of 1/x
    i = np.where(xs <= 1.0 / (i + 1.0), i + 1, i)
    i = np.where(xs >= 1.0 / i, np.maximum(i - 1, 1), i)
    inside = (xs > 1.0 / (i + 1.0)) & (xs < 1.0 / i)
    return np.where(ok & inside, i, 0)


def make_gauss() -> PiecewiseMap:
    """The Gauss map ``f(x) = 1/x - i`` on ``(1/(i+1), 1/i)``."""

    def tail_slope(N):
        # sum_{i>N} sup g_i = sum_{i>N} 1/i^2 <= 1/N  (integral test)
        return 1.0 / N if N >= 1 else math.pi**2 / 6.0

    return PiecewiseMap(
        name="gauss",
        left=lambda i: 1.0 / (np.asarray(i, dtype=float) + 1.0),
        right=lambda i: 1.0 / np.asarray(i, dtype=float),
        forward=lambda i, x: 1.0 / x - i,
        derivative=lambda i, x: -1.0 / (x * x),
        inverse=lambda i, y: 1.0 / (y + i),
        image_left=_const(0.0),
        image_right=_const(1.0),
        slope_inf=lambda i: np.asarray(i, dtype=float) ** 2,
        increasing=lambda i: np.zeros(np.shape(i), dtype=bool),
        locate=_gauss_locate,
        tail_slope_sum=tail_slope,
        tail_length=lambda N: 1.0 / (N + 1.0),
        zero_is_accumulation=True,
    )


def gauss_density(x):
    """Closed-form invariant density of the Gauss map."""
    return 1.0 / ((1.0 + np.asarray(x, dtype=float)) * math.log(2.0))


def _luroth_from_tables(name, a, t, finite, params):
    """Lüroth branches (t_{i+1}, t_i] with ``f = (t_i - x)/a_i``.

    ``a(i)`` and ``t(i)`` are vectorized length and tail evaluators.
    """
    count = params.get("count") if finite else None

    if finite:
        tails_desc = np.asarray([t(k) for k in range(1, count + 2)], dtype=float)
    else:
        # tails decrease to 0; tabulate until they underflow any sensible scale
        ks = np.arange(1, 4096, dtype=np.int64)
        tails_desc = np.asarray(t(ks), dtype=float)
    tails_asc = tails_desc[::-1]

    def locate(x):
        x = np.asarray(x, dtype=float)
        # position among ascending tails -> branch with t_{i+1} < x < t_i
        pos = np.searchsorted(tails_asc, x, side="left")
        i = len(tails_asc) - pos
        hit = (pos < len(tails_asc)) & (tails_asc[np.minimum(pos, len(tails_asc) - 1)] == x)
        bad = (x <= 0.0) | (x >= 1.0) | hit | (i < 1) | (i >= len(tails_desc))
        return np.where(bad, 0, i).astype(np.int64)

    return PiecewiseMap(
        name=name,
        left=lambda i: np.asarray(t(np.asarray(i) + 1), dtype=float),
        right=lambda i: np.asarray(t(i), dtype=float),
        forward=lambda i, x: (t(i) - x) / a(i),
        derivative=lambda i, x: -np.ones_like(x, dtype=float) / a(i),
        inverse=lambda i, y: t(i) - a(i) * y,
        image_left=_const(0.0),
        image_right=_const(1.0),
        slope_inf=lambda i: 1.0 / np.asarray(a(i), dtype=float),
        increasing=lambda i: np.zeros(np.shape(i), dtype=bool),
        locate=locate,
        tail_slope_sum=lambda N: float(t(N + 1)) if (count is None or N < count) else 0.0,
        tail_length=lambda N: float(t(N + 1)) if (count is None or N < count) else 0.0,
        declared_count=count,
        zero_is_accumulation=not finite,
        params=params,
    )


def make_luroth(lengths=None, tails=None, ratio: Optional[float] = None) -> PiecewiseMap:
    """A P-Lüroth map, intervals ordered from right to left.

    * ``make_luroth()`` -- ``a_i = 2^-i``.
    * ``make_luroth(ratio=r)`` -- geometric ``a_i = (1 - r) r^(i-1)``.
    * ``make_luroth([a_1, ..., a_n])`` -- finite partition, must sum to 1.
    * ``make_luroth(a, tails=t)`` -- callables ``i -> a_i`` and ``i -> sum_{k>=i} a_k``.
    """
    if lengths is None:
        r = 0.5 if ratio is None else float(ratio)
        if not 0.0 < r < 1.0:
            raise ConstructionError(f"geometric ratio must lie in (0, 1), got {r}")

        def a(i):
            return (1.0 - r) * r ** (np.asarray(i, dtype=float) - 1.0)

        def t(i):
            return r ** (np.asarray(i, dtype=float) - 1.0)

        return _luroth_from_tables("luroth", a, t, False, {"ratio": r})

    if callable(lengths):
        if tails is None:
            raise ConstructionError("a callable length sequence needs a matching tails callable")
        probe = np.asarray(lengths(np.arange(1, 65)), dtype=float)
        tprobe = np.asarray(tails(np.arange(1, 66)), dtype=float)
        if np.any(probe <= 0) or not np.all(np.isfinite(probe)):
            raise ConstructionError("Lüroth lengths must be positive and finite")
        if abs(tprobe[0] - 1.0) > 1e-9:
            raise ConstructionError(f"Lüroth lengths must sum to 1, tails(1)={tprobe[0]}")
        if np.max(np.abs(tprobe[:-1] - tprobe[1:] - probe)) > 1e-12:
            raise ConstructionError("tails(i) - tails(i+1) must equal lengths(i)")
        return _luroth_from_tables("luroth", lengths, tails, False, {})

    seq = np.asarray(list(lengths), dtype=float)
    if seq.size == 0 or np.any(seq <= 0) or not np.all(np.isfinite(seq)):
        raise ConstructionError("Lüroth lengths must be positive and finite")
    if abs(seq.sum() - 1.0) > 1e-9:
        raise ConstructionError(f"Lüroth lengths must sum to 1, got {seq.sum()!r}")
    tail_tab = np.concatenate([np.cumsum(seq[::-1])[::-1], [0.0]])
    tail_tab[0] = 1.0
    len_tab = np.concatenate([[np.nan], seq])
    tail_lookup = np.concatenate([[np.nan], tail_tab, [0.0]])

    def a(i):
        return len_tab[np.asarray(i)]

    def t(i):
        return tail_lookup[np.minimum(np.asarray(i), len(tail_lookup) - 1)]

    return _luroth_from_tables("luroth", a, t, True, {"count": int(seq.size)})


def make_slopes2(slow_slopes: Sequence[float] = (0.5,), slow_span: float = 0.25) -> PiecewiseMap:
    """Piecewise convex linear map with finitely many contracting branches.

    Layout (indices in order):

    * ``i = 1``: ``(0, 1/2)`` with ``f = 2x`` (full branch, so ``f'(0) = 2``);
    * ``i = 2 .. s+1``: ``slow_span`` split evenly among the slopes in
      ``slow_slopes``, each ``f_i = k_i (x - a_i)`` (image ``(0, k_i L)``);
    * ``i >= s+2``: full linear branches of length ``r 2^-j`` accumulating at 1,
      with ``r = 1/2 - slow_span``.
    """
    slow = np.asarray(list(slow_slopes), dtype=float)
    s = slow.size
    if s == 0 or np.any(slow <= 0) or np.any(slow >= 1):
        raise ConstructionError("slow slopes must be a non-empty list in (0, 1)")
    if not 0.0 < slow_span < 0.5:
        raise ConstructionError("slow_span must lie in (0, 1/2)")
    L = slow_span / s
    r = 0.5 - slow_span

    def j_of(i):
        return np.asarray(i, dtype=np.int64) - (s + 1)

    def left(i):
        i = np.asarray(i, dtype=np.int64)
        k = np.clip(i - 2, 0, s - 1)
        return np.where(i == 1, 0.0,
                        np.where(i <= s + 1, 0.5 + k * L,
                                 1.0 - r * _pow2(1 - np.maximum(j_of(i), 1)))).astype(float)

    def right(i):
        i = np.asarray(i, dtype=np.int64)
        k = np.clip(i - 2, 0, s - 1)
        return np.where(i == 1, 0.5,
                        np.where(i <= s + 1, 0.5 + (k + 1) * L,
                                 1.0 - r * _pow2(-np.maximum(j_of(i), 1)))).astype(float)

    def slope(i):
        i = np.asarray(i, dtype=np.int64)
        k = np.clip(i - 2, 0, s - 1)
        return np.where(i == 1, 2.0,
                        np.where(i <= s + 1, slow[k],
                                 _pow2(np.clip(j_of(i), 1, 1000)) / r)).astype(float)

    def image_right(i):
        i = np.asarray(i, dtype=np.int64)
        k = np.clip(i - 2, 0, s - 1)
        return np.where((i >= 2) & (i <= s + 1), slow[k] * L, 1.0).astype(float)

    def locate(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape, dtype=np.int64)
        first = (x > 0.0) & (x < 0.5)
        out[first] = 1
        mid = (x > 0.5) & (x < 0.5 + slow_span)
        q = (x[mid] - 0.5) / L
        k = np.floor(q).astype(np.int64)
        out[mid] = np.where(q == k, 0, k + 2)
        tail = (x > 0.5 + slow_span) & (x < 1.0)
        j = _dyadic_locate((1.0 - x[tail]) / r)
        out[tail] = np.where(j > 0, j + s + 1, 0)
        return out

    def tail_sum(N, per_branch_slow, geometric_scale):
        total = 0.0
        if N < 1:
            total += 0.5  # branch 1: length 1/2, reciprocal slope 1/2
        for k in range(max(N, 1) + 1, s + 2):
            total += per_branch_slow(k)
        jn = max(N - (s + 1), 0)
        total += geometric_scale * math.ldexp(1.0, -jn)
        return total

    return PiecewiseMap(
        name="slopes2",
        left=left,
        right=right,
        forward=lambda i, x: slope(i) * (x - left(i)),
        derivative=lambda i, x: slope(i) * np.ones_like(x, dtype=float),
        inverse=lambda i, y: left(i) + y / slope(i),
        image_left=_const(0.0),
        image_right=image_right,
        slope_inf=slope,
        increasing=lambda i: np.ones(np.shape(i), dtype=bool),
        locate=locate,
        tail_slope_sum=lambda N: tail_sum(N, lambda k: 1.0 / slow[k - 2], r),
        tail_length=lambda N: tail_sum(N, lambda k: L, r),
        zero_is_accumulation=False,
        params={"slow_slopes": tuple(slow.tolist()), "slow_span": slow_span},
    )


def make_piecewise_linear(name, lefts, rights, image_starts, image_ends) -> PiecewiseMap:
    """Finite family of affine branches mapping ``(lefts[k], rights[k])`` onto the
    segment from ``image_starts[k]`` to ``image_ends[k]`` (decreasing if start > end)."""
    A = np.asarray(lefts, dtype=float)
    B = np.asarray(rights, dtype=float)
    C = np.asarray(image_starts, dtype=float)
    D = np.asarray(image_ends, dtype=float)
    if not (A.shape == B.shape == C.shape == D.shape) or A.size == 0:
        raise ConstructionError("branch tables must be non-empty and of equal length")
    if np.any(B <= A) or np.any(C == D):
        raise ConstructionError("degenerate branch")
    if np.any(np.minimum(C, D) < 0) or np.any(np.maximum(C, D) > 1):
        raise ConstructionError("branch images must lie in [0, 1]")
    order = np.argsort(A)
    if np.any(A[order][1:] < B[order][:-1]):
        raise ConstructionError("branch intervals overlap")
    S = (D - C) / (B - A)
    n = A.size

    def k(i):
        return np.asarray(i, dtype=np.int64) - 1

    def locate(x):
        x = np.asarray(x, dtype=float)
        pos = np.searchsorted(A[order], x, side="left") - 1
        pos = np.clip(pos, 0, n - 1)
        cand = order[pos]
        inside = (x > A[cand]) & (x < B[cand])
        return np.where(inside, cand + 1, 0).astype(np.int64)

    return PiecewiseMap(
        name=name,
        left=lambda i: A[k(i)],
        right=lambda i: B[k(i)],
        forward=lambda i, x: C[k(i)] + (x - A[k(i)]) * S[k(i)],
        derivative=lambda i, x: S[k(i)] * np.ones_like(x, dtype=float),
        inverse=lambda i, y: A[k(i)] + (y - C[k(i)]) / S[k(i)],
        image_left=lambda i: np.minimum(C[k(i)], D[k(i)]),
        image_right=lambda i: np.maximum(C[k(i)], D[k(i)]),
        slope_inf=lambda i: np.abs(S[k(i)]),
        increasing=lambda i: S[k(i)] > 0,
        locate=locate,
        tail_slope_sum=lambda N: 0.0 if N >= n else float(np.sum(1.0 / np.abs(S[N:]))),
        tail_length=lambda N: 0.0 if N >= n else float(np.sum(B[N:] - A[N:])),
        declared_count=n,
        zero_is_accumulation=False,
    )


FAMILIES = {
    "dyadic": make_dyadic_slopes,
    "gauss": make_gauss,
    "luroth": make_luroth,
    "slopes2": make_slopes2,
}
