"""Decay of correlations: operator route and Monte Carlo cross-check."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import FitError
from .fitting import ExpFit, fit_exponential
from .skew import (DEFAULT_ATOM_CAP, DEFAULT_MERGE_EPS, DEFAULT_TAIL_TOL, LeafPath, SkewSystem,
                   _drop_zeros, push_leafpath)

__all__ = [
    "Observable", "CorrelationRecord", "observable_measure", "correlation_sequence",
    "birkhoff_correlation", "fit_exponential", "ExpFit", "check_observable",
    "coordinate_y", "constant",
]


@dataclass(frozen=True)
class Observable:
    """A Lipschitz function ``u(x, y)`` on the unit square, vectorized."""

    eval: Callable
    lip_const: float
    sup_norm: float
    name: str = "u"

    @property
    def lip_norm(self) -> float:
        return self.sup_norm + self.lip_const

    def __call__(self, x, y):
        return self.eval(x, y)


def coordinate_y() -> Observable:
    return Observable(lambda x, y: np.asarray(y, dtype=float) + 0.0 * np.asarray(x, dtype=float), 1.0, 1.0, "y")


def constant(c: float) -> Observable:
    return Observable(lambda x, y: np.full(np.broadcast(np.asarray(x), np.asarray(y)).shape, float(c)),
                      0.0, abs(c), f"const({c:g})")


def check_observable(u: Observable, n_pairs: int = 1000, seed: int = 0) -> float:
    """Worst sampled excess of ``|u(p) - u(q)| - L(u) (|dx| + |dy|)``."""
    rng = np.random.default_rng(seed)
    p = rng.uniform(size=(n_pairs, 2))
    q = rng.uniform(size=(n_pairs, 2))
    lhs = np.abs(u(p[:, 0], p[:, 1]) - u(q[:, 0], q[:, 1]))
    rhs = u.lip_const * np.abs(p - q).sum(axis=1)
    return float((lhs - rhs).max())


@dataclass
class CorrelationRecord:
    values: np.ndarray
    stderr: np.ndarray
    amplitude: float
    rate: float
    residual: float
    method: str
    meta: dict = field(default_factory=dict)

    @property
    def envelope_amplitude(self) -> float:
        """Smallest ``C`` with ``values[n] <= C rate^n`` for every computed ``n``."""
        if self.rate <= 0:
            return float("inf") if np.any(self.values > 0) else 0.0
        n = np.arange(self.values.size)
        return float(np.max(self.values / self.rate**n))


def observable_measure(P0: LeafPath, u: Observable) -> LeafPath:
    """Reweight every atom ``(y, w)`` on leaf ``gamma`` to ``(y, w u(gamma, y))``."""
    x = np.repeat(P0.midpoints(), np.diff(P0.ptr))
    w = P0.weights * u(x, P0.positions)
    ptr, xs, ws = _drop_zeros(P0.ptr.copy(), P0.positions.copy(), w)
    return LeafPath(ptr, xs, ws, {"tag": f"{u.name}*{P0.tag}"})


def _fit_or_degenerate(values, skip_below):
    try:
        return fit_exponential(values, skip_below=skip_below), ""
    except FitError as exc:
        return ExpFit(0.0, 0.0, float("nan")), f"degenerate fit: {exc}"


def correlation_sequence(S: SkewSystem, P0: LeafPath, u1: Observable, u2: Observable, n_max: int = 15,
                         tail_tol: float = DEFAULT_TAIL_TOL, merge_eps: float = DEFAULT_MERGE_EPS,
                         atom_cap: int = DEFAULT_ATOM_CAP, skip_below: float = 1e-13) -> CorrelationRecord:
    """``C_n = |int u1 d(F^n (u2 mu0)) - int u1 d mu0 * int u2 d mu0|`` for ``n <= n_max``.

    ``P0`` is rescaled to unit mass first.  The product term uses the current
    mass of ``F^n (u2 mu0)``, which equals ``int u2 d mu0`` for the exact
    operator and cancels the mass dropped with truncated branches.
    """
    mass0 = P0.total_mass()
    if mass0 <= 0:
        raise ValueError("P0 must have positive mass")
    P0 = P0.scaled(1.0 / mass0)
    Q = observable_measure(P0, u2)
    mean2 = Q.total_mass()
    mean1 = P0.integrate(u1)
    values = []
    budget = 0.0
    for n in range(n_max + 1):
        if n:
            Q = push_leafpath(S, Q, tail_tol=tail_tol, merge_eps=merge_eps, atom_cap=atom_cap)
            budget += Q.meta["merge_budget_l1"] * u1.lip_norm
        values.append(abs(Q.integrate(u1) - mean1 * Q.total_mass()))
    values = np.asarray(values)
    fit, note = _fit_or_degenerate(values, skip_below)
    meta = {"mean_u1": mean1, "mean_u2": mean2, "merge_budget": budget, "input_mass": mass0}
    if note:
        meta["note"] = note
    return CorrelationRecord(values, np.zeros_like(values), fit.amplitude, fit.rate, fit.residual,
                             "operator", meta)


def _skew_step(S: SkewSystem, x, y, rng):
    """One vectorized step of ``(x, y) -> (f(x), G(x, y))``.

    Each step replaces the low-order bits that the expansion pushes out of
    the representable range with fresh random ones, so floating-point orbits
    of full-branch maps do not collapse onto dyadic rationals.
    """
    base = S.base
    i = base.locate(x)
    while np.any(i == 0):
        gap = i == 0
        x = np.where(gap, x + 1e-12, x)
        x = np.where(x >= 1.0, 1.0 - 2e-12, x)
        i = np.where(gap, base.locate(x), i)
    y = np.clip(S.fiber.on_branch(i, x, y), 0.0, 1.0)
    slope = np.abs(base.derivative(i, x))
    xn = base.forward(i, x) + (rng.uniform(size=x.shape) - 0.5) * slope * np.spacing(x)
    xn = np.clip(xn, np.finfo(float).tiny, 1.0 - np.finfo(float).epsneg)
    return xn, y


def birkhoff_correlation(S: SkewSystem, u1: Observable, u2: Observable, n_max: int = 10,
                         n_orbits: int = 100_000, burn_in: int = 60, seed: Optional[int] = None,
                         skip_below: float = 1e-13) -> CorrelationRecord:
    """Monte Carlo ``C_n`` from orbits started uniformly on the square.

    After ``burn_in`` steps the points are treated as samples of the
    invariant measure; ``C_n`` is the absolute sample covariance of
    ``u1(F^n z)`` and ``u2(z)`` with standard error ``std(Z)/sqrt(N)``.
    """
    if seed is None:
        raise ValueError("birkhoff_correlation needs an explicit seed")
    if n_orbits < 1000:
        raise ValueError("n_orbits must be >= 1000")
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=n_orbits)
    y = rng.uniform(size=n_orbits)
    for _ in range(burn_in):
        x, y = _skew_step(S, x, y, rng)
    z0 = u2(x, y)
    z0c = z0 - z0.mean()
    values, errs = [], []
    for n in range(n_max + 1):
        if n:
            x, y = _skew_step(S, x, y, rng)
        a = u1(x, y)
        prod = (a - a.mean()) * z0c
        values.append(abs(prod.mean()))
        errs.append(prod.std(ddof=1) / np.sqrt(n_orbits))
    values = np.asarray(values)
    fit, note = _fit_or_degenerate(values, skip_below)
    meta = {"n_orbits": n_orbits, "burn_in": burn_in, "seed": seed}
    if note:
        meta["note"] = note
    return CorrelationRecord(values, np.asarray(errs), fit.amplitude, fit.rate, fit.residual,
                             "montecarlo", meta)
