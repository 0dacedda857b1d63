"""Invariant checks shared by ``skewtransfer verify`` and the test-suite.

Every check returns plain numbers; :func:`run_verify` turns them into a
pass/fail table.  Nothing here reads clocks, so two runs with the same
configuration print identical bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .branch_maps import PiecewiseMap, check_class, gauss_density
from .config import ExperimentConfig, build_base, build_system
from .errors import ConfigError
from .correlations import birkhoff_correlation, coordinate_y, correlation_sequence
from .fiber import (AtomicMeasure, FiberMapSpec, check_fiber_contraction, fiber_push, merge_atoms,
                    random_measure, w_distance, w_norm)
from .skew import (SkewSystem, bv_bound_constants, compute_invariant, equilibrium_rate, l1_norm,
                   path_variation, product_path, push_leafpath, random_path, s1_norm,
                   variation_constants)
from .transfer1d import (build_nodal, build_ulam, l1_distance, spectral_gap_estimate,
                         stationary_density)

WIRSING = 0.30366300289873265


@dataclass
class Check:
    module: str
    name: str
    passed: bool
    value: float
    bound: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.module:<12} {self.name:<34} value={self.value:.6g} bound={self.bound:.6g}"


@dataclass
class VerifyReport:
    checks: List[Check] = field(default_factory=list)

    def add(self, module: str, name: str, value: float, bound: float, passed: Optional[bool] = None):
        ok = bool(value <= bound) if passed is None else bool(passed)
        self.checks.append(Check(module, name, ok, float(value), float(bound)))

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def table(self) -> str:
        lines = [c.line() for c in self.checks]
        n_ok = sum(c.passed for c in self.checks)
        lines.append(f"summary: {n_ok}/{len(self.checks)} passed")
        return "\n".join(lines) + "\n"


# -- reference values for the builtin families ------------------------------


def reference_lambda2(fmap: PiecewiseMap) -> Optional[float]:
    """Second eigenvalue of the transfer operator when it is known in closed form.

    For maps whose branches are all full and increasing linear, ``x - 1/2`` is
    an eigenfunction with eigenvalue ``sum_i |I_i|^2``.
    """
    name = fmap.name
    if name == "gauss":
        return WIRSING
    if name == "dyadic":
        return 1.0 / 3.0
    if name == "luroth" and "ratio" in fmap.params:
        r = fmap.params["ratio"]
        return (1.0 - r) / (1.0 + r)
    return None


def reference_density(fmap: PiecewiseMap):
    if fmap.name == "gauss":
        return gauss_density
    if fmap.name in ("dyadic", "luroth"):
        return lambda x: np.ones_like(np.asarray(x, dtype=float))
    return None


# -- fibre checks -----------------------------------------------------------


def quasicontraction_excess(G: FiberMapSpec, n_cases: int = 200, seed: int = 0, n_atoms: int = 6):
    """Worst excesses over random cases of the two fibre contraction bounds.

    Returns ``(zero_mass_factor, general_excess)`` where ``zero_mass_factor``
    is the largest ratio ``||G_x mu||_W / ||mu||_W`` over zero-mass ``mu``
    (to compare with ``alpha``) and ``general_excess`` the largest
    ``||G_x mu||_W - alpha ||mu||_W - |mu(K)|``.
    """
    rng = np.random.default_rng(seed)
    idx = G.base.indices(200)
    factor, excess = 0.0, -np.inf
    for _ in range(n_cases):
        i = int(rng.choice(idx))
        a, b = G.base.left(np.array([i]))[0], G.base.right(np.array([i]))[0]
        x = a + (b - a) * rng.uniform(0.01, 0.99)
        mu = random_measure(rng, n_atoms, signed=True)
        zero = AtomicMeasure(mu.positions, mu.weights - mu.weights.mean())
        nz = w_norm(zero)
        if nz > 1e-12:
            factor = max(factor, w_norm(fiber_push(G, x, zero)) / nz)
        lhs = w_norm(fiber_push(G, x, mu))
        excess = max(excess, lhs - G.alpha * w_norm(mu) - abs(mu.total_mass))
    return factor, excess


def wnorm_cross_check(n_lists: int = 20, seed: int = 0, n_atoms: int = 8):
    """Largest DP vs HiGHS discrepancy and largest ``|w_norm - 1|`` on probabilities."""
    rng = np.random.default_rng(seed)
    diff, prob = 0.0, 0.0
    for _ in range(n_lists):
        mu = random_measure(rng, n_atoms, signed=True)
        diff = max(diff, abs(w_norm(mu, "dp") - w_norm(mu, "highs")))
        p = random_measure(rng, n_atoms, probability=True)
        prob = max(prob, abs(w_norm(p) - 1.0))
    return diff, prob


def merge_excess(n_lists: int = 20, seed: int = 0, eps: float = 0.05):
    rng = np.random.default_rng(seed)
    worst = -np.inf
    for _ in range(n_lists):
        mu = random_measure(rng, 30, signed=True)
        worst = max(worst, w_distance(mu, merge_atoms(mu, eps)) - eps * mu.total_variation)
    return worst


# -- path inequalities ------------------------------------------------------


def path_inequalities(S: SkewSystem, n_pairs: int = 10, n_leaves: int = 64, seed: int = 0,
                      tail_tol: float = 1e-8, merge_eps: float = 1e-6, atom_cap: int = 512) -> Dict[str, float]:
    """Worst ``lhs - rhs - tolerance`` of three push inequalities on random paths.

    * ``weak``: ``||F mu||_1 <= ||mu||_1`` for ``mu = P - Q``;
    * ``lasota_yorke``: ``||F mu||_1 <= alpha ||mu||_1 + (alpha + 1) |phi_1|_1``;
    * ``variation``: ``V(F P) <= alpha_3 V(P) + U_3 ||P||_1`` for positive
      paths with constant marginal.

    Tolerances are the logged merge and tail budgets plus ``1e-6``.
    """
    rng = np.random.default_rng(seed)
    a3, u3 = variation_constants(S, 1)
    alpha = S.fiber.alpha
    kw = dict(tail_tol=tail_tol, merge_eps=merge_eps, atom_cap=atom_cap)
    worst = {"weak": -np.inf, "lasota_yorke": -np.inf, "variation": -np.inf}
    for _ in range(n_pairs):
        P = random_path(rng, n_leaves, 4, constant_marginal=False)
        Q = random_path(rng, n_leaves, 4, constant_marginal=False)
        mu = P - Q
        Fmu = push_leafpath(S, mu, **kw)
        tol = Fmu.meta["merge_budget_l1"] + Fmu.meta["tail_budget"] + 1e-6
        l1_mu, l1_F = l1_norm(mu), l1_norm(Fmu)
        phi1 = float(np.abs(mu.masses()).mean())
        worst["weak"] = max(worst["weak"], l1_F - l1_mu - tol)
        worst["lasota_yorke"] = max(worst["lasota_yorke"], l1_F - alpha * l1_mu - (alpha + 1) * phi1 - tol)

        R = random_path(rng, n_leaves, 4, constant_marginal=True)
        FR = push_leafpath(S, R, **kw)
        vtol = 2.0 * (FR.meta["merge_budget_sum"] + n_leaves * FR.meta["tail_budget"]) + 1e-6
        lhs = path_variation(FR)
        worst["variation"] = max(worst["variation"], lhs - a3 * path_variation(R) - u3 * l1_norm(R) - vtol)
    return worst


def bv_along_iterates(S: SkewSystem, n_leaves: int, n_iters: int, **kw):
    """Largest path variation over the iterates from ``m x delta_{1/2}`` and the final one.

    Returns ``(max_variation, final_variation, bound, path, residuals)``.
    """
    a4, u4 = bv_bound_constants(S)
    P, hist = compute_invariant(S, n_leaves, n_iters, keep_iterates=True, **kw)
    iterates = P.meta.pop("iterates")
    k = S.iterate_k
    # the bound concerns iterates of F^k; F^j for j < k contributes a start of its own
    variations = [path_variation(Q) for Q in iterates[::k]]
    return max(variations), path_variation(P), u4 / (1.0 - a4), P, hist


# -- the suite --------------------------------------------------------------


def _base_checks(report: VerifyReport, cfg: ExperimentConfig, fmap: PiecewiseMap, k: int, threads: int):
    rep = check_class(fmap, iterate=k)
    report.add("branch_maps", f"class T or T_E (iterate {k})", 0.0 if (rep.is_T or rep.is_TE) else 1.0, 0.0)
    if rep.is_TE:
        report.add("branch_maps", "expansion beta", rep.beta, 1.0, passed=rep.beta < 1.0)

    n_bins = cfg.run["n_bins"]
    M = build_ulam(fmap, n_bins, tail_tol=cfg.run["tail_tol"], threads=threads)
    rows = np.asarray(M.matrix.sum(axis=1)).ravel()
    report.add("transfer1d", "ulam row sums", float(np.abs(rows - 1.0).max()), 1e-12)
    h = stationary_density(M)
    report.add("transfer1d", "density mass", abs(h.integral - 1.0), 1e-9)
    report.add("transfer1d", "density negativity", max(0.0, -float(h.values.min())), 0.0)
    report.add("transfer1d", "stationary residual", h.meta["residual"], 1e-10)
    ref = reference_density(fmap)
    if ref is not None:
        tol = 0.005 if fmap.name == "gauss" else 1e-8
        if fmap.name == "luroth" and fmap.params.get("ratio") != 0.5:
            tol = 1e-6
        report.add("transfer1d", "density vs closed form (L1)", l1_distance(h, ref), tol)

    lam, meta = spectral_gap_estimate(build_nodal(fmap, min(n_bins, 1024), tail_tol=cfg.run["tail_tol"]))
    report.add("transfer1d", "second eigenvalue < 1", lam, 1.0, passed=lam < 1.0)
    ref_lam = reference_lambda2(fmap)
    if ref_lam is not None:
        report.add("transfer1d", "second eigenvalue vs reference", abs(lam - ref_lam), 0.02)
    return lam


def _fiber_checks(report: VerifyReport, G: FiberMapSpec, seed: int):
    report.add("fiber", "sampled Lipschitz excess", check_fiber_contraction(G, seed=seed), 1e-12)
    diff, prob = wnorm_cross_check(seed=seed)
    report.add("fiber", "w_norm dp vs highs", diff, 1e-9)
    report.add("fiber", "w_norm of probabilities", prob, 1e-10)
    report.add("fiber", "merge W-error minus bound", merge_excess(seed=seed), 1e-12)
    factor, excess = quasicontraction_excess(G, seed=seed)
    report.add("fiber", "zero-mass contraction factor", factor, G.alpha + 1e-9)
    report.add("fiber", "quasicontraction excess", excess, 1e-9)


def _skew_checks(report: VerifyReport, cfg: ExperimentConfig, S: SkewSystem, q_hat: float, seed: int):
    run = cfg.run
    kw = dict(tail_tol=run["tail_tol"], merge_eps=run["merge_eps"], atom_cap=run["atom_cap"])
    n = run["verify_leaves"]
    a4, u4 = bv_bound_constants(S)
    report.add("skew", "alpha4 < 1", a4, 1.0, passed=a4 < 1.0)

    P0 = product_path(n, AtomicMeasure.delta(0.5))
    P1 = push_leafpath(S, P0, **kw)
    report.add("skew", "push mass defect", abs(P1.total_mass() - 1.0), run["tail_tol"] + 1e-9)

    worst = path_inequalities(S, run["verify_pairs"], min(n, 64), seed, **kw)
    report.add("skew", "weak L1 contraction", worst["weak"], 0.0)
    report.add("skew", "L1 Lasota-Yorke", worst["lasota_yorke"], 0.0)
    report.add("skew", "variation inequality", worst["variation"], 0.0)

    vmax, vfin, bound, P, hist = bv_along_iterates(S, n, run["iterations"], **kw)
    report.add("skew", "variation along iterates", vmax, bound + 1e-3)
    report.add("skew", "variation of invariant path", vfin, bound + 1e-3)
    marg = P.marginal()
    report.add("skew", "invariant path mass", abs(marg.integral - 1.0), 1e-6)
    report.add("skew", "invariant residual", hist[-1], max(1e-6, 10.0 * P.meta["merge_budget_l1"]))
    s1 = [s1_norm(Q) for Q in push_chain(S, P0, 30, kw)]
    running = np.maximum.accumulate(s1)
    report.add("skew", "S1 running max increase", float(running[-1] - running[-11]), 1e-3)

    rec = equilibrium_rate(S, product_path(n, AtomicMeasure.delta(0.1)),
                           product_path(n, AtomicMeasure.delta(0.9)), 16, **kw)
    beta1 = max(np.sqrt(q_hat), np.sqrt(S.fiber.alpha))
    report.add("skew", "equilibrium rate", rec.rate, beta1 + 0.05, passed=0.0 < rec.rate <= beta1 + 0.05)
    return P


def push_chain(S: SkewSystem, P, n: int, kw):
    out = [P]
    for _ in range(n):
        out.append(push_leafpath(S, out[-1], **kw))
    return out


def _correlation_checks(report: VerifyReport, cfg: ExperimentConfig, S: SkewSystem, P, seed: int):
    run = cfg.run
    u = coordinate_y()
    op = correlation_sequence(S, P, u, u, run["n_max"], tail_tol=run["tail_tol"],
                              merge_eps=run["merge_eps"], atom_cap=run["atom_cap"])
    report.add("correlations", "operator rate", op.rate, 1.0, passed=0.0 < op.rate < 1.0)
    report.add("correlations", "envelope / fitted amplitude", op.envelope_amplitude / max(op.amplitude, 1e-300), 2.0)
    mc = birkhoff_correlation(S, u, u, run["mc_n_max"], n_orbits=run["n_orbits"], burn_in=run["burn_in"], seed=seed)
    m = min(mc.values.size, op.values.size)
    z = np.abs(op.values[:m] - mc.values[:m]) / np.maximum(mc.stderr[:m], 1e-300)
    report.add("correlations", "operator vs Monte Carlo (max z)", float(z.max()), 3.0)


def run_verify(cfg: ExperimentConfig, threads: int = 1) -> VerifyReport:
    """Run every applicable check for the configured system."""
    report = VerifyReport()
    seed = cfg.seed if cfg.seed is not None else 0
    fmap = build_base(cfg)
    k = int(cfg.getfloat("system.iterate_k", 1))
    q_hat = _base_checks(report, cfg, fmap, k, threads)
    if cfg.get("fiber.family") is None:
        return report
    if cfg.seed is None:
        raise ConfigError("run.seed is required when a fibre map is configured (Monte Carlo checks)")
    S = build_system(cfg)
    _fiber_checks(report, S.fiber, seed)
    if cfg.get("verify.dynamics", "yes").lower() in ("no", "false", "0"):
        a4, _ = bv_bound_constants(S)
        report.add("skew", "alpha4 < 1", a4, 1.0, passed=a4 < 1.0)
        return report
    P = _skew_checks(report, cfg, S, q_hat, seed)
    _correlation_checks(report, cfg, S, P, seed)
    return report
