import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import skewtransfer.skew as skew
from skewtransfer.branch_maps import make_dyadic_slopes, make_gauss, make_luroth, make_piecewise_linear
from skewtransfer.errors import ContractViolation, ConvergenceError, HypothesisViolation
from skewtransfer.fiber import AtomicMeasure, FiberMapSpec, make_stepwise_alpha, w_distance
from skewtransfer.skew import (LeafPath, SkewSystem, bv_bound_constants, compute_invariant, equilibrium_rate,
                               g_statistics, l1_norm, noise_floor, path_variation, product_path,
                               push_leafpath, random_path, s1_norm, variation_constants)
from skewtransfer.transfer1d import build_nodal, spectral_gap_estimate, transfer_pointwise
from skewtransfer.verify import bv_along_iterates, path_inequalities

DYADIC = make_dyadic_slopes()


def halving_system(base=DYADIC):
    G = FiberMapSpec(base, lambda i, x, y: 0.5 * np.asarray(y), 0.5, lambda i: np.zeros(np.shape(i)), 0.0)
    return SkewSystem(base, G)


def half_and_half(n, left, right):
    leaves = [AtomicMeasure.delta(left if j < n // 2 else right) for j in range(n)]
    return LeafPath.from_leaves(leaves)


# -- paths and norms --------------------------------------------------------


def test_product_path():
    P = product_path(64, AtomicMeasure.delta(0.5))
    assert P.n_leaves == 64 and P.max_atoms() == 1
    assert all(leaf == AtomicMeasure.delta(0.5) for leaf in P.leaves())
    assert np.all(P.masses() == 1)
    assert path_variation(P) == 0
    assert l1_norm(P) == 1
    assert s1_norm(P) == 2


def test_product_path_needs_probability():
    with pytest.raises(ContractViolation):
        product_path(8, AtomicMeasure.delta(0.5, 2.0))


def test_l1_norm_examples():
    P = product_path(16, AtomicMeasure.delta(0.2))
    Q = product_path(16, AtomicMeasure.delta(0.6))
    assert l1_norm(P - Q) == pytest.approx(0.4, abs=1e-15)
    assert l1_norm(P.scaled(-3.0)) == pytest.approx(3.0)


def test_s1_norm_step_marginal():
    n = 16
    leaves = [AtomicMeasure.delta(0.5, 2.0) if j < n // 2 else AtomicMeasure.zero() for j in range(n)]
    P = LeafPath.from_leaves(leaves)
    assert P.total_mass() == 1.0
    assert s1_norm(P) == pytest.approx(3.0 + l1_norm(P))


def test_variation_single_jump():
    assert path_variation(half_and_half(32, 0.0, 1.0)) == pytest.approx(1.0)


def test_leafpath_arithmetic():
    P = random_path(np.random.default_rng(0), 32, 5)
    assert l1_norm(P - P) == 0.0
    assert (P + P).total_mass() == pytest.approx(2.0)
    assert P.integrate(lambda x, y: np.ones_like(y)) == pytest.approx(P.total_mass())
    with pytest.raises(ValueError):
        P - product_path(16, AtomicMeasure.delta(0.5))


def test_random_path_marginals():
    rng = np.random.default_rng(1)
    P = random_path(rng, 40, 3)
    assert np.allclose(P.masses(), 1.0)
    Q = random_path(rng, 40, 3, constant_marginal=False)
    assert Q.total_mass() == pytest.approx(1.0)
    assert np.all(Q.masses() >= 0)


# -- push -------------------------------------------------------------------


def test_push_halving_from_top():
    P = push_leafpath(halving_system(), product_path(64, AtomicMeasure.delta(1.0)))
    for leaf in P.leaves():
        assert np.allclose(leaf.positions, 0.5)
        assert leaf.total_mass == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("system", ["dyadic", "luroth_lip"])
def test_push_preserves_mass(system, request):
    S = request.getfixturevalue(system)
    P = random_path(np.random.default_rng(2), 128, 4, constant_marginal=False)
    Q = push_leafpath(S, P, tail_tol=1e-8)
    assert abs(Q.total_mass() - P.total_mass()) <= 1e-8 + 1e-9
    assert Q.meta["tail_budget"] <= 1e-8 * np.abs(P.masses()).max() + 1e-15


def test_push_marginal_matches_pointwise_transfer(luroth_lip):
    n = 2048
    mids = (np.arange(n) + 0.5) / n

    def phi(x):
        return 1.0 + 0.5 * np.cos(2 * np.pi * np.asarray(x))

    P = LeafPath.from_leaves([AtomicMeasure.delta(0.5, m) for m in phi(mids)])
    Q = push_leafpath(luroth_lip, P, tail_tol=1e-8)
    osc = np.abs(np.diff(phi(mids))).max()
    for j in np.linspace(0, n - 1, 64).astype(int):
        ref = transfer_pointwise(luroth_lip.base, phi, mids[j], tail_tol=1e-8, h_sup=1.5).value
        assert abs(Q.masses()[j] - ref) <= 2 * osc + 1e-8


def test_zero_leaves_get_zero_measure():
    # both branches map onto (0, 1/2): leaves above 1/2 receive nothing
    base = make_piecewise_linear("squeeze", [0.0, 0.5], [0.5, 1.0], [0.0, 0.0], [0.5, 0.5])
    S = SkewSystem(base, make_stepwise_alpha(base, 0.5))
    Q = push_leafpath(S, product_path(16, AtomicMeasure.delta(0.5)))
    assert Q.meta["zero_leaves"] == 8
    assert Q.meta["zero_leaf_convention"] == "zero measure"
    assert np.all(Q.masses()[8:] == 0)


def test_push_is_linear(dyadic):
    rng = np.random.default_rng(3)
    P, R = random_path(rng, 64, 3), random_path(rng, 64, 3)
    lhs = push_leafpath(dyadic, P - R.scaled(0.5), merge_eps=0.0)
    rhs = push_leafpath(dyadic, P, merge_eps=0.0) - push_leafpath(dyadic, R, merge_eps=0.0).scaled(0.5)
    assert l1_norm(lhs - rhs) <= 1e-12


def test_atom_cap_respected(luroth_lip):
    P = random_path(np.random.default_rng(4), 32, 40)
    Q = push_leafpath(luroth_lip, P, atom_cap=64)
    assert Q.max_atoms() <= 64
    assert Q.meta["cap_merges"] > 0


def test_system_checks_fiber_base():
    G = make_stepwise_alpha(make_luroth(), 0.5)
    with pytest.raises(ValueError):
        SkewSystem(DYADIC, G)
    with pytest.raises(ValueError):
        SkewSystem(DYADIC, make_stepwise_alpha(DYADIC, 0.5), iterate_k=0)


# -- constants --------------------------------------------------------------


def test_dyadic_bv_constants(dyadic):
    a4, u4 = bv_bound_constants(dyadic)
    assert a4 == pytest.approx(0.25, abs=1e-9)
    assert u4 == pytest.approx(0.5, abs=1e-6)


def test_zero_lipschitz_gives_variation_of_g():
    S = halving_system()
    _, u = variation_constants(S, 1)
    assert u == pytest.approx(g_statistics(DYADIC, 1).variation)


def test_gauss_second_iterate_constants():
    gauss = make_gauss()
    S = SkewSystem(gauss, make_stepwise_alpha(gauss, 0.4), iterate_k=2)
    a4, _ = bv_bound_constants(S)
    assert a4 < 1
    assert a4 <= 0.16 * 0.5 + 1e-12


def test_h3_violation():
    from skewtransfer.branch_maps import make_slopes2

    base = make_slopes2()
    S = SkewSystem(base, make_stepwise_alpha(base, 0.6))
    with pytest.raises(HypothesisViolation):
        bv_bound_constants(S)


# -- invariant path ---------------------------------------------------------


def test_total_collapse():
    S = SkewSystem(DYADIC, make_stepwise_alpha(DYADIC, 0.0))
    P, hist = compute_invariant(S, 64, 3)
    assert all(leaf.pairs() == [(0.0, pytest.approx(1.0, abs=1e-7))] for leaf in P.leaves())
    # the only change after the collapse is the mass lost to branch truncation
    assert hist[1] <= 1e-8
    assert hist[2] <= 1e-8


def test_dyadic_invariant_marginal_uniform(dyadic_invariant):
    P, hist = dyadic_invariant
    assert np.abs(P.masses() - 1).max() <= 1e-6
    assert P.meta["tag"] == "invariant"


def test_residual_ratio_bound(dyadic, luroth_lip, dyadic_invariant, luroth_invariant):
    for S, (P, hist) in ((dyadic, dyadic_invariant), (luroth_lip, luroth_invariant)):
        q_hat, _ = spectral_gap_estimate(build_nodal(S.base, 512))
        h = np.asarray(hist)
        floor = noise_floor(h)
        usable = h[h > 10 * max(floor, 1e-13)]
        ratios = usable[-5:][1:] / usable[-5:][:-1]
        assert np.all(ratios <= max(np.sqrt(q_hat), np.sqrt(S.fiber.alpha)) + 0.05)


def test_divergence_detected(monkeypatch, dyadic):
    real = skew.push_leafpath

    def growing(S, P, **kw):
        Q = real(S, P, **kw)
        return Q.scaled(1.5)

    monkeypatch.setattr(skew, "push_leafpath", growing)
    with pytest.raises(ConvergenceError) as exc:
        compute_invariant(dyadic, 16, 40)
    assert len(exc.value.history) == 21


def test_s1_norm_stays_bounded(luroth_lip):
    P = product_path(64, AtomicMeasure.delta(0.5))
    s1 = []
    for _ in range(50):
        P = push_leafpath(luroth_lip, P)
        s1.append(s1_norm(P))
    running = np.maximum.accumulate(s1)
    assert running[-1] - running[-11] <= 1e-3


@pytest.mark.parametrize("system", ["dyadic", "luroth_lip"])
def test_variation_bound_along_iterates(system, request):
    S = request.getfixturevalue(system)
    vmax, vfin, bound, _, _ = bv_along_iterates(S, 128, 30)
    assert vmax <= bound + 1e-3 and vfin <= bound + 1e-3


def test_pushed_product_path_variation(luroth_lip):
    a3, u3 = variation_constants(luroth_lip, 1)
    Q = push_leafpath(luroth_lip, product_path(128, AtomicMeasure.delta(0.5)))
    assert path_variation(Q) <= u3 * 1.0 + 2 * Q.meta["merge_budget_sum"] + 1e-6


# -- operator inequalities on random paths ---------------------------------


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_path_inequalities_dyadic(dyadic, seed):
    worst = path_inequalities(dyadic, n_pairs=3, n_leaves=64, seed=seed)
    assert max(worst.values()) <= 0.0


@settings(max_examples=5, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_path_inequalities_luroth(luroth_lip, seed):
    worst = path_inequalities(luroth_lip, n_pairs=3, n_leaves=64, seed=seed)
    assert max(worst.values()) <= 0.0


# -- equilibrium ------------------------------------------------------------


def test_equilibrium_identical_starts():
    P = product_path(32, AtomicMeasure.delta(0.3))
    rec = equilibrium_rate(halving_system(), P, P, n=5)
    assert np.all(rec.values == 0)
    assert rec.rate == 0 and "degenerate" in rec.note


def test_equilibrium_dyadic(dyadic):
    P = product_path(128, AtomicMeasure.delta(0.1))
    Q = product_path(128, AtomicMeasure.delta(0.9))
    rec = equilibrium_rate(dyadic, P, Q, n=16)
    assert rec.values[0] == pytest.approx(0.8)
    assert rec.values[1] <= dyadic.fiber.alpha * rec.values[0] + rec.merge_budget + 1e-9
    assert rec.rate <= 0.55


def test_noise_floor():
    assert noise_floor(0.5 ** np.arange(20)) == 0.0
    stalled = np.concatenate([0.5 ** np.arange(10), np.full(6, 1e-3)])
    assert noise_floor(stalled) == pytest.approx(1e-3)


def test_w_distance_between_adjacent_leaves_matches_variation():
    P = random_path(np.random.default_rng(7), 20, 3)
    direct = sum(w_distance(P.leaf(j), P.leaf(j + 1)) for j in range(19))
    assert path_variation(P) == pytest.approx(direct, abs=1e-12)
