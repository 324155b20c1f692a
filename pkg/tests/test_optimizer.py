import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from locbasis import (
    OptimizerConfig,
    RotationProposal,
    apply_rotation,
    build_quadratures,
    build_space,
    init_identity,
    mean_variance,
    objective_s,
    propose,
    quadrature_moments,
    run,
)
from locbasis.optimizer import (
    LocalizedBasis,
    OptimizerError,
    RotationCache,
    delta_s,
    draw_proposals,
    orthonormalize_rows,
)

from conftest import random_basis

angle = st.floats(0, 2 * math.pi, allow_nan=False)


def brute_force_s(basis, quads):
    # direct sum over states, independent of the rotated-quadrature cache
    total = 0.0
    for row in basis.coeffs:
        mx = np.vdot(row, quads.x_mat @ row).real
        mp = np.vdot(row, quads.p_mat @ row).real
        total += mx * mx + mp * mp
    return total


def test_identity_basis():
    for n, expected in [(1, 1.0), (3, 3.0), (4, 4.0)]:
        q = build_quadratures(build_space(n))
        b = init_identity(q.space)
        assert objective_s(b, q) == 0.0
        assert mean_variance(b, q) == pytest.approx(expected, abs=1e-14)
        m = quadrature_moments(b, q)
        np.testing.assert_allclose(m.dx2, np.arange(n) + 0.5)
        np.testing.assert_allclose(m.dp2, np.arange(n) + 0.5)


def test_two_level_hand_value():
    q = build_quadratures(build_space(2))
    u = np.array([[1, 1], [1, -1]]) / math.sqrt(2)
    b = LocalizedBasis(u, q.space)
    assert objective_s(b, q) == pytest.approx(1.0, abs=1e-15)
    m = quadrature_moments(b, q)
    np.testing.assert_allclose(m.mean_x, [1 / math.sqrt(2), -1 / math.sqrt(2)])
    np.testing.assert_allclose(m.mean_p, [0, 0], atol=1e-15)
    assert mean_variance(b, q) == pytest.approx(1.5)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 24), st.integers(0, 2 ** 32 - 1))
def test_s_bound_and_sum_rule(n, seed):
    q = build_quadratures(build_space(n))
    b = random_basis(n, seed)
    s = objective_s(b, q)
    assert s <= n * n - n + 1e-9
    assert s == pytest.approx(brute_force_s(b, q), abs=1e-10)
    m = quadrature_moments(b, q)
    assert np.sum(m.dx2 + m.dp2) == pytest.approx(n * n - s, abs=1e-9)
    assert np.all(m.dx2 * m.dp2 >= 0.25 - 1e-9)


@pytest.mark.parametrize("n", [2, 8, 32])
def test_trace_identity(n):
    q = build_quadratures(build_space(n))
    for seed in range(5):
        m = quadrature_moments(random_basis(n, seed), q)
        assert abs(np.sum(m.mean_x2 + m.mean_p2) - n * n) < 1e-8


def test_any_basis_n1_has_unit_variance():
    q = build_quadratures(build_space(1))
    b = LocalizedBasis(np.array([[np.exp(0.7j)]]), q.space)
    assert mean_variance(b, q) == 1.0


def test_corrupted_operator_detected():
    q = build_quadratures(build_space(3))
    bad = q.x_mat + 1j * np.triu(np.ones((3, 3)))
    corrupt = type(q)(bad, q.p_mat, q.x2_mat, q.p2_mat, q.energies, q.space)
    with pytest.raises(OptimizerError):
        objective_s(init_identity(q.space), corrupt)


def test_propose_is_seeded():
    a = [propose(np.random.default_rng(42), 8) for _ in range(1)]
    rng1, rng2 = np.random.default_rng(42), np.random.default_rng(42)
    seq1 = [propose(rng1, 8) for _ in range(50)]
    seq2 = [propose(rng2, 8) for _ in range(50)]
    assert seq1 == seq2
    assert seq1[0] == a[0]
    assert all(p.row_a != p.row_b and 0 <= min(p.row_a, p.row_b) for p in seq1)
    assert all(max(p.row_a, p.row_b) < 8 for p in seq1)


def test_propose_rejects_small_dim():
    with pytest.raises(ValueError):
        propose(np.random.default_rng(0), 1)
    with pytest.raises(ValueError):
        RotationProposal(2, 2, 0.1, 0.2, 0.3)


def test_pair_frequencies():
    count = 100_000
    a, b, ang = draw_proposals(np.random.default_rng(3), 4, count)
    pairs = list(itertools.combinations(range(4), 2))
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    freq = np.array([np.sum((lo == i) & (hi == j)) for i, j in pairs])
    assert freq.sum() == count
    sigma = math.sqrt(count * (1 / 6) * (5 / 6))
    assert np.all(np.abs(freq - count / 6) < 3 * sigma)
    chi2 = np.sum((freq - count / 6) ** 2 / (count / 6))
    assert chi2 < stats.chi2.ppf(0.999, df=5)
    assert ang.min() >= 0 and ang.max() < 2 * math.pi


def test_small_angle_proposals():
    _, _, ang = draw_proposals(np.random.default_rng(3), 5, 10_000, theta_max=0.2)
    assert ang[:, 0].max() <= 0.2
    assert ang[:, 1].max() > 6


@settings(max_examples=200, deadline=None)
@given(angle, angle, angle)
def test_block_is_special_unitary(theta, alpha, beta):
    blk = RotationProposal(0, 1, theta, alpha, beta).block()
    assert np.max(np.abs(blk @ blk.conj().T - np.eye(2))) < 1e-14
    assert abs(abs(np.linalg.det(blk)) - 1) < 1e-14


def test_apply_rotation_identity_and_swap():
    sp = build_space(4)
    b = random_basis(4, 1)
    same = apply_rotation(b, RotationProposal(0, 3, 0.0, 0.0, 0.0))
    np.testing.assert_array_equal(same.coeffs, b.coeffs)

    swapped = apply_rotation(init_identity(sp), RotationProposal(0, 1, math.pi / 2, 0.0, 0.0))
    np.testing.assert_allclose(np.abs(swapped.coeffs[0]), [0, 1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(np.abs(swapped.coeffs[1]), [1, 0, 0, 0], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 5), st.integers(0, 5), angle, angle, angle, st.integers(0, 1000))
def test_incremental_gain_matches_full_recompute(i, j, theta, alpha, beta, seed):
    if i == j:
        j = (i + 1) % 6
    q = build_quadratures(build_space(6))
    b = random_basis(6, seed)
    prop = RotationProposal(i, j, theta, alpha, beta)
    after = apply_rotation(b, prop)
    cache = RotationCache(b, q)
    assert delta_s(b, prop, cache) == pytest.approx(
        brute_force_s(after, q) - brute_force_s(b, q), abs=1e-10)
    untouched = [k for k in range(6) if k not in (i, j)]
    np.testing.assert_array_equal(after.coeffs[untouched], b.coeffs[untouched])
    assert after.unitarity_residual() < 1e-13


def test_identity_block_gain_is_zero():
    q = build_quadratures(build_space(4))
    b = random_basis(4, 2)
    assert delta_s(b, RotationProposal(1, 2, 0.0, 0.0, 0.0), RotationCache(b, q)) == 0.0


def test_inverse_rotation_returns_gain():
    q = build_quadratures(build_space(4))
    b = random_basis(4, 5)
    cache = RotationCache(b, q)
    fwd = RotationProposal(0, 2, 0.9, 1.3, 2.2)
    back = RotationProposal(0, 2, -0.9, -1.3, 2.2)
    np.testing.assert_allclose(fwd.block() @ back.block(), np.eye(2), atol=1e-15)
    total = cache.delta_s(fwd)
    cache.apply(fwd)
    total += cache.delta_s(back)
    cache.apply(back)
    assert abs(total) < 1e-9
    np.testing.assert_allclose(cache.u, b.coeffs, atol=1e-14)


def test_gram_schmidt_restores_unitarity():
    u = random_basis(10, 3).coeffs * (1 + 1e-7)
    q = orthonormalize_rows(u)
    assert np.max(np.abs(q @ q.conj().T - np.eye(10))) < 1e-14


@pytest.mark.parametrize("kwargs", [
    {"max_proposals": 0}, {"saturation_window": 0}, {"min_delta": -1.0},
    {"renorm_interval": 0}, {"theta_max": 0.0},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        OptimizerConfig(**kwargs)


def test_run_n1_returns_immediately():
    q = build_quadratures(build_space(1))
    b, tr = run(init_identity(q.space), OptimizerConfig(seed=1), q)
    assert tr.final_s == 0.0 and tr.accepted_count == 0 and tr.proposals == 0


def test_run_n2_reaches_optimum():
    q = build_quadratures(build_space(2))
    b, tr = run(init_identity(q.space), OptimizerConfig(seed=11, max_proposals=100_000), q)
    # 1.5 is the exact optimum, so only roundoff-sized excess is possible
    assert mean_variance(b, q) <= 1.5 + 1e-6
    assert tr.accepted_count > 0


def brute_force_two_level(steps=181):
    # dense grid over the three angles; a global phase per row does not matter
    q = build_quadratures(build_space(2))
    best = np.inf
    th = np.linspace(0, math.pi / 2, steps)
    ph = np.linspace(0, 2 * math.pi, 2 * steps)
    for alpha in (0.0,):
        for t in th:
            for beta in ph:
                blk = RotationProposal(0, 1, t, alpha, beta).block()
                b = LocalizedBasis(blk, q.space)
                m = quadrature_moments(b, q)
                best = min(best, float(np.mean(m.dx2 + m.dp2)))
    return best


def test_two_level_oracle():
    oracle = brute_force_two_level()
    q = build_quadratures(build_space(2))
    b, _ = run(init_identity(q.space), OptimizerConfig(seed=3), q)
    assert abs(mean_variance(b, q) - oracle) < 1e-3


def test_run_invariants_and_determinism():
    q = build_quadratures(build_space(8))
    cfg = OptimizerConfig(seed=99, max_proposals=300_000, renorm_interval=500)
    b1, t1 = run(init_identity(q.space), cfg, q)
    b2, t2 = run(init_identity(q.space), cfg, q)
    np.testing.assert_array_equal(b1.coeffs, b2.coeffs)
    np.testing.assert_array_equal(t1.history_pos, t2.history_pos)
    np.testing.assert_array_equal(t1.history_s, t2.history_s)

    assert t1.checkpoints >= 2
    assert b1.unitarity_residual() < 1e-10
    assert np.all(np.diff(t1.history_s) >= 0)
    assert np.all(np.diff(t1.history_pos) > 0)
    assert t1.accepted_count + t1.rejected_count == t1.proposals <= 300_000
    assert t1.final_s == pytest.approx(t1.history_s[-1], abs=1e-8)
    m = quadrature_moments(b1, q)
    assert np.all(m.dx2 * m.dp2 >= 0.25 - 1e-9)
    assert np.sum(m.dx2 + m.dp2) == pytest.approx(64 - t1.final_s, abs=1e-8)
    assert mean_variance(b1, q) < 2.6


def test_compiled_loop_matches_reference_path():
    # replay the same proposal stream through the pure-Python cache
    n, count = 6, 5000
    q = build_quadratures(build_space(n))
    cfg = OptimizerConfig(seed=5, max_proposals=count)
    b, tr = run(init_identity(q.space), cfg, q)

    a, bb, ang = draw_proposals(np.random.default_rng(5), n, 1 << 16)
    cache = RotationCache(init_identity(q.space), q)
    kept = []
    for t in range(count):
        prop = RotationProposal(int(a[t]), int(bb[t]), *ang[t])
        if cache.delta_s(prop) > 0:
            cache.apply(prop)
            kept.append(t + 1)
    assert kept == tr.history_pos[1:].tolist()
    np.testing.assert_allclose(cache.u, b.coeffs, atol=1e-10)


def test_rejection_window_stops_run():
    q = build_quadratures(build_space(3))
    cfg = OptimizerConfig(seed=2, saturation_window=50, max_proposals=10 ** 7)
    _, tr = run(init_identity(q.space), cfg, q)
    assert tr.stop_reason in {"rejection window", "relative improvement"}
    assert tr.proposals < 10 ** 7


def test_blowup_is_reported():
    q = build_quadratures(build_space(4))
    bad = LocalizedBasis(np.eye(4) * 1.01, q.space)
    with pytest.raises(OptimizerError):
        run(bad, OptimizerConfig(seed=0, renorm_interval=1, max_proposals=1000), q)


def test_small_angle_run_improves():
    q = build_quadratures(build_space(6))
    b, _ = run(init_identity(q.space),
               OptimizerConfig(seed=4, max_proposals=200_000, theta_max=0.3), q)
    assert mean_variance(b, q) < 2.3
