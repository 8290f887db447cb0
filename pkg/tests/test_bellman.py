"""Optimality operator, monotone iterations, policy extraction and evaluation."""

import numpy as np
import pytest

from impulsive_ctmdp import (
    Direction,
    NonConvergenceError,
    ValueFunction,
    bellman_apply,
    bellman_residual,
    evaluate_policy,
    extract_policy,
    solve,
    value_iterate,
)
from impulsive_ctmdp.bellman import StationaryPolicy, check_policy
from impulsive_ctmdp.testing import random_model

from conftest import improper_model, improper_policy, two_state, zero_cost_model
from test_model import one_state_model


def test_apply_single_state_scales_by_contraction_factor():
    # P-tilde is the identity, so BF = (K/(K+eta)) * c with zero cost.
    m = one_state_model()
    out = bellman_apply(m, ValueFunction(np.array([0.8])))
    assert abs(out[0] - 0.5 * 0.8) < 1e-15


def test_apply_two_state_from_zero():
    m = two_state()
    out = bellman_apply(m, ValueFunction(np.zeros(2)))
    assert np.allclose(out.values, [0.0, 1.0 / (m.K + 1.0)], atol=1e-15)


def test_apply_impulsive_branch_wins():
    m = two_state(lam=0.3)
    out = bellman_apply(m, ValueFunction(np.zeros(2)))
    assert abs(out[1] - 0.3) < 1e-15


def test_value_iterate_zero_cost_reaches_zero_from_both_sides():
    m = zero_cost_model()
    for direction in Direction:
        V, _ = value_iterate(m, direction)
        assert np.max(np.abs(V.values)) < 1e-9


def test_value_iterate_closed_form_absorbing_chain():
    m = two_state()
    V, _ = value_iterate(m, Direction.FROM_BELOW)
    assert abs(V[1] - 0.5) < 1e-9
    assert abs(V[0]) < 1e-9


def test_value_iterate_impulse_takes_cheaper_branch():
    m = two_state(lam=0.3)
    V, _ = value_iterate(m, Direction.FROM_ABOVE)
    assert abs(V[1] - min(0.5, 0.3)) < 1e-9


def test_value_iterate_rejects_bad_arguments():
    m = two_state()
    with pytest.raises(ValueError):
        value_iterate(m, Direction.FROM_BELOW, tol=0.0)
    with pytest.raises(ValueError):
        value_iterate(m, Direction.FROM_BELOW, max_iter=0)


def test_value_iterate_nonconvergence_carries_state():
    m = two_state()
    with pytest.raises(NonConvergenceError) as err:
        value_iterate(m, Direction.FROM_ABOVE, tol=1e-12, max_iter=3)
    assert err.value.iterations == 3
    assert err.value.step > 0
    assert err.value.last.shape == (2,)


def test_residual_zero_on_zero_cost_fixed_point():
    m = zero_cost_model()
    assert bellman_residual(m, ValueFunction(np.zeros(3))) == 0.0


def test_residual_matches_single_application():
    m = two_state()
    V = ValueFunction(np.full(2, m.K / m.eta))
    applied = bellman_apply(m, V)
    expected = float(np.max(np.abs(applied.values - V.values)))
    assert bellman_residual(m, V) == expected


def test_residual_small_after_solve():
    m = two_state(lam=0.3)
    report = solve(m, tol=1e-10)
    assert report.residual <= 1e-9


def test_extract_policy_zero_cost_all_gradual():
    m = zero_cost_model()
    V, _ = value_iterate(m, Direction.FROM_BELOW)
    policy = extract_policy(m, V)
    assert not policy.impulsive.any()


def test_extract_policy_flags_cheap_impulse():
    m = two_state(lam=0.3)
    report = solve(m)
    policy = extract_policy(m, report.V)
    assert policy.impulsive[1] and not policy.impulsive[0]
    assert policy.impulse_action(m, "1") == "reset"
    assert policy.gradual_action(m, "0") == "wait"


def test_extract_policy_prefers_gradual_on_expensive_impulse():
    m = two_state(lam=0.9)  # 0.9 > 1/(eta+mu) = 0.5
    report = solve(m)
    policy = extract_policy(m, report.V)
    assert not policy.impulsive.any()
    assert abs(report.V[1] - 0.5) < 1e-9


def test_evaluate_policy_optimal_matches_value():
    m = two_state(lam=0.3)
    report = solve(m)
    policy = extract_policy(m, report.V)
    W = evaluate_policy(m, policy)
    assert np.max(np.abs(W.values - report.V.values)) <= 1e-9


def test_evaluate_policy_forced_gradual_is_costlier():
    m = two_state(lam=0.3)
    forced = StationaryPolicy(impulsive=np.zeros(2, dtype=bool),
                              phi_g=np.zeros(2, dtype=np.int64), phi_i={})
    W = evaluate_policy(m, forced)
    assert abs(W[1] - 0.5) < 1e-9
    report = solve(m)
    assert W[1] > report.V[1]


def test_evaluate_policy_impulsive_cycle_diverges():
    m = improper_model()
    with pytest.raises(NonConvergenceError):
        evaluate_policy(m, improper_policy(m))


def test_check_policy_rejects_infeasible_flags():
    m = two_state()  # no impulses anywhere
    bad = StationaryPolicy(impulsive=np.array([False, True]),
                           phi_g=np.zeros(2, dtype=np.int64), phi_i={1: 0})
    with pytest.raises(ValueError):
        check_policy(m, bad)
    wrong_shape = StationaryPolicy(impulsive=np.zeros(3, dtype=bool),
                                   phi_g=np.zeros(3, dtype=np.int64), phi_i={})
    with pytest.raises(ValueError):
        check_policy(m, wrong_shape)


def test_solve_two_state_gap_tiny():
    m = two_state()
    report = solve(m, tol=1e-10)
    assert report.gap <= 2e-10
    assert abs(report.V[1] - 0.5) < 1e-9


def test_solve_zero_cost_converges_to_zero():
    # Starting from +-K/eta the iterates decay geometrically at K/(K+eta),
    # so both limits hit 0 within tolerance and the gap is at most 2*tol.
    report = solve(zero_cost_model(), tol=1e-10)
    assert report.gap <= 2e-10
    assert report.V.sup_norm() <= 1e-10


def test_solve_random_model_gap_and_residual():
    m = random_model(7)
    report = solve(m, tol=1e-10)
    assert report.gap <= 1e-9
    assert report.residual <= 1e-9


def test_iterates_respect_value_bound():
    for seed in range(5):
        m = random_model(seed)
        V, _ = value_iterate(m, Direction.FROM_ABOVE, tol=1e-8)
        assert V.sup_norm() <= m.K / m.eta + 1e-9
