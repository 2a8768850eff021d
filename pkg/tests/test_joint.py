import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from rmtrack.tracker.joint import (CapacityError, constraint_violations,
                                   make_problem, solve_joint)

from oracles import (brute_force_joint, brute_force_joint_full, lap_brute,
                     random_problem)


def test_single_pair_links_when_positive():
    p = make_problem([0.9], [0.8], [[0.6]])
    sol = solve_joint(p)
    assert sol.t_r.tolist() == [1]
    assert sol.t_m.tolist() == [1]
    assert sol.e.tolist() == [[1]]
    assert sol.objective == pytest.approx(2.3, abs=1e-12)


def test_single_pair_declines_negative_link():
    sol = solve_joint(make_problem([0.9], [0.8], [[-0.4]]))
    assert sol.e.tolist() == [[0]]
    assert sol.objective == pytest.approx(1.7, abs=1e-12)


def test_empty_problem():
    sol = solve_joint(make_problem([], [], np.zeros((0, 0))))
    assert sol.objective == 0.0
    assert sol.e.shape == (0, 0)


def test_cap():
    n = 5
    p = make_problem(np.ones(n), [], np.zeros((n, 0)))
    with pytest.raises(CapacityError):
        solve_joint(p, cap=4)


def test_infeasible_link_never_used():
    p = make_problem([0.5], [0.5], [[-np.inf]], feasible=[[False]])
    sol = solve_joint(p)
    assert sol.e.tolist() == [[0]]
    assert sol.objective == pytest.approx(1.0)


def test_link_can_pay_for_negative_hypothesis():
    # motorcycle hypothesis is worth -0.2 alone but links a rider for +1.0
    p = make_problem([0.5], [-0.2], [[1.0]])
    sol = solve_joint(p)
    assert sol.t_m.tolist() == [1]
    assert sol.objective == pytest.approx(1.3)


def test_association_breaks_motion_tie():
    # two rider detections compete for one rider track; only one associates
    p = make_problem([0.6, 0.6], [0.9], [[2.5], [-0.5]],
                     r_index=[(0, 0), (0, 1)], m_index=[(0, 0)])
    sol = solve_joint(p)
    assert sol.t_r.tolist() == [1, 0]
    assert sol.e.tolist() == [[1], [0]]


def test_several_riders_share_one_motorcycle():
    p = make_problem([0.5, 0.5, 0.5], [0.5], [[1.0], [1.0], [1.0]])
    sol = solve_joint(p)
    assert sol.e[:, 0].tolist() == [1, 1, 1]
    assert sol.objective == pytest.approx(5.0)


@pytest.mark.parametrize("seed", range(40))
def test_matches_full_enumeration_small(seed):
    rng = np.random.default_rng(1000 + seed)
    p = random_problem(rng, max_tracks=2, max_dets=2)
    sol = solve_joint(p)
    assert not constraint_violations(p, sol)
    assert sol.objective == pytest.approx(brute_force_joint_full(p), abs=1e-9)


def test_matches_enumeration_200():
    rng = np.random.default_rng(7)
    for _ in range(200):
        p = random_problem(rng)
        sol = solve_joint(p)
        assert not constraint_violations(p, sol)
        assert abs(sol.objective - brute_force_joint(p)) <= 1e-9


def test_zero_link_weight_reduces_to_two_assignments():
    rng = np.random.default_rng(11)
    for _ in range(200):
        p = random_problem(rng, lam=(1.0, 1.0, 0.0))
        sol = solve_joint(p)
        expected = lap_brute(p.r_index, p.s_r) + lap_brute(p.m_index, p.s_m)
        assert abs(sol.objective - expected) <= 1e-9


def test_oracles_agree():
    rng = np.random.default_rng(3)
    for _ in range(30):
        p = random_problem(rng, max_tracks=2, max_dets=2)
        assert brute_force_joint(p) == pytest.approx(brute_force_joint_full(p), abs=1e-9)


def test_hungarian_oracle_agrees_with_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(50):
        nt, nd = rng.integers(1, 5, size=2)
        W = rng.uniform(0, 1, (nt, nd))
        rr, cc = linear_sum_assignment(W, maximize=True)
        index = [(t, d) for t in range(nt) for d in range(nd)]
        assert W[rr, cc].sum() == pytest.approx(lap_brute(index, W.ravel()))


def test_deterministic():
    rng = np.random.default_rng(9)
    p = random_problem(rng)
    a, b = solve_joint(p), solve_joint(p)
    assert a.t_r.tolist() == b.t_r.tolist() and a.e.tolist() == b.e.tolist()
