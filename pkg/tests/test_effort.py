import numpy as np
import pytest

from conftest import REF_GOALS
from microswarm.dynamics import TWO_PI, SwarmParams, effort, make_state, positions_of, rollout, travel_length
from microswarm.effort import (
    EffortProblem,
    SolverOptions,
    endpoint_jacobian,
    endpoint_vjp,
    final_positions,
    min_effort_control,
    random_activation_sequence,
    steps_vs_length_sweep,
)
from microswarm.groups import allocate_groups
from microswarm.lie import fd_jacobian


def random_case(rng, n=5, k=25, gain=20.0):
    a = allocate_groups(n)
    p = SwarmParams(n, turn_gain=gain)
    q0 = make_state(rng.uniform(0, 10, (n, 2)), rng.uniform(0, TWO_PI, n))
    return a, p, q0, rng.integers(1, a.m + 1, k), rng.uniform(0, 3.5, k)


def test_final_positions_match_rollout(rng):
    for gain in (0.05, 1.0, 20.0):
        a, p, q0, nu, u = random_case(rng, gain=gain)
        end = rollout(q0, nu, u, a, p)[-1]
        np.testing.assert_allclose(final_positions(q0, nu, u, a, p), end[:10], atol=1e-11)


def test_jacobian_against_central_differences(rng):
    for gain in (0.05, 1.0, 20.0):
        a, p, q0, nu, u = random_case(rng, gain=gain)
        jac = endpoint_jacobian(q0, nu, u, a, p)
        fd = fd_jacobian(lambda x: final_positions(q0, nu, x, a, p), u, 1e-6)
        assert np.abs(jac - fd).max() / np.abs(fd).max() <= 1e-5


def test_vjp_matches_jacobian(rng):
    a, p, q0, nu, u = random_case(rng)
    w = rng.normal(size=10)
    np.testing.assert_allclose(endpoint_vjp(q0, nu, u, w, a, p), w @ endpoint_jacobian(q0, nu, u, a, p), atol=1e-10)


def test_goal_at_start_costs_nothing(rng):
    a, p, q0, nu, _ = random_case(rng)
    sol = min_effort_control(EffortProblem(q0, positions_of(q0), nu, a, p))
    assert sol.converged and sol.objective <= 1e-9


def test_two_robot_straight_transfer():
    # a heading offset of turn_gain * 5 = 2*pi lets both robots drive straight: effort 10 is attainable
    a = allocate_groups(2)
    p = SwarmParams(2, turn_gain=2 * np.pi / 5)
    q0 = make_state([[0, 0], [0, 3]])
    goal = [[5, 0], [5, 3]]
    nu = np.array([1, 2] * 10)
    witness = np.zeros(20)
    witness[[1, 3]] = 3.5, 1.5   # robot 1 (group 2) drives 5 first
    witness[[4, 6]] = 3.5, 1.5   # then robot 2 (group 1), now turned by exactly 2*pi
    end = rollout(q0, nu, witness, a, p)[-1]
    np.testing.assert_allclose(end[:4], np.ravel(goal), atol=1e-12)
    assert effort(nu, witness, a, p) == 10
    sol = min_effort_control(EffortProblem(q0, goal, nu, a, p))
    assert sol.converged
    # every path is at least as long as its displacement, so 10 is a lower bound
    assert 10 - 1e-6 <= sol.objective <= 10 + 1e-3


def test_solution_feasibility_and_objective_identity(ref_q0, alloc6, params6):
    nu = random_activation_sequence(40, 3, 7)
    sol = min_effort_control(EffortProblem(ref_q0, REF_GOALS, nu, alloc6, params6))
    assert sol.converged and sol.endpoint_error <= 1e-3
    assert sol.u.min() >= 0 and sol.u.max() <= 3.5
    traj = rollout(ref_q0, nu, sol.u, alloc6, params6)
    assert sol.objective == pytest.approx(travel_length(traj), abs=1e-9)
    assert sol.objective == pytest.approx(effort(nu, sol.u, alloc6, params6), abs=1e-9)


def test_reference_scenario_single_run_band(ref_q0, alloc6, params6):
    nu = random_activation_sequence(40, 3, 0)
    sol = min_effort_control(EffortProblem(ref_q0, REF_GOALS, nu, alloc6, params6))
    assert sol.converged
    assert sol.objective == pytest.approx(133.34, rel=0.15)


def test_more_starts_never_worse(rng):
    a, p, q0, nu, _ = random_case(rng, k=30)
    goal = positions_of(q0) + rng.uniform(-3, 3, (5, 2))
    prob = EffortProblem(q0, goal, nu, a, p)
    one = min_effort_control(prob, SolverOptions(n_starts=1, seed=3))
    many = min_effort_control(prob, SolverOptions(n_starts=4, seed=3))
    if one.converged:
        assert many.converged and many.objective <= one.objective + 1e-12


def test_infeasible_reports_best_effort():
    # one step cannot carry the robots 100 units
    a = allocate_groups(2)
    p = SwarmParams(2)
    sol = min_effort_control(EffortProblem(np.zeros(6), [[100, 0], [100, 0]], [1], a, p), SolverOptions(n_starts=2))
    assert not sol.converged and sol.endpoint_error > 1
    assert 0 <= sol.u.min() and sol.u.max() <= 3.5


@pytest.mark.parametrize("kwargs", [
    {"goal_positions": np.zeros(5)},
    {"nu": []},
    {"nu": [0, 1]},
    {"nu": [1, 4]},
    {"c": 5.0},
    {"eps": 0.0},
])
def test_problem_validation(alloc6, params6, ref_q0, kwargs):
    base = {"q0": ref_q0, "goal_positions": np.array(REF_GOALS), "nu": [1, 2, 3], "alloc": alloc6,
            "params": params6}
    base.update(kwargs)
    with pytest.raises(ValueError):
        EffortProblem(**base)


def test_activation_sequence_deterministic():
    assert (random_activation_sequence(50, 3, 11) == random_activation_sequence(50, 3, 11)).all()
    one = random_activation_sequence(1, 3, 0)
    assert one.shape == (1,) and 1 <= one[0] <= 3
    with pytest.raises(ValueError):
        random_activation_sequence(0, 3, 0)


def test_activation_sequence_frequencies():
    k = 10_000
    seq = random_activation_sequence(k, 3, 2024)
    counts = np.bincount(seq, minlength=4)[1:]
    assert (np.abs(counts - k / 3) <= 3 * np.sqrt(k)).all()


def test_sweep_degenerate_matches_direct(ref_q0, alloc6, params6):
    rows = steps_vs_length_sweep(ref_q0, REF_GOALS, alloc6, params6, [40], 1, 5)
    assert len(rows) == 1 and rows[0]["trials"] == 1
    nu = random_activation_sequence(40, 3, np.random.SeedSequence([5, 40, 0]))
    direct = min_effort_control(EffortProblem(ref_q0, REF_GOALS, nu, alloc6, params6))
    if direct.converged:
        assert rows[0]["mean_objective"] == direct.objective and rows[0]["excluded"] == 0
    else:
        assert np.isnan(rows[0]["mean_objective"]) and rows[0]["excluded"] == 1


def test_sweep_goal_at_start(ref_q0, alloc6, params6):
    rows = steps_vs_length_sweep(ref_q0, positions_of(ref_q0), alloc6, params6, [10, 20], 3, 0)
    assert all(r["mean_objective"] <= 1e-9 and r["excluded"] == 0 for r in rows)
    with pytest.raises(ValueError):
        steps_vs_length_sweep(ref_q0, positions_of(ref_q0), alloc6, params6, [10], 0, 0)
