"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest -m acceptance`` or directly as ``python tests/test_acceptance.py``.
Criteria 4 to 6 run full experiment batches and take tens of minutes on one core;
``MICROSWARM_THREADS`` spreads batches over worker processes.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

from microswarm.dynamics import SwarmParams, effort, make_state, rollout, travel_length
from microswarm.effort import EffortProblem, final_positions, endpoint_vjp, min_effort_control, random_activation_sequence
from microswarm.groups import allocate_groups
from microswarm.harness import batch, run_experiment
from microswarm.lie import Bracket, ad, eval_bracket, random_states, rank_report
from microswarm.planner import Environment, SafetyParams, collision_free, has_clearance, random_walk
from microswarm.scenario import load_scenario

pytestmark = pytest.mark.acceptance


@pytest.fixture
def verdict(capsys):
    """Print a criterion's outcome outside pytest's capture, then assert it."""

    def emit(number, title, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {number}] {'PASS' if ok else 'FAIL'}  {title}: {detail}")
        assert ok, f"criterion {number} ({title}): {detail}"

    return emit


def criterion_1():
    counts = {}
    for n in (2, 6, 14):
        rep = rank_report(random_states(n, 100, np.random.default_rng(n)), allocate_groups(n),
                          SwarmParams(n, turn_gain=20.0))
        counts[n] = rep["histogram"].get(2 * n, 0)
    return all(c >= 95 for c in counts.values()), ", ".join(f"n={n}: {c}/100 at rank {2 * n}" for n, c in counts.items())


# printed rows: unit direction per robot 2..5 as a function of (sin, cos), None for a zero block
TABLE_ROWS = [
    ("[f1,f2]", Bracket(1, 2),
     [lambda s, c: (-s, c), lambda s, c: (-s, c), lambda s, c: (s, -c), lambda s, c: (s, -c)]),
    ("(ad^2 f1,f2)", ad(1, 2, 2), [lambda s, c: (-c, -s), lambda s, c: (-c, -s), None, None]),
    ("(ad^3 f1,f2)", ad(1, 2, 3), [lambda s, c: (s, -c), lambda s, c: (s, -c), None, None]),
    ("[f3,(ad^3 f1,f2)]", Bracket(3, ad(1, 2, 3)), [None, lambda s, c: (c, s), None, None]),
    ("(ad^2 f3,(ad^3 f1,f2))", ad(3, ad(1, 2, 3), 2), [None, lambda s, c: (-s, c), None, None]),
]


def table_row_deviation(expr, pattern, q, alloc, params):
    n = alloc.n
    vec = eval_bracket(expr, q, alloc, params)
    blocks = vec[: 2 * n].reshape(n, 2)
    scale = np.linalg.norm(blocks, axis=1).max()
    dev = 0.0
    for j, want in zip(range(1, 5), pattern):
        b = blocks[j] / scale
        if want is None:
            dev = max(dev, np.abs(b).max())
        else:
            norm = np.linalg.norm(b)
            target = np.array(want(np.sin(q[2 * n + j]), np.cos(q[2 * n + j])))
            dev = max(dev, np.abs(b / norm - target).max() if norm > 0 else 1.0)
    return dev


def criterion_2():
    alloc, params = allocate_groups(6), SwarmParams(6, turn_gain=20.0)
    states = random_states(6, 20, np.random.default_rng(2))
    devs = {name: max(table_row_deviation(expr, pat, q, alloc, params) for q in states)
            for name, expr, pat in TABLE_ROWS}
    return max(devs.values()) <= 1e-4, "; ".join(f"{k} dev {v:.1e}" for k, v in devs.items())


def criterion_3():
    s = load_scenario("paper_6robots.json")
    alloc = allocate_groups(s.n)
    means, bad, excluded = {}, 0, 0
    for k in (40, 60):
        objs = []
        for t in range(20):
            nu = random_activation_sequence(k, alloc.m, np.random.SeedSequence([s.seed, k, t]))
            sol = min_effort_control(EffortProblem(s.q0, s.goal_positions, nu, alloc, s.params), s.solver)
            if not sol.converged:
                excluded += 1
                continue
            objs.append(sol.objective)
            bad += not (sol.endpoint_error <= 1e-3 and sol.u.min() >= 0 and sol.u.max() <= 3.5)
        means[k] = float(np.mean(objs)) if objs else float("nan")
    ok = all(110 <= v <= 180 for v in means.values()) and bad == 0
    detail = ", ".join(f"k={k} mean {v:.2f}" for k, v in means.items())
    return ok, f"{detail}; {bad} converged runs out of tolerance; {excluded} unconverged"


def criterion_4(out):
    agg = batch(load_scenario("ncca_5robots.json"), runs=200, out_dir=out).aggregate
    ratio = agg.get("travel_ratio", float("nan"))
    ok = (agg["failures"] == 0 and agg["unsafe_states"] == 0 and agg["timeout_rate"] <= 0.02
          and 1.5 <= ratio <= 4.0)
    return ok, (f"{agg['runs']} runs, {agg['failures']} errors, {agg['unsafe_states']} unsafe states, "
                f"timeout rate {agg['timeout_rate']:.3f}, travel {agg['mean_travel']:.1f} vs "
                f"{agg['mean_baseline_travel']:.1f} (ratio {ratio:.2f})")


def criterion_5(out):
    aggs = {env: batch(load_scenario(f"obstacles_{env}.json"), out_dir=out / env).aggregate for env in "ab"}
    ok = aggs["b"]["timeout_rate"] >= aggs["a"]["timeout_rate"]
    parts = []
    for env, agg in aggs.items():
        succeeded = agg["reached_rate"] * agg["runs"] + agg["timeouts"] >= agg["runs"]
        ok &= (agg["failures"] == 0 and agg["penetrations"] == 0 and agg["unsafe_states"] == 0 and succeeded
               and 1.2 <= agg["travel_ratio"] <= 4.5)
        parts.append(f"{env}: ratio {agg['travel_ratio']:.2f}, mean/min travel {agg['mean_travel']:.1f}/"
                     f"{agg['min_travel']:.1f}, penetrations {agg['penetrations']}, "
                     f"reached {agg['reached_rate']:.2f}, timeout rate {agg['timeout_rate']:.2f}")
    return ok, "; ".join(parts)


def criterion_6(out):
    agg = batch(load_scenario("rrt_5robots.json"), out_dir=out).aggregate
    ok = agg["wall_time_ratio"] >= 10 and agg["mean_nc_travel"] < agg["mean_rrt_travel"]
    return ok, (f"wall-time ratio {agg['wall_time_ratio']:.1f}, travel nc-ca {agg['mean_nc_travel']:.1f} vs "
                f"rrt {agg['mean_rrt_travel']:.1f}, rrt reached goal in {agg['rrt_success_rate']:.0%} of runs")


def criterion_7(out):
    rep = run_experiment(load_scenario("primitive_6robots.json"), out)
    row = rep.rows[0]
    ok = (rep.aggregate["max_relative_residual"] <= 0.01 and row["selective_target_error"] <= 1e-2
          and row["selective_others_error"] <= 1e-2)
    return ok, (f"max circle residual {rep.aggregate['max_relative_residual']:.1e} of radius; robot 3 miss "
                f"{row['selective_target_error']:.1e}, others {row['selective_others_error']:.1e}")


def cramped_configuration(rng, env, safety, n=5, box=(4.5, 6.0)):
    while True:
        q = make_state(rng.uniform(*box, (n, 2)), rng.uniform(0, 2 * np.pi, n))
        if collision_free(q, env, safety) and not has_clearance(q, env, safety.clearance_d):
            return q


def criterion_8():
    env, safety = Environment((0, 0, 10, 10)), SafetyParams(robot_radius=0.25, clearance_d=1.0)
    alloc, params = allocate_groups(5), SwarmParams(5, turn_gain=20.0)
    reached, violations, unsafe = 0, 0, 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        walk = random_walk(cramped_configuration(rng, env, safety), env, safety, alloc, params, seed=rng)
        unsafe += not all(collision_free(q, env, safety) for q in walk.trajectory)
        if not walk.exhausted:
            reached += 1
            violations += not has_clearance(walk.state, env, safety.clearance_d)
    ok = reached >= 99 and violations == 0 and unsafe == 0
    return ok, f"{reached}/100 walks reached clearance, {violations} postcondition violations, {unsafe} unsafe walks"


def criterion_9(out):
    rng = np.random.default_rng(9)
    anti1 = nested = jacobi = grad = travel = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 7))
        alloc = allocate_groups(n)
        params = SwarmParams(n, turn_gain=float(rng.uniform(0.05, 3.0)), delta_t=float(rng.uniform(0.1, 2.0)))
        q = random_states(n, 1, rng)[0]
        x, y, z = (int(v) for v in rng.integers(1, alloc.m + 1, 3))
        for method in ("analytic", "fd"):
            ev = lambda e: eval_bracket(e, q, alloc, params, method)
            anti1 = max(anti1, np.abs(ev(Bracket(x, y)) + ev(Bracket(y, x))).max())
            nested = max(nested, np.abs(ev(Bracket(Bracket(x, y), z)) + ev(Bracket(z, Bracket(x, y)))).max())
            jacobi = max(jacobi, np.abs(ev(Bracket(x, Bracket(y, z))) + ev(Bracket(y, Bracket(z, x)))
                                        + ev(Bracket(z, Bracket(x, y)))).max())
        k = int(rng.integers(1, 60))
        nu, u = rng.integers(1, alloc.m + 1, k), rng.uniform(0, params.input_bound, k)
        w = rng.standard_normal(2 * n)
        g = endpoint_vjp(q, nu, u, w, alloc, params)
        fd = np.array([(w @ final_positions(q, nu, u + 1e-6 * e, alloc, params)
                        - w @ final_positions(q, nu, u - 1e-6 * e, alloc, params)) / 2e-6 for e in np.eye(k)])
        grad = max(grad, np.linalg.norm(g - fd) / np.linalg.norm(fd))
        expected = effort(nu, u, alloc, params)
        travel = max(travel, abs(travel_length(rollout(q, nu, u, alloc, params)) - expected) / max(1.0, expected))

    identical = True
    for name in ("paper_6robots.json", "ncca_5robots.json"):
        s = load_scenario(name)
        for tag in ("first", "second"):
            batch(s, runs=2, out_dir=out / name / tag)
        for f in sorted((out / name / "first").glob("*.csv")):
            if f.name != "timing.csv":
                identical &= f.read_bytes() == (out / name / "second" / f.name).read_bytes()
    ok = anti1 <= 1e-6 and nested <= 1e-4 and jacobi <= 1e-4 and grad <= 1e-5 and travel <= 1e-9 and identical
    return ok, (f"antisymmetry {anti1:.1e} (depth 1), {nested:.1e} (nested); Jacobi {jacobi:.1e}; "
                f"gradient rel err {grad:.1e}; travel identity {travel:.1e}; byte-identical outputs {identical}")


def test_criterion_1_accessibility_rank(verdict):
    verdict(1, "accessibility rank", *criterion_1())


def test_criterion_2_bracket_table(verdict):
    verdict(2, "bracket pattern table", *criterion_2())


def test_criterion_3_minimum_effort(verdict):
    verdict(3, "minimum effort", *criterion_3())


def test_criterion_4_ncca_batch(verdict, tmp_path):
    verdict(4, "collision avoidance batch", *criterion_4(tmp_path))


def test_criterion_5_obstacle_worlds(verdict, tmp_path):
    verdict(5, "obstacle worlds", *criterion_5(tmp_path))


def test_criterion_6_composition_rrt(verdict, tmp_path):
    verdict(6, "composition RRT contrast", *criterion_6(tmp_path))


def test_criterion_7_primitives(verdict, tmp_path):
    verdict(7, "control primitives", *criterion_7(tmp_path))


def test_criterion_8_random_walk(verdict):
    verdict(8, "random-walk completeness", *criterion_8())


def test_criterion_9_property_suites(verdict, tmp_path):
    verdict(9, "property suites", *criterion_9(tmp_path))


if __name__ == "__main__":
    sys.exit(pytest.main([str(Path(__file__)), "-q", "-m", "acceptance"]))
