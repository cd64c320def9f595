"""Collision avoidance for a broadcast-controlled swarm.

``nc_ca`` alternates minimum-effort control with group-based random walks:
a fresh plan is executed step by step until a collision is predicted within
a short horizon, at which point a random walk spreads the robots apart and
the controller re-plans from wherever the walk ended.  ``composition_rrt`` is
the sampling-based baseline that grows a tree in the joint position space.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .dynamics import SwarmParams, _step, check_state, positions_of, travel_length
from .effort import EffortProblem, SolverOptions, min_effort_control, random_activation_sequence
from .groups import GroupAllocation

NC = "numerical-control"
RW = "random-walk"
RRT = "rrt"


@dataclass(frozen=True)
class Environment:
    """Axis-aligned rectangle ``(xmin, ymin, xmax, ymax)`` with circular obstacles.

    The rectangle is always the sampling region; it only confines the robots
    when ``walls`` is true.
    """

    bounds: tuple = (0.0, 0.0, 20.0, 20.0)
    obstacles: tuple = ()
    walls: bool = True

    def __post_init__(self):
        b = tuple(float(v) for v in self.bounds)
        if len(b) != 4 or not (b[0] < b[2] and b[1] < b[3]):
            raise ValueError(f"bounds must be (xmin, ymin, xmax, ymax) with positive extent, got {self.bounds}")
        obs = []
        for center, radius in self.obstacles:
            if not radius > 0:
                raise ValueError("obstacle radii must be positive")
            obs.append(((float(center[0]), float(center[1])), float(radius)))
        object.__setattr__(self, "bounds", b)
        object.__setattr__(self, "obstacles", tuple(obs))

    def obstacle_arrays(self):
        if not self.obstacles:
            return np.zeros((0, 2)), np.zeros(0)
        return np.array([c for c, _ in self.obstacles]), np.array([r for _, r in self.obstacles])


@dataclass(frozen=True)
class SafetyParams:
    robot_radius: float = 0.25
    clearance_d: float = 1.0
    horizon_h: int = 10
    rw_max_steps: int = 50_000
    inflation: float = 1.25

    def __post_init__(self):
        if not self.robot_radius > 0:
            raise ValueError("robot_radius must be positive")
        if not self.clearance_d > 2 * self.robot_radius:
            raise ValueError("clearance_d must exceed twice the robot radius")
        if self.horizon_h < 1:
            raise ValueError("horizon_h must be at least 1")
        if self.rw_max_steps < 0:
            raise ValueError("rw_max_steps must be nonnegative")


@dataclass
class PlanResult:
    trajectory: np.ndarray
    phases: list
    travel: float
    wall_time: float
    timed_out: bool
    reached: bool = False
    solves: int = 0
    nodes: int = 0
    info: dict = field(default_factory=dict)


# -- predicates --------------------------------------------------------------


def _pair_distances(pos):
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.hypot(diff[..., 0], diff[..., 1])
    iu = np.triu_indices(len(pos), 1)
    return d[iu]


def _obstacle_gaps(pos, env):
    centers, radii = env.obstacle_arrays()
    if not len(radii):
        return np.zeros(0)
    diff = pos[:, None, :] - centers[None, :, :]
    return (np.hypot(diff[..., 0], diff[..., 1]) - radii[None, :]).ravel()


def collision_free(q, env: Environment, safety: SafetyParams, scale: float = 1.0) -> bool:
    """Robots are disks of ``robot_radius`` (times ``scale``): no overlap with
    each other, with obstacles or with the walls.  Touching is allowed."""
    pos = positions_of(np.asarray(q, dtype=float))
    r = safety.robot_radius * scale
    if env.walls:
        xmin, ymin, xmax, ymax = env.bounds
        if (pos[:, 0] < xmin + r).any() or (pos[:, 0] > xmax - r).any():
            return False
        if (pos[:, 1] < ymin + r).any() or (pos[:, 1] > ymax - r).any():
            return False
    if (_pair_distances(pos) < 2 * r).any():
        return False
    return not (_obstacle_gaps(pos, env) < r).any()


def has_clearance(q, env: Environment, d: float) -> bool:
    """All pairwise distances and all obstacle-boundary gaps are at least ``d``."""
    pos = positions_of(np.asarray(q, dtype=float))
    return bool((_pair_distances(pos) >= d).all() and (_obstacle_gaps(pos, env) >= d).all())


def predict_collision(q, u_plan, nu_plan, env: Environment, safety: SafetyParams, alloc: GroupAllocation,
                      params: SwarmParams) -> bool:
    """Simulate up to ``horizon_h`` planned steps; flag any state that breaks
    the inflated safety margins."""
    q = np.asarray(q, dtype=float)
    u_plan = np.asarray(u_plan, dtype=float)
    nu_plan = np.asarray(nu_plan, dtype=int)
    if u_plan.size != nu_plan.size or u_plan.size == 0:
        raise ValueError("plans must be nonempty and of equal length")
    for g, u in zip(nu_plan[: safety.horizon_h], u_plan[: safety.horizon_h]):
        q = _step(q, alloc.membership[g - 1], u, params)
        if not collision_free(q, env, safety, safety.inflation):
            return True
    return False


# -- random walk -------------------------------------------------------------


@dataclass
class RandomWalkResult:
    state: np.ndarray
    trajectory: np.ndarray
    steps: int
    attempts: int
    exhausted: bool
    nu: list = field(default_factory=list)
    u: list = field(default_factory=list)


def random_walk(q, env: Environment, safety: SafetyParams, alloc: GroupAllocation, params: SwarmParams,
                seed=None, min_steps: int = 0) -> RandomWalkResult:
    """Group-based random walk until every clearance reaches ``clearance_d``.

    Each proposal activates a uniformly random group with a uniform input in
    ``(0, input_bound]``; proposals that would collide are discarded.  Stops
    once at least ``min_steps`` steps were taken and clearance holds, or after
    ``rw_max_steps`` proposals (``exhausted``).
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    q = check_state(q, alloc.n).copy()
    states, nus, us = [q], [], []
    attempts = 0
    c = params.input_bound
    while len(nus) < min_steps or not has_clearance(q, env, safety.clearance_d):
        if attempts >= safety.rw_max_steps:
            return RandomWalkResult(q, np.array(states), len(nus), attempts, True, nus, us)
        attempts += 1
        g = int(rng.integers(1, alloc.m + 1))
        u = c * (1.0 - rng.random())
        cand = _step(q, alloc.membership[g - 1], u, params)
        if collision_free(cand, env, safety):
            q = cand
            states.append(q)
            nus.append(g)
            us.append(u)
    return RandomWalkResult(q, np.array(states), len(nus), attempts, False, nus, us)


# -- NC-CA -------------------------------------------------------------------


def goal_error(q, goal_positions) -> float:
    q = np.asarray(q)
    n = q.size // 3
    return float(np.max(np.abs(q[: 2 * n] - np.asarray(goal_positions, dtype=float).reshape(-1))))


def nc_ca(q_start, goal_positions, k: int, env: Environment, safety: SafetyParams, alloc: GroupAllocation,
          params: SwarmParams, seed=0, wall_budget: float = 60.0, options: SolverOptions = None,
          eps: float = 1e-3, max_rounds: int = 10_000) -> PlanResult:
    """Numerical control with collision avoidance.

    Every round solves a minimum-effort problem from the current state with a
    fresh random activation sequence and executes it step by step.  Before
    each step the next ``horizon_h`` steps of the plan are checked; on a
    predicted collision the round switches to a random walk and re-plans
    afterwards.  Stops when all positions are within ``eps`` of the goal.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    opts = options or SolverOptions(n_starts=2)
    q = check_state(q_start, alloc.n).copy()
    goal = np.asarray(goal_positions, dtype=float).reshape(-1)
    traj = [q]
    phases = []
    solves = 0
    timed_out = False
    rw_exhausted = 0
    for _ in range(max_rounds):
        if goal_error(q, goal) <= eps and phases:
            break
        if time.perf_counter() - t0 > wall_budget:
            timed_out = True
            break
        nu = random_activation_sequence(k, alloc.m, rng)
        run_opts = SolverOptions(**{**opts.__dict__, "seed": int(rng.integers(2**31))})
        sol = min_effort_control(EffortProblem(q, goal, nu, alloc, params, eps=eps), run_opts)
        solves += 1
        start = len(traj) - 1
        collided = False
        for i, (g, u) in enumerate(zip(nu, sol.u)):
            if predict_collision(q, sol.u[i:], nu[i:], env, safety, alloc, params):
                collided = True
                break
            q = _step(q, alloc.membership[g - 1], u, params)
            traj.append(q)
        phases.append((NC, start, len(traj) - 1))
        if goal_error(q, goal) <= eps:
            break
        if collided:
            executed = len(traj) - 1 - start
            walk = random_walk(q, env, safety, alloc, params, rng, min_steps=0 if executed else 1)
            rw_exhausted += walk.exhausted
            traj.extend(walk.trajectory[1:])
            q = walk.state
            phases.append((RW, len(traj) - 1 - walk.steps, len(traj) - 1))
    trajectory = np.array(traj)
    return PlanResult(
        trajectory=trajectory,
        phases=phases,
        travel=travel_length(trajectory),
        wall_time=time.perf_counter() - t0,
        timed_out=timed_out,
        reached=goal_error(q, goal) <= eps,
        solves=solves,
        info={"random_walk_exhausted": rw_exhausted},
    )


def min_effort_plan(q_start, goal_positions, k: int, alloc: GroupAllocation, params: SwarmParams, seed=0,
                    options: SolverOptions = None, eps: float = 1e-3) -> PlanResult:
    """Collision-ignoring minimum-effort plan with one random activation sequence."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    nu = random_activation_sequence(k, alloc.m, rng)
    opts = options or SolverOptions(n_starts=2)
    opts = SolverOptions(**{**opts.__dict__, "seed": int(rng.integers(2**31))})
    sol = min_effort_control(EffortProblem(q_start, goal_positions, nu, alloc, params, eps=eps), opts)
    q = check_state(q_start, alloc.n).copy()
    traj = [q]
    for g, u in zip(nu, sol.u):
        q = _step(q, alloc.membership[g - 1], u, params)
        traj.append(q)
    trajectory = np.array(traj)
    return PlanResult(trajectory, [(NC, 0, k)], travel_length(trajectory), time.perf_counter() - t0,
                      False, sol.converged, 1, info={"objective": sol.objective})


# -- composition RRT ---------------------------------------------------------


def _steer(q, target, g, env, safety, alloc, params, max_micro, rng):
    """Extend from ``q`` with group ``g`` active toward ``target`` positions.

    While ``g`` stays active its robots keep their headings, so the micro-steps
    add up to one straight run of length ``D`` and the other robots turn by
    ``turn_gain * D``.  ``D`` minimizes the summed squared distance of the
    active robots to their targets (a projection onto the headings); when that
    is not positive a random length is used so the extension still turns the
    idle robots.  The run is split into equal inputs, at most ``max_micro`` of
    them, and truncated before the first colliding micro-step.
    """
    alpha = alloc.membership[g - 1]
    n = alloc.n
    c = params.input_bound
    fwd = alpha == 1
    theta = q[2 * n :][fwd]
    gap = (target.reshape(n, 2) - q[: 2 * n].reshape(n, 2))[fwd]
    length = 0.0
    if fwd.any():
        length = (gap[:, 0] * np.cos(theta) + gap[:, 1] * np.sin(theta)).mean() / params.delta_t
    if not length > 1e-9:
        length = c * (1.0 - rng.random())
    length = min(length, max_micro * c)
    count = int(np.ceil(length / c - 1e-12))
    u = length / count
    us, states = [], []
    for _ in range(count):
        q = _step(q, alpha, u, params)
        if not collision_free(q, env, safety):
            break
        us.append(u)
        states.append(q)
    return us, states


def composition_rrt(q_start, goal_positions, env: Environment, safety: SafetyParams, alloc: GroupAllocation,
                    params: SwarmParams, seed=0, node_budget: int = 100_000, goal_tol: float = 0.5,
                    goal_bias: float = 0.1, max_micro: int = 20,
                    wall_budget: float = float("inf")) -> PlanResult:
    """RRT in the ``2n``-dimensional joint position space.

    Samples are uniform over the bounds for every robot (the goal with
    probability ``goal_bias``).  The nearest node in Euclidean position
    distance is extended by activating a uniformly random group for up to
    ``max_micro`` equal steps (see ``_steer``); each step translates the active
    robots and turns the rest.  Every added node is collision-free.
    Succeeds when a node is within ``goal_tol`` (max-norm) of the goal.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    q0 = check_state(q_start, alloc.n).copy()
    n = alloc.n
    goal = np.asarray(goal_positions, dtype=float).reshape(-1)
    xmin, ymin, xmax, ymax = env.bounds
    lo = np.tile([xmin, ymin], n)
    hi = np.tile([xmax, ymax], n)

    cap = min(node_budget, 1 << 16)
    pos = np.empty((cap, 2 * n))
    nodes = [q0]
    parents = [-1]
    edges = [([], [])]
    pos[0] = q0[: 2 * n]
    found = 0 if goal_error(q0, goal) <= goal_tol else -1
    timed_out = False
    while found < 0:
        if len(nodes) >= node_budget or time.perf_counter() - t0 > wall_budget:
            timed_out = True
            break
        target = goal if rng.random() < goal_bias else rng.uniform(lo, hi)
        near = int(np.argmin(((pos[: len(nodes)] - target) ** 2).sum(axis=1)))
        g = int(rng.integers(1, alloc.m + 1))
        us, states = _steer(nodes[near], target, g, env, safety, alloc, params, max_micro, rng)
        if not us:
            continue
        if len(nodes) == cap:
            cap *= 2
            pos = np.vstack([pos, np.empty_like(pos)])
        pos[len(nodes)] = states[-1][: 2 * n]
        nodes.append(states[-1])
        parents.append(near)
        edges.append(([g] * len(us), us))
        if goal_error(states[-1], goal) <= goal_tol:
            found = len(nodes) - 1

    end = found if found >= 0 else int(np.argmin(((pos[: len(nodes)] - goal) ** 2).sum(axis=1)))
    chain = []
    i = end
    while i > 0:
        chain.append(i)
        i = parents[i]
    q = q0
    traj = [q0]
    nu_all, u_all = [], []
    for i in reversed(chain):
        for g, u in zip(*edges[i]):
            q = _step(q, alloc.membership[g - 1], u, params)
            traj.append(q)
            nu_all.append(g)
            u_all.append(u)
    trajectory = np.array(traj)
    return PlanResult(
        trajectory=trajectory,
        phases=[(RRT, 0, len(traj) - 1)],
        travel=travel_length(trajectory),
        wall_time=time.perf_counter() - t0,
        timed_out=timed_out,
        reached=found >= 0,
        nodes=len(nodes),
        info={"nu": nu_all, "u": u_all, "goal_error": goal_error(q, goal), "tree": (parents, edges)},
    )


def plan_metrics(result: PlanResult) -> dict:
    """Travel, wall time, timeout flag and phase counts of one plan."""
    counts = {}
    for kind, a, b in result.phases:
        counts[kind] = counts.get(kind, 0) + 1
    travel = travel_length(result.trajectory) if len(result.trajectory) else 0.0
    return {
        "travel": travel,
        "wall_time": result.wall_time,
        "timed_out": bool(result.timed_out),
        "reached": bool(result.reached),
        "phase_counts": counts,
        "steps": max(len(result.trajectory) - 1, 0),
    }
