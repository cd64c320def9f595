"""Seeded experiment drivers, batch aggregation and file export.

``run_experiment`` writes into ``out_dir``:

* ``trajectory_XXX.csv`` for every run that produces a trajectory,
* ``metrics.csv`` with the deterministic per-run metrics,
* ``timing.csv`` with wall times and timeout flags,
* ``report.json`` with rows, aggregates and provenance.

Run ``i`` of a batch is seeded with ``seed + i``, so a batch is reproducible
regardless of how runs are spread over worker processes.
"""

import csv
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import make_state, positions_of, rollout, travel_length
from .effort import EffortProblem, min_effort_control, random_activation_sequence, steps_vs_length_sweep
from .groups import allocate_groups
from .lie import random_states, rank_report
from .planner import (
    NC,
    RW,
    Environment,
    collision_free,
    composition_rrt,
    has_clearance,
    min_effort_plan,
    nc_ca,
)
from .primitives import fit_circle, primitive_sequence, repeat_primitive, solve_selective_motion
from .scenario import Scenario, ValidationError

TIMEOUT_FACTOR = 15.0
THREADS_ENV = "MICROSWARM_THREADS"


# -- trajectory files --------------------------------------------------------


def trajectory_header(n: int) -> list:
    cols = ["step"]
    for j in range(1, n + 1):
        cols += [f"x{j}", f"y{j}", f"theta{j}"]
    return cols


def export_trajectory(traj, path) -> Path:
    """Write a ``(T, 3n)`` trajectory as CSV, one row per step, 9 significant digits."""
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    if traj.shape[0] == 0 or traj.shape[1] % 3:
        raise ValueError("trajectory must be a nonempty (T, 3n) array")
    n = traj.shape[1] // 3
    pos = positions_of(traj)
    theta = traj[:, 2 * n :]
    per_robot = np.concatenate([pos, theta[..., None]], axis=2).reshape(len(traj), 3 * n)
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write(",".join(trajectory_header(n)) + "\n")
        for i, row in enumerate(per_robot):
            fh.write(f"{i}," + ",".join(f"{v:.9g}" for v in row) + "\n")
    return path


def read_trajectory(path) -> np.ndarray:
    """Inverse of :func:`export_trajectory`; returns states in swarm layout."""
    with Path(path).open() as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = np.array([[float(v) for v in r[1:]] for r in reader])
    n = (len(header) - 1) // 3
    if header != trajectory_header(n):
        raise ValueError("not a trajectory file")
    rows = rows.reshape(-1, n, 3)
    return np.hstack([rows[:, :, :2].reshape(len(rows), 2 * n), rows[:, :, 2]])


# -- sampling ----------------------------------------------------------------


def sample_configuration(n: int, env: Environment, safety, rng, max_tries: int = 100_000) -> np.ndarray:
    """Uniform positions in the bounds and headings in ``[0, 2*pi)``, rejected
    until collision-free with all clearances at least ``clearance_d``."""
    xmin, ymin, xmax, ymax = env.bounds
    r = safety.robot_radius
    for _ in range(max_tries):
        pos = rng.uniform([xmin + r, ymin + r], [xmax - r, ymax - r], size=(n, 2))
        q = make_state(pos, rng.uniform(0.0, 2 * np.pi, n))
        if collision_free(q, env, safety) and has_clearance(q, env, safety.clearance_d):
            return q
    raise RuntimeError("could not sample a configuration with the requested clearance")


def _unsafe(traj, env, safety) -> int:
    return int(sum(not collision_free(q, env, safety) for q in traj))


def _penetrations(traj, env, safety) -> int:
    if not env.obstacles:
        return 0
    bare = replace(env, walls=False)
    free = replace(env, obstacles=(), walls=False)
    return int(sum(collision_free(q, free, safety) and not collision_free(q, bare, safety) for q in traj))


# -- one run per kind ----------------------------------------------------------


def _run_min_effort(s: Scenario, seed: int):
    alloc = allocate_groups(s.n)
    nu = random_activation_sequence(s.k, s.m, seed)
    prob = EffortProblem(s.q0, s.goal_positions, nu, alloc, s.params)
    sol = min_effort_control(prob, replace(s.solver, seed=seed))
    traj = rollout(s.q0, nu, sol.u, alloc, s.params)
    row = {
        "objective": sol.objective,
        "endpoint_error": sol.endpoint_error,
        "converged": sol.converged,
        "travel": travel_length(traj),
        "u_min": float(sol.u.min()),
        "u_max": float(sol.u.max()),
    }
    return row, {"wall_time": sol.wall_time}, traj


def _run_steps_sweep(s: Scenario, seed: int):
    alloc = allocate_groups(s.n)
    rows = steps_vs_length_sweep(s.q0, s.goal_positions, alloc, s.params, s.options["k_values"],
                                 s.options["trials"], seed, replace(s.solver, seed=seed))
    det = {f"k{r['k']}_mean_objective": r["mean_objective"] for r in rows}
    det.update({f"k{r['k']}_excluded": r["excluded"] for r in rows})
    timing = {f"k{r['k']}_mean_time": r["mean_time"] for r in rows}
    return det, timing, None


def _instance(s: Scenario, seed: int):
    if s.experiment == "nc-ca" and s.options["random_starts"]:
        rng = np.random.default_rng(seed)
        q0 = sample_configuration(s.n, s.env, s.safety, rng)
        goal = positions_of(sample_configuration(s.n, s.env, s.safety, rng))
        return q0, goal
    return s.q0, s.goal_positions


def _run_nc_ca(s: Scenario, seed: int):
    alloc = allocate_groups(s.n)
    q0, goal = _instance(s, seed)
    plan = nc_ca(q0, goal, s.k, s.env, s.safety, alloc, s.params, seed=seed,
                 wall_budget=s.options["wall_budget"], options=s.solver)
    row = {
        "travel": plan.travel,
        "reached": plan.reached,
        "solves": plan.solves,
        "nc_phases": sum(p[0] == NC for p in plan.phases),
        "rw_phases": sum(p[0] == RW for p in plan.phases),
        "steps": len(plan.trajectory) - 1,
        "unsafe_states": _unsafe(plan.trajectory, s.env, s.safety),
    }
    timing = {"wall_time": plan.wall_time, "budget_exceeded": plan.timed_out}
    if s.options["baseline"]:
        base = min_effort_plan(q0, goal, s.k, alloc, s.params, seed=seed, options=s.solver)
        row["baseline_travel"] = base.travel
        timing["baseline_time"] = base.wall_time
    return row, timing, plan.trajectory


def _run_obstacles(s: Scenario, seed: int):
    alloc = allocate_groups(s.n)
    budget = s.options["wall_budget"]
    plan = nc_ca(s.q0, s.goal_positions, s.k, s.env, s.safety, alloc, s.params, seed=seed,
                 wall_budget=budget, options=s.solver)
    free_env = replace(s.env, obstacles=())
    free = nc_ca(s.q0, s.goal_positions, s.k, free_env, s.safety, alloc, s.params, seed=seed,
                 wall_budget=budget, options=s.solver)
    row = {
        "travel": plan.travel,
        "reached": plan.reached,
        "free_travel": free.travel,
        "free_reached": free.reached,
        "rw_phases": sum(p[0] == RW for p in plan.phases),
        "penetrations": _penetrations(plan.trajectory, s.env, s.safety),
        "unsafe_states": _unsafe(plan.trajectory, s.env, s.safety),
    }
    timing = {"wall_time": plan.wall_time, "budget_exceeded": plan.timed_out, "free_wall_time": free.wall_time}
    return row, timing, plan.trajectory


def _run_rrt(s: Scenario, seed: int):
    alloc = allocate_groups(s.n)
    o = s.options
    tree = composition_rrt(s.q0, s.goal_positions, s.env, s.safety, alloc, s.params, seed=seed,
                           node_budget=o["node_budget"], goal_tol=o["goal_tol"], wall_budget=o["wall_budget"])
    plan = nc_ca(s.q0, s.goal_positions, s.k, s.env, s.safety, alloc, s.params, seed=seed,
                 wall_budget=o["nc_wall_budget"], options=s.solver)
    row = {
        "rrt_travel": tree.travel,
        "rrt_reached": tree.reached,
        "rrt_nodes": tree.nodes,
        "rrt_goal_error": tree.info["goal_error"],
        "nc_travel": plan.travel,
        "nc_reached": plan.reached,
    }
    timing = {"rrt_wall_time": tree.wall_time, "nc_wall_time": plan.wall_time, "budget_exceeded": tree.timed_out}
    return row, timing, tree.trajectory


def _run_primitive(s: Scenario, seed: int):
    alloc = allocate_groups(s.n)
    o = s.options
    prim = primitive_sequence(o["groups"], o["times"])
    states = repeat_primitive(s.q0, prim, o["u"], o["reps"], alloc, s.params)
    pos = positions_of(states)
    fits = [fit_circle(pos[:, j]) for j in range(s.n)]
    sel = solve_selective_motion(s.q0, prim, o["target"], o["displacement"], o["selective_reps"], alloc, s.params,
                                 tol=o["tol"], seed=seed)
    row = {f"robot{j + 1}_relative_residual": f[2] / f[1] for j, f in enumerate(fits)}
    row.update({f"robot{j + 1}_radius": f[1] for j, f in enumerate(fits)})
    row.update({"selective_target_error": sel.target_error, "selective_others_error": sel.others_error,
                "selective_converged": sel.converged})
    return row, {}, states


def _run_accessibility(s: Scenario, seed: int):
    alloc = allocate_groups(s.n)
    t0 = time.perf_counter()
    states = random_states(s.n, s.options["states"], np.random.default_rng(seed), s.options["extent"])
    rep = rank_report(states, alloc, s.params)
    row = {"n_brackets": rep["n_brackets"], "full_rank_fraction": rep["full_rank_fraction"]}
    row.update({f"rank_{r}": c for r, c in rep["histogram"].items()})
    row["orientation_rank_min"] = min(rep["orientation_ranks"])
    return row, {"wall_time": time.perf_counter() - t0}, None


RUNNERS = {
    "min-effort": _run_min_effort,
    "steps-sweep": _run_steps_sweep,
    "nc-ca": _run_nc_ca,
    "obstacles": _run_obstacles,
    "rrt": _run_rrt,
    "primitive": _run_primitive,
    "accessibility": _run_accessibility,
}


def _run_index(args):
    s, index = args
    seed = s.seed + index
    try:
        row, timing, traj = RUNNERS[s.experiment](s, seed)
    except Exception as exc:  # recorded, the batch carries on
        return {"run": index, "seed": seed, "error": f"run {index}: {exc}"}, {"run": index}, None
    return {"run": index, "seed": seed, **row}, {"run": index, **timing}, traj


# -- report --------------------------------------------------------------------


@dataclass
class RunReport:
    experiment: str
    rows: list
    timing: list
    aggregate: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def recompute(self) -> dict:
        return aggregate(self.experiment, self.rows, self.timing)

    def to_json(self) -> str:
        payload = {"experiment": self.experiment, "aggregate": self.aggregate, "provenance": self.provenance,
                   "rows": self.rows, "timing": self.timing}
        return json.dumps(payload, indent=2, sort_keys=True, default=_jsonable)


def _jsonable(v):
    if isinstance(v, (np.integer, np.bool_)):
        return v.item()
    if isinstance(v, np.floating):
        return float(v)
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _mean(values):
    values = [v for v in values if v is not None and np.isfinite(v)]
    return float(np.mean(values)) if values else float("nan")


def flag_timeouts(timing: list, key: str = "wall_time", factor: float = TIMEOUT_FACTOR) -> list:
    """Per-run timeout flags: budget exceeded, or wall time above ``factor`` times the batch mean."""
    times = [t.get(key) for t in timing]
    mean = _mean(times)
    return [bool(t.get("budget_exceeded")) or (w is not None and w > factor * mean) for t, w in zip(timing, times)]


def aggregate(kind: str, rows: list, timing: list) -> dict:
    """Batch statistics; a pure function of the per-run rows and timing rows."""
    ok = [r for r in rows if "error" not in r]
    okt = [t for r, t in zip(rows, timing) if "error" not in r]
    out = {"runs": len(rows), "failures": len(rows) - len(ok)}
    if not ok:
        return out
    if kind == "min-effort":
        conv = [r for r in ok if r["converged"]]
        out.update(converged=len(conv), mean_objective=_mean([r["objective"] for r in conv]),
                   mean_travel=_mean([r["travel"] for r in ok]), min_travel=min(r["travel"] for r in ok))
    elif kind in ("nc-ca", "obstacles"):
        flags = flag_timeouts(okt)
        travel = [r["travel"] for r in ok]
        out.update(mean_travel=_mean(travel), min_travel=float(min(travel)),
                   reached_rate=sum(r["reached"] for r in ok) / len(ok),
                   timeouts=sum(flags), timeout_rate=sum(flags) / len(ok),
                   unsafe_states=sum(r["unsafe_states"] for r in ok),
                   mean_wall_time=_mean([t["wall_time"] for t in okt]))
        ref = "baseline_travel" if kind == "nc-ca" else "free_travel"
        if all(ref in r for r in ok):
            out[f"mean_{ref}"] = _mean([r[ref] for r in ok])
            out["travel_ratio"] = out["mean_travel"] / out[f"mean_{ref}"]
        if kind == "obstacles":
            out["penetrations"] = sum(r["penetrations"] for r in ok)
    elif kind == "rrt":
        rrt_t = _mean([t["rrt_wall_time"] for t in okt])
        nc_t = _mean([t["nc_wall_time"] for t in okt])
        out.update(rrt_success_rate=sum(r["rrt_reached"] for r in ok) / len(ok),
                   mean_rrt_travel=_mean([r["rrt_travel"] for r in ok]),
                   mean_nc_travel=_mean([r["nc_travel"] for r in ok]),
                   mean_rrt_wall_time=rrt_t, mean_nc_wall_time=nc_t, wall_time_ratio=rrt_t / nc_t)
        out["timeout_rate"] = sum(t["budget_exceeded"] for t in okt) / len(ok)
    elif kind == "primitive":
        res = [v for r in ok for key, v in r.items() if key.endswith("_relative_residual")]
        out.update(max_relative_residual=float(max(res)),
                   selective_converged=all(r["selective_converged"] for r in ok))
    elif kind == "accessibility":
        hist = {}
        for r in ok:
            for key, v in r.items():
                if key.startswith("rank_"):
                    hist[int(key[5:])] = hist.get(int(key[5:]), 0) + v
        out.update(histogram={str(k): v for k, v in sorted(hist.items())},
                   mode=max(hist, key=lambda k: (hist[k], k)),
                   full_rank_fraction=_mean([r["full_rank_fraction"] for r in ok]))
    elif kind == "steps-sweep":
        keys = [key for key in ok[0] if key.endswith("_mean_objective")]
        out.update({key: _mean([r[key] for r in ok]) for key in keys})
    return out


# -- drivers -------------------------------------------------------------------


def max_workers() -> int:
    """Worker processes allowed by ``MICROSWARM_THREADS`` (default: CPU count)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise ValidationError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return value


def _write_table(path, rows):
    keys = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.12g}" if isinstance(v, float) else v) for k, v in r.items()})


def batch(s: Scenario, runs: int = None, base_seed: int = None, out_dir=None) -> RunReport:
    """Run ``runs`` seeded instances (``base_seed + i``) and aggregate them."""
    runs = s.runs if runs is None else runs
    if runs < 1:
        raise ValidationError("runs must be at least 1")
    if base_seed is not None:
        s = s.with_overrides(seed=base_seed)
    s = replace(s, runs=runs)
    t0 = time.perf_counter()
    jobs = [(s, i) for i in range(runs)]
    workers = min(max_workers(), runs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_index, jobs))
    else:
        results = [_run_index(job) for job in jobs]
    rows = [r for r, _, _ in results]
    timing = [t for _, t, _ in results]
    if rows and all("error" in r for r in rows):
        raise RuntimeError(rows[0]["error"])
    report = RunReport(s.experiment, rows, timing)
    report.aggregate = report.recompute()
    report.provenance = {
        "scenario": s.name,
        "seed": s.seed,
        "runs": runs,
        "config_hash": s.config_hash(),
        "version": __version__,
        "workers": workers,
        "wall_time": time.perf_counter() - t0,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, (_, _, traj) in enumerate(results):
            if traj is not None:
                export_trajectory(traj, out / f"trajectory_{i:03d}.csv")
        _write_table(out / "metrics.csv", rows)
        _write_table(out / "timing.csv", timing)
        (out / "report.json").write_text(report.to_json() + "\n")
    return report


def run_experiment(s: Scenario, out_dir) -> RunReport:
    """Dispatch on the scenario's experiment kind and write all outputs to ``out_dir``."""
    return batch(s, out_dir=out_dir)
