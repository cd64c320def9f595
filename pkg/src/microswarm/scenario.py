"""JSON scenario files.

A scenario pins down the swarm, the world and one experiment::

    {
      "name": "paper_6robots",
      "experiment": "min-effort",
      "n": 6, "m": 3,
      "starts": [[x, y, theta], ...],       # n rows, length units and radians
      "goals": [[x, y], ...],               # n rows
      "params": {"delta_t": 1.0, "turn_gain": 20.0, "input_bound": 3.5},
      "env": {"bounds": [0, 0, 25, 25], "walls": true,
              "obstacles": [{"center": [x, y], "radius": r}]},
      "safety": {"robot_radius": 0.5, "clearance_d": 1.5, "horizon_h": 10,
                 "rw_max_steps": 50000},
      "solver": {"n_starts": 8},
      "k": 40, "seed": 0, "runs": 1,
      "options": {...}                      # experiment-specific, see OPTIONS
    }

Unknown keys are rejected at every level.
"""

import hashlib
import json
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from .dynamics import SwarmParams, make_state
from .effort import SolverOptions
from .groups import num_groups
from .planner import Environment, SafetyParams

EXPERIMENT_KINDS = ("min-effort", "steps-sweep", "nc-ca", "rrt", "obstacles", "primitive", "accessibility")

# experiment-specific options and their defaults
OPTIONS = {
    "min-effort": {},
    "steps-sweep": {"k_values": [20, 40, 60, 80, 100], "trials": 20},
    "nc-ca": {"wall_budget": 120.0, "random_starts": True, "baseline": True},
    "rrt": {"node_budget": 5000, "goal_tol": 0.5, "wall_budget": 600.0, "nc_wall_budget": 120.0},
    "obstacles": {"wall_budget": 120.0},
    "primitive": {"groups": [1, 2, 3], "times": 3, "reps": 200, "u": 1.0, "target": 3,
                  "displacement": [0.5, 0.0], "selective_reps": 20, "tol": 1e-2},
    "accessibility": {"states": 100, "extent": 10.0},
}

_TOP_KEYS = {"name", "experiment", "n", "m", "starts", "goals", "params", "env", "safety", "solver", "k", "seed",
             "runs", "options"}


class ValidationError(ValueError):
    """Malformed or inconsistent scenario."""


def _check_keys(where, got, allowed):
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ValidationError(f"{where}: unknown key(s) {', '.join(extra)}")


def _build(cls, where, values, convert=None):
    values = dict(values or {})
    _check_keys(where, values, {f.name for f in fields(cls)} - {"n"})
    if convert:
        values = convert(values)
    try:
        return cls(**values)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: {exc}") from None


@dataclass
class Scenario:
    name: str
    experiment: str
    n: int
    m: int
    starts: np.ndarray
    goal_positions: np.ndarray
    params: SwarmParams
    env: Environment
    safety: SafetyParams
    solver: SolverOptions
    k: int = 40
    seed: int = 0
    runs: int = 1
    options: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def q0(self) -> np.ndarray:
        return make_state(self.starts[:, :2], self.starts[:, 2])

    def config_hash(self) -> str:
        """SHA-256 of the canonical scenario (including seed and run count)."""
        raw = dict(self.raw, experiment=self.experiment, seed=self.seed, runs=self.runs, options=self.options)
        blob = json.dumps(raw, sort_keys=True, separators=(",", ":"), default=float)
        return hashlib.sha256(blob.encode()).hexdigest()

    def with_overrides(self, seed=None, runs=None, experiment=None) -> "Scenario":
        raw = dict(self.raw)
        if seed is not None:
            raw["seed"] = seed
        if runs is not None:
            raw["runs"] = runs
        if experiment is not None:
            if experiment != raw.get("experiment"):
                raw["options"] = {}
            raw["experiment"] = experiment
        return parse_scenario(raw)


def _matrix(where, value, n, cols):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: expected a numeric {n}x{cols} array") from None
    if arr.shape != (n, cols):
        raise ValidationError(f"{where}: expected shape ({n}, {cols}), got {arr.shape}")
    if not np.isfinite(arr).all():
        raise ValidationError(f"{where}: entries must be finite")
    return arr


def _int(where, value, lo):
    if isinstance(value, bool) or not isinstance(value, int) or value < lo:
        raise ValidationError(f"{where}: expected an integer >= {lo}, got {value!r}")
    return value


def parse_scenario(raw: dict) -> Scenario:
    """Validate a decoded scenario dictionary."""
    if not isinstance(raw, dict):
        raise ValidationError("scenario must be a JSON object")
    _check_keys("scenario", raw, _TOP_KEYS)
    for key in ("n", "m", "starts", "goals", "experiment"):
        if key not in raw:
            raise ValidationError(f"{key}: missing")
    kind = raw["experiment"]
    if kind not in EXPERIMENT_KINDS:
        raise ValidationError(f"experiment: must be one of {', '.join(EXPERIMENT_KINDS)}, got {kind!r}")
    n = _int("n", raw["n"], 2)
    m = _int("m", raw["m"], 1)
    if m != num_groups(n):
        raise ValidationError(f"m: must be {num_groups(n)} for n={n}, got {m}")
    starts = _matrix("starts", raw["starts"], n, 3)
    goals = _matrix("goals", raw["goals"], n, 2)

    params = _build(SwarmParams, "params", raw.get("params"), lambda s: dict(s, n=n))

    def env_conv(s):
        obs = []
        for i, o in enumerate(s.get("obstacles", [])):
            _check_keys(f"env.obstacles[{i}]", o, {"center", "radius"})
            if "center" not in o or "radius" not in o:
                raise ValidationError(f"env.obstacles[{i}]: needs center and radius")
            obs.append((tuple(o["center"]), o["radius"]))
        return dict(s, obstacles=tuple(obs), **({"bounds": tuple(s["bounds"])} if "bounds" in s else {}))

    env = _build(Environment, "env", raw.get("env"), env_conv)
    safety = _build(SafetyParams, "safety", raw.get("safety"))
    solver = _build(SolverOptions, "solver", raw.get("solver"))
    options = dict(OPTIONS[kind])
    given = raw.get("options") or {}
    _check_keys(f"options ({kind})", given, options)
    options.update(given)
    return Scenario(
        name=str(raw.get("name", "scenario")),
        experiment=kind,
        n=n,
        m=m,
        starts=starts,
        goal_positions=goals,
        params=params,
        env=env,
        safety=safety,
        solver=solver,
        k=_int("k", raw.get("k", 40), 1),
        seed=_int("seed", raw.get("seed", 0), 0),
        runs=_int("runs", raw.get("runs", 1), 1),
        options=options,
        raw=json.loads(json.dumps(raw)),
    )


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file.  Bare names resolve to bundled scenarios."""
    path = Path(path)
    if not path.exists() and path.parent == Path("."):
        bundled = resources.files("microswarm") / "scenarios" / path.name
        if bundled.is_file():
            path = Path(str(bundled))
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"{path}: {exc.strerror}") from None
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_scenario(raw)


def bundled_scenarios() -> list:
    root = resources.files("microswarm") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))
