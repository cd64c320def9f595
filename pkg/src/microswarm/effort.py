"""Minimum-effort control for a fixed activation sequence.

Problem::

    min_u   sum_i |active(nu_i)| * u_i * dt
    s.t.    0 <= u_i <= c
            final positions of the rollout == goal positions

Each start first drives the endpoint miss to zero with bounded Gauss-Newton,
then runs SQP on the effort.  Endpoint derivatives come from a reverse sweep
over the exact step map.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares, minimize

from .dynamics import SwarmParams, check_state
from .groups import GroupAllocation

log = __import__("logging").getLogger(__name__)


# -- endpoint map and its derivatives --------------------------------------


def _unpack(q0, nu, alloc):
    n = alloc.n
    members = alloc.membership[np.asarray(nu, dtype=int) - 1].astype(float)
    p0 = q0[0 : 2 * n : 2] + 1j * q0[1 : 2 * n : 2]
    return members, p0, q0[2 * n :]


def _headings(members, theta0, u, params):
    """Complex unit headings before every step, shape ``(k, n)``."""
    rot = (1.0 - members) * (params.turn_gain * params.delta_t * u)[:, None]
    before = np.vstack([np.zeros((1, rot.shape[1])), np.cumsum(rot, axis=0)[:-1]])
    return np.exp(1j * (theta0[None, :] + before))


def _suffix(x):
    """Exclusive reverse cumulative sum along axis 0: ``out[l] = sum_{i > l} x[i]``."""
    out = np.zeros_like(x)
    out[:-1] = np.cumsum(x[::-1], axis=0)[::-1][1:]
    return out


def final_positions(q0, nu, u, alloc: GroupAllocation, params: SwarmParams) -> np.ndarray:
    """Flat ``2n`` vector of positions after applying ``(nu, u)`` from ``q0``."""
    q0 = np.asarray(q0, dtype=float)
    u = np.asarray(u, dtype=float)
    members, p0, theta0 = _unpack(q0, nu, alloc)
    if u.size == 0:
        return q0[: 2 * alloc.n].copy()
    z = _headings(members, theta0, u, params)
    p = p0 + params.delta_t * (members * u[:, None] * z).sum(axis=0)
    return np.column_stack([p.real, p.imag]).ravel()


def endpoint_vjp(q0, nu, u, weights, alloc: GroupAllocation, params: SwarmParams) -> np.ndarray:
    """Gradient of ``weights . final_positions(u)`` with respect to ``u``.

    Reverse sweep: the adjoint of each heading collects the influence of all
    later forward moves of that robot, which is an exclusive suffix sum.
    """
    q0 = np.asarray(q0, dtype=float)
    u = np.asarray(u, dtype=float)
    members, _, theta0 = _unpack(q0, nu, alloc)
    w = np.asarray(weights, dtype=float)
    w = w[0::2] + 1j * w[1::2]
    z = _headings(members, theta0, u, params)
    dt, g = params.delta_t, params.turn_gain
    proj = np.real(np.conj(w)[None, :] * z)
    dproj = np.real(np.conj(w)[None, :] * 1j * z)
    theta_adj = _suffix(dt * members * u[:, None] * dproj)
    return dt * (members * proj).sum(axis=1) + g * dt * ((1.0 - members) * theta_adj).sum(axis=1)


def endpoint_jacobian(q0, nu, u, alloc: GroupAllocation, params: SwarmParams) -> np.ndarray:
    """``(2n, k)`` Jacobian of :func:`final_positions` with respect to ``u``."""
    q0 = np.asarray(q0, dtype=float)
    u = np.asarray(u, dtype=float)
    members, _, theta0 = _unpack(q0, nu, alloc)
    z = _headings(members, theta0, u, params)
    dt, g = params.delta_t, params.turn_gain
    later = _suffix(dt * members * u[:, None] * 1j * z)
    jac = dt * members * z + g * dt * (1.0 - members) * later
    out = np.empty((2 * alloc.n, u.size))
    out[0::2] = jac.real.T
    out[1::2] = jac.imag.T
    return out


# -- problem types ---------------------------------------------------------


@dataclass
class EffortProblem:
    q0: np.ndarray
    goal_positions: np.ndarray
    nu: np.ndarray
    alloc: GroupAllocation
    params: SwarmParams
    c: float = None
    eps: float = 1e-3

    def __post_init__(self):
        self.q0 = check_state(self.q0, self.alloc.n)
        self.goal_positions = np.asarray(self.goal_positions, dtype=float).reshape(-1)
        if self.goal_positions.size != 2 * self.alloc.n:
            raise ValueError(f"goal must hold {2 * self.alloc.n} coordinates, got {self.goal_positions.size}")
        self.nu = np.asarray(self.nu, dtype=int).reshape(-1)
        if self.nu.size < 1:
            raise ValueError("activation sequence must be nonempty")
        if self.nu.min() < 1 or self.nu.max() > self.alloc.m:
            raise ValueError(f"group indices must lie in 1..{self.alloc.m}")
        if self.c is None:
            self.c = self.params.input_bound
        if not self.c > 0 or self.c > self.params.input_bound:
            raise ValueError("input bound must lie in (0, params.input_bound]")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    @property
    def k(self) -> int:
        return self.nu.size

    def weights(self) -> np.ndarray:
        """Objective gradient: active robot count per step times ``delta_t``."""
        return self.alloc.active_counts()[self.nu - 1] * self.params.delta_t

    def residual(self, u) -> np.ndarray:
        return final_positions(self.q0, self.nu, u, self.alloc, self.params) - self.goal_positions


@dataclass
class EffortSolution:
    u: np.ndarray
    objective: float
    endpoint_error: float
    converged: bool
    iterations: int = 0
    wall_time: float = 0.0
    starts: list = field(default_factory=list)


@dataclass
class SolverOptions:
    """Multi-start settings.

    Starting inputs are drawn uniformly from ``[0, init_scale * c]``; small
    starts tend to stall in infeasible stationary points of the endpoint miss.
    """

    n_starts: int = 8
    init_scale: float = 1.0
    max_iter: int = 500
    ftol: float = 1e-9
    seed: int = 0
    ls_tol: float = 1e-12
    ls_max_nfev: int = None


# -- solver ----------------------------------------------------------------


def _feasibility(problem: EffortProblem, u0, opts):
    jac = lambda x: endpoint_jacobian(problem.q0, problem.nu, x, problem.alloc, problem.params)
    res = least_squares(problem.residual, u0, jac=jac, bounds=(0.0, problem.c),
                        xtol=opts.ls_tol, ftol=opts.ls_tol, gtol=opts.ls_tol, max_nfev=opts.ls_max_nfev)
    return np.clip(res.x, 0.0, problem.c), res.nfev


def _min_effort(problem: EffortProblem, u0, opts):
    w = problem.weights()
    jac = lambda x: endpoint_jacobian(problem.q0, problem.nu, x, problem.alloc, problem.params)
    res = minimize(
        lambda x: (w @ x, w),
        u0,
        jac=True,
        method="SLSQP",
        bounds=[(0.0, problem.c)] * problem.k,
        constraints=[{"type": "eq", "fun": problem.residual, "jac": jac}],
        options={"maxiter": opts.max_iter, "ftol": opts.ftol},
    )
    return np.clip(res.x, 0.0, problem.c), res.nit


def _solve_from(problem: EffortProblem, u0, opts: SolverOptions):
    """Reach the goal first, then trade effort against the endpoint constraint."""
    u_feas, n1 = _feasibility(problem, u0, opts)
    u_opt, n2 = _min_effort(problem, u_feas, opts)
    err_opt = np.max(np.abs(problem.residual(u_opt)))
    if err_opt > problem.eps and np.max(np.abs(problem.residual(u_feas))) < err_opt:
        return u_feas, n1 + n2
    return u_opt, n1 + n2


def min_effort_control(problem: EffortProblem, options: SolverOptions = None) -> EffortSolution:
    """Multi-start minimum-effort solve.

    Each start runs a bounded Gauss-Newton feasibility phase followed by SQP
    on the effort objective.  Returns the lowest-effort start whose endpoint
    error is within ``eps``; if none is, returns the start with the smallest
    endpoint error and ``converged=False``.
    """
    opts = options or SolverOptions()
    rng = np.random.default_rng(opts.seed)
    t0 = time.perf_counter()
    w = problem.weights()
    zero = np.zeros(problem.k)
    err0 = float(np.max(np.abs(problem.residual(zero))))
    if err0 <= problem.eps:
        # staying put is feasible and costs nothing
        return EffortSolution(zero, 0.0, err0, True, 0, time.perf_counter() - t0)
    best, starts, total = None, [], 0
    for _ in range(opts.n_starts):
        u0 = rng.uniform(0.0, opts.init_scale * problem.c, size=problem.k)
        u, iters = _solve_from(problem, u0, opts)
        total += iters
        err = float(np.max(np.abs(problem.residual(u))))
        obj = float(w @ u)
        ok = err <= problem.eps
        starts.append((obj, err, ok))
        key = (not ok, obj if ok else err)
        if best is None or key < best[0]:
            best = (key, u, obj, err, ok)
    _, u, obj, err, ok = best
    if not ok:
        log.debug("min-effort solve did not converge: endpoint error %.3g", err)
    return EffortSolution(u, obj, err, ok, total, time.perf_counter() - t0, starts)


def random_activation_sequence(k: int, m: int, seed) -> np.ndarray:
    """i.i.d. uniform group indices in ``1..m`` from a seeded generator."""
    if k < 1:
        raise ValueError("sequence length must be at least 1")
    return np.random.default_rng(seed).integers(1, m + 1, size=k)


def steps_vs_length_sweep(q0, goal_positions, alloc, params, k_values, trials: int, seed: int,
                          options: SolverOptions = None, eps: float = 1e-3) -> list:
    """Average optimal effort and solve time per horizon length.

    Each row is ``{"k", "mean_objective", "mean_time", "trials", "excluded"}``;
    runs that fail to converge are excluded from the means and counted.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    opts = options or SolverOptions()
    rows = []
    for k in k_values:
        objs, times = [], []
        for t in range(trials):
            nu = random_activation_sequence(k, alloc.m, np.random.SeedSequence([seed, k, t]))
            prob = EffortProblem(q0, goal_positions, nu, alloc, params, eps=eps)
            sol = min_effort_control(prob, opts)
            if sol.converged:
                objs.append(sol.objective)
                times.append(sol.wall_time)
        rows.append({
            "k": int(k),
            "mean_objective": float(np.mean(objs)) if objs else float("nan"),
            "mean_time": float(np.mean(times)) if times else float("nan"),
            "trials": trials,
            "excluded": trials - len(objs),
        })
    return rows
