"""Repeated control primitives, circle fitting and selective motion.

A primitive is a short activation sequence with a fixed input per slot.  One
pass of it moves every robot by a rigid motion of the plane, so the positions
visited after each repetition lie on a circle around that motion's fixed
point.  Tuning the slot inputs lets a single robot drift while the others
return to where they started.
"""

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .dynamics import SwarmParams, check_state, positions_of, rollout
from .effort import endpoint_jacobian, final_positions
from .groups import GroupAllocation


def primitive_sequence(groups, times: int) -> np.ndarray:
    """``[g1, g2, g3]`` repeated ``times`` times, e.g. ``[g1, g2, g3]^3``."""
    return np.tile(np.asarray(groups, dtype=int), times)


def repeat_primitive(q0, primitive, u, reps: int, alloc: GroupAllocation, params: SwarmParams) -> np.ndarray:
    """States after each full pass of the primitive, shape ``(reps + 1, 3n)``."""
    primitive = np.asarray(primitive, dtype=int)
    u = np.broadcast_to(np.asarray(u, dtype=float), primitive.shape)
    traj = rollout(q0, np.tile(primitive, reps), np.tile(u, reps), alloc, params)
    return traj[:: primitive.size]


class CircleFit:
    """Least-squares circle through planar points.

    ``fit`` starts from the algebraic (Kasa) solution and refines the
    geometric distance residual.  After fitting, ``center_``, ``radius_`` and
    ``residual_`` (largest absolute radial deviation) are set.
    """

    def fit(self, xy):
        xy = np.asarray(xy, dtype=float)
        if xy.ndim != 2 or xy.shape[1] != 2 or len(xy) < 3:
            raise ValueError("need at least three 2-D points")
        x, y = xy[:, 0], xy[:, 1]
        a = np.column_stack([x, y, np.ones_like(x)])
        sol, *_ = np.linalg.lstsq(a, x**2 + y**2, rcond=None)
        center0 = sol[:2] / 2

        def radial(c):
            d = np.hypot(x - c[0], y - c[1])
            return d - d.mean()

        center = least_squares(radial, center0, xtol=1e-15, ftol=1e-15, gtol=1e-15).x
        dist = np.hypot(x - center[0], y - center[1])
        self.center_ = center
        self.radius_ = float(dist.mean())
        self.residual_ = float(np.max(np.abs(dist - self.radius_)))
        return self


def fit_circle(xy):
    """Return ``(center, radius, max_radial_residual)``."""
    c = CircleFit().fit(xy)
    return c.center_, c.radius_, c.residual_


@dataclass
class SelectiveMotionResult:
    u: np.ndarray
    target_error: float
    others_error: float
    converged: bool
    trajectory: np.ndarray = None


def _targets(q0, target, displacement, n):
    goal = positions_of(q0).copy()
    goal[target - 1] += displacement
    return goal.ravel()


def solve_selective_motion(q0, primitive, target: int, displacement, reps: int, alloc: GroupAllocation,
                           params: SwarmParams, tol: float = 1e-2, n_starts: int = 20, seed: int = 0,
                           init_scale: float = 0.25) -> SelectiveMotionResult:
    """Per-slot inputs so that ``reps`` passes move only robot ``target``.

    Nonlinear least squares on the composed map: after ``reps`` passes every
    robot other than ``target`` must be back at its start and ``target`` must
    have moved by ``displacement``.  Inputs stay in ``[0, input_bound]``.
    Both errors are max-norm position misses.
    """
    q0 = check_state(q0, alloc.n)
    primitive = np.asarray(primitive, dtype=int)
    if reps < 1:
        raise ValueError("reps must be at least 1")
    if not 1 <= target <= alloc.n:
        raise ValueError(f"target must be a robot index in 1..{alloc.n}")
    displacement = np.asarray(displacement, dtype=float)
    goal = _targets(q0, target, displacement, alloc.n)
    seq = np.tile(primitive, reps)
    L = primitive.size
    c = params.input_bound

    def resid(u):
        return final_positions(q0, seq, np.tile(u, reps), alloc, params) - goal

    def jac(u):
        full = endpoint_jacobian(q0, seq, np.tile(u, reps), alloc, params)
        return full.reshape(full.shape[0], reps, L).sum(axis=1)

    def errors(u):
        r = resid(u).reshape(-1, 2)
        mask = np.arange(alloc.n) == target - 1
        return float(np.abs(r[mask]).max()), float(np.abs(r[~mask]).max())

    zero = np.zeros(L)
    t_err, o_err = errors(zero)
    if t_err <= tol and o_err <= tol:
        return SelectiveMotionResult(zero, t_err, o_err, True)

    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_starts):
        u0 = rng.uniform(0.0, init_scale * c, size=L)
        u = least_squares(resid, u0, jac=jac, bounds=(0.0, c), xtol=1e-14, ftol=1e-14, gtol=1e-14).x
        u = np.clip(u, 0.0, c)
        t_err, o_err = errors(u)
        score = max(t_err, o_err)
        if best is None or score < best[0]:
            best = (score, u, t_err, o_err)
        if score <= tol:
            break
    score, u, t_err, o_err = best
    return SelectiveMotionResult(u, t_err, o_err, score <= tol)
