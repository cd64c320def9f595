"""Switched unicycle dynamics of a group-controlled swarm.

A swarm configuration is a flat vector ``q`` of length ``3n``::

    q = [x1, y1, x2, y2, ..., xn, yn, theta1, ..., thetan]

At each epoch one group is active: its members drive forward along their
heading, every other robot turns in place.  Within an epoch the motion is
either a pure translation at fixed heading or a pure rotation at fixed
position, so the discrete update below is exact.
"""

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .groups import GroupAllocation, check_group

TWO_PI = 2.0 * np.pi


class RobotState(NamedTuple):
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class SwarmParams:
    """Shared physical parameters.

    ``turn_gain`` is the heading change per unit of ``u * delta_t`` for a
    rotating robot (the reciprocal of the turning radius).  ``input_bound``
    is the largest admissible scalar input.
    """

    n: int
    delta_t: float = 1.0
    turn_gain: float = 0.05
    input_bound: float = 3.5

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("need at least 2 robots")
        for name in ("delta_t", "turn_gain", "input_bound"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def wrap_angle(theta):
    """Map angles into ``[0, 2*pi)``."""
    out = np.mod(theta, TWO_PI)
    return np.where(out >= TWO_PI, 0.0, out)


def angle_diff(a, b):
    """Signed shortest angular distance ``a - b`` in ``(-pi, pi]``."""
    d = np.mod(np.asarray(a) - np.asarray(b) + np.pi, TWO_PI) - np.pi
    return np.where(d == -np.pi, np.pi, d)


def make_state(positions, orientations=None) -> np.ndarray:
    """Pack ``(n, 2)`` positions and ``n`` headings into a swarm vector."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    n = pos.shape[0]
    if n < 2:
        raise ValueError("need at least 2 robots")
    theta = np.zeros(n) if orientations is None else np.asarray(orientations, dtype=float)
    if theta.shape != (n,):
        raise ValueError(f"expected {n} orientations, got shape {theta.shape}")
    return np.concatenate([pos.ravel(), wrap_angle(theta)])


def check_state(q, n=None) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.ndim != 1 or q.size % 3 or q.size < 6:
        raise ValueError(f"swarm state must be a flat vector of length 3n with n >= 2, got shape {q.shape}")
    if n is not None and q.size != 3 * n:
        raise ValueError(f"expected a state for {n} robots, got length {q.size}")
    return q


def n_robots(q) -> int:
    return np.shape(q)[-1] // 3


def positions_of(q) -> np.ndarray:
    """Positions as an ``(..., n, 2)`` array (works on single states and trajectories)."""
    q = np.asarray(q)
    n = q.shape[-1] // 3
    return q[..., : 2 * n].reshape(q.shape[:-1] + (n, 2))


def orientations_of(q) -> np.ndarray:
    q = np.asarray(q)
    n = q.shape[-1] // 3
    return q[..., 2 * n :]


def robot_state(q, j: int) -> RobotState:
    """State of robot ``j`` (1-based)."""
    n = n_robots(q)
    if not 1 <= j <= n:
        raise ValueError(f"robot index must be in 1..{n}")
    return RobotState(q[2 * j - 2], q[2 * j - 1], q[2 * n + j - 1])


def vector_field(q, alpha, params: SwarmParams) -> np.ndarray:
    """Control vector field ``f`` for activation vector ``alpha``.

    Robots with ``alpha_j = 1`` contribute ``(cos theta_j, sin theta_j)`` to the
    position part and 0 to the orientation part; the others contribute
    ``(0, 0)`` and ``turn_gain``.
    """
    q = check_state(q)
    n = n_robots(q)
    alpha = np.asarray(alpha)
    if alpha.shape != (n,):
        raise ValueError(f"activation vector must have length {n}, got shape {alpha.shape}")
    theta = q[2 * n :]
    pos = np.stack([np.cos(theta), np.sin(theta)], axis=1) * alpha[:, None]
    return np.concatenate([pos.ravel(), (1 - alpha) * params.turn_gain])


def _step(q, alpha, u, params):
    n = alpha.size
    out = q.copy()
    theta = q[2 * n :]
    dist = u * params.delta_t
    fwd = alpha == 1
    pos = out[: 2 * n].reshape(n, 2)
    pos[fwd, 0] += dist * np.cos(theta[fwd])
    pos[fwd, 1] += dist * np.sin(theta[fwd])
    rot = ~fwd
    out[2 * n :][rot] = wrap_angle(theta[rot] + params.turn_gain * dist)
    return out


def check_input(u, params: SwarmParams) -> float:
    if not 0.0 <= u <= params.input_bound:
        raise ValueError(f"input {u} outside [0, {params.input_bound}]")
    return float(u)


def step_discrete(q, group: int, u: float, alloc: GroupAllocation, params: SwarmParams) -> np.ndarray:
    """Advance the swarm by one epoch with ``group`` active and input ``u``."""
    q = check_state(q, alloc.n)
    check_input(u, params)
    return _step(q, alloc.activation(group), float(u), params)


def check_sequences(nu, u, alloc: GroupAllocation, params: SwarmParams):
    nu = np.asarray(nu, dtype=int).reshape(-1)
    u = np.asarray(u, dtype=float).reshape(-1)
    if nu.size != u.size:
        raise ValueError(f"activation sequence has length {nu.size} but control sequence has {u.size}")
    if nu.size and (nu.min() < 1 or nu.max() > alloc.m):
        raise ValueError(f"group indices must lie in 1..{alloc.m}")
    if u.size and (u.min() < 0 or u.max() > params.input_bound):
        raise ValueError(f"inputs must lie in [0, {params.input_bound}]")
    return nu, u


def rollout(q0, nu, u, alloc: GroupAllocation, params: SwarmParams) -> np.ndarray:
    """Trajectory of ``k + 1`` states as a ``(k + 1, 3n)`` array."""
    q = check_state(q0, alloc.n).copy()
    nu, u = check_sequences(nu, u, alloc, params)
    traj = np.empty((nu.size + 1, q.size))
    traj[0] = q
    members = alloc.membership
    for i, (g, ui) in enumerate(zip(nu, u)):
        q = _step(q, members[g - 1], ui, params)
        traj[i + 1] = q
    return traj


def embedded_field(q, mu, alloc: GroupAllocation, params: SwarmParams) -> np.ndarray:
    """Velocity of the embedded (convexified) system, ``sum_i mu_i f_i(q)``."""
    q = check_state(q, alloc.n)
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (alloc.m,):
        raise ValueError(f"expected {alloc.m} weights, got shape {mu.shape}")
    if (mu < 0).any():
        raise ValueError("embedded-system weights must be nonnegative")
    out = np.zeros(q.size)
    for i in range(alloc.m):
        out += mu[i] * vector_field(q, alloc.membership[i], params)
    return out


def travel_length(traj) -> float:
    """Total polyline length of all robots' position paths."""
    traj = np.atleast_2d(np.asarray(traj, dtype=float))
    if traj.shape[0] == 0:
        raise ValueError("empty trajectory")
    pos = positions_of(traj)
    return float(np.linalg.norm(np.diff(pos, axis=0), axis=2).sum())


def effort(nu, u, alloc: GroupAllocation, params: SwarmParams) -> float:
    """Sum over steps of (active robot count) * u_i * delta_t."""
    nu = np.asarray(nu, dtype=int)
    counts = alloc.active_counts()[nu - 1] if nu.size else np.zeros(0)
    return float(np.dot(counts, np.asarray(u, dtype=float)) * params.delta_t)
