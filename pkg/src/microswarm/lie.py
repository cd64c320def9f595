"""Lie brackets of the group vector fields and the position rank test.

Every group field has, for robot ``j``, a position block ``a_j * (cos, sin)(theta_j)``
and a constant heading rate ``b_j``.  Writing the position block as the complex
number ``a_j * exp(1j * theta_j)``, the bracket of two such fields is again of
this form::

    [f, g]_j = 1j * (a^g_j * b^f_j - a^f_j * b^g_j) * exp(1j * theta_j),   rate 0

so iterated brackets are evaluated exactly.  A finite-difference route through
generic callables is kept alongside as an independent check.
"""

from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations, product
from typing import Callable, NamedTuple, Union

import numpy as np

from .dynamics import SwarmParams, check_state
from .groups import GroupAllocation

FD_STEP = 1e-6
NESTED_FD_STEP = 1e-5
RANK_RTOL = 1e-8


class Field:
    """A state-dependent field in the closed family spanned by the group fields."""

    def __init__(self, coef, rate):
        self.coef = np.asarray(coef, dtype=complex)
        self.rate = np.asarray(rate, dtype=float)

    def __call__(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        n = self.coef.size
        z = self.coef * np.exp(1j * q[2 * n :])
        return np.concatenate([np.column_stack([z.real, z.imag]).ravel(), self.rate])

    def jacobian(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        n = self.coef.size
        dz = 1j * self.coef * np.exp(1j * q[2 * n :])
        jac = np.zeros((3 * n, 3 * n))
        j = np.arange(n)
        jac[2 * j, 2 * n + j] = dz.real
        jac[2 * j + 1, 2 * n + j] = dz.imag
        return jac

    def bracket(self, other: "Field") -> "Field":
        coef = 1j * (other.coef * self.rate - self.coef * other.rate)
        return Field(coef, np.zeros_like(self.rate))


def base_field(group: int, alloc: GroupAllocation, params: SwarmParams) -> Field:
    alpha = alloc.activation(group)
    return Field(alpha.astype(complex), (1 - alpha) * params.turn_gain)


def fd_jacobian(func: Callable, q, h: float = FD_STEP) -> np.ndarray:
    """Central-difference Jacobian of ``func`` at ``q``."""
    q = np.asarray(q, dtype=float)
    cols = []
    for k in range(q.size):
        e = np.zeros_like(q)
        e[k] = h
        cols.append((np.asarray(func(q + e)) - np.asarray(func(q - e))) / (2 * h))
    return np.column_stack(cols)


def _jac(func, q, h):
    if hasattr(func, "jacobian"):
        return func.jacobian(q)
    return fd_jacobian(func, q, h)


def lie_bracket(f: Callable, g: Callable, q, h: float = FD_STEP) -> np.ndarray:
    """``[f, g](q) = Dg(q) f(q) - Df(q) g(q)``.

    Fields exposing ``jacobian`` (such as :class:`Field`) are differentiated
    analytically; plain callables fall back to central differences with step ``h``.
    """
    q = check_state(q)
    fq, gq = np.asarray(f(q)), np.asarray(g(q))
    if fq.shape != q.shape or gq.shape != q.shape:
        raise ValueError("field dimension does not match the state")
    return _jac(g, q, h) @ fq - _jac(f, q, h) @ gq


# -- bracket expressions ---------------------------------------------------


@dataclass(frozen=True)
class Bracket:
    left: "BracketExpr"
    right: "BracketExpr"

    def __str__(self):
        return f"[{expr_str(self.left)}, {expr_str(self.right)}]"


BracketExpr = Union[int, Bracket]


def expr_str(expr: BracketExpr) -> str:
    return f"f{expr}" if isinstance(expr, int) else str(expr)


def ad(v: BracketExpr, w: BracketExpr, times: int = 1) -> BracketExpr:
    """``(ad^times v, w) = [v, [v, ... [v, w]]]``."""
    for _ in range(times):
        w = Bracket(v, w)
    return w


def from_word(word) -> BracketExpr:
    """Right-normed bracket ``[a1, [a2, [..., [a_{k-1}, a_k]]]]`` of a group word."""
    expr = int(word[-1])
    for g in reversed(word[:-1]):
        expr = Bracket(int(g), expr)
    return expr


def degree(expr: BracketExpr, m: int) -> tuple:
    """Leaf count per group, ``(k_1, ..., k_m)``."""
    counts = [0] * m

    def walk(e):
        if isinstance(e, Bracket):
            walk(e.left)
            walk(e.right)
        else:
            counts[e - 1] += 1

    walk(expr)
    return tuple(counts)


def bracket_field(expr: BracketExpr, alloc: GroupAllocation, params: SwarmParams) -> Field:
    if isinstance(expr, Bracket):
        return bracket_field(expr.left, alloc, params).bracket(bracket_field(expr.right, alloc, params))
    return base_field(expr, alloc, params)


def eval_bracket(expr: BracketExpr, q, alloc: GroupAllocation, params: SwarmParams, method: str = "analytic") -> np.ndarray:
    """Evaluate a bracket expression at ``q``.

    ``method="analytic"`` uses the closed bracket family; ``method="fd"``
    recurses through :func:`lie_bracket`, differentiating nested subtrees by
    central differences (step ``1e-5``).  The fd route costs ``(6n)**depth``
    evaluations, so keep it to shallow trees.
    """
    q = check_state(q, alloc.n)
    if method == "analytic":
        return bracket_field(expr, alloc, params)(q)
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    return _fd_eval(expr, alloc, params)(q)


def _fd_eval(expr, alloc, params):
    if not isinstance(expr, Bracket):
        return base_field(expr, alloc, params)
    left = _fd_eval(expr.left, alloc, params)
    right = _fd_eval(expr.right, alloc, params)
    return lambda q: lie_bracket(left, right, q, h=NESTED_FD_STEP)


# -- enumeration and rank --------------------------------------------------


class DegreeBudget(NamedTuple):
    """Multidegree limits: one group with exactly ``exact`` factors, one with at
    most ``major`` factors and every other group with at most ``minor``."""

    exact: int = 1
    major: int = 3
    minor: int = 2


def _admits(counts, budget: DegreeBudget, m: int) -> bool:
    for i, j in permutations(range(m), 2) if m > 1 else []:
        if counts[i] != budget.exact or counts[j] > budget.major:
            continue
        if all(counts[l] <= budget.minor for l in range(m) if l not in (i, j)):
            return True
    return False


def _words(counts):
    """All distinct arrangements of a multiset given by ``counts``."""
    total = sum(counts)
    out = []

    def rec(prefix, left):
        if len(prefix) == total:
            out.append(tuple(prefix))
            return
        for g in range(len(left)):
            if left[g]:
                left[g] -= 1
                prefix.append(g + 1)
                rec(prefix, left)
                prefix.pop()
                left[g] += 1

    rec([], list(counts))
    return out


def enumerate_brackets(budget: DegreeBudget, m: int) -> list:
    """Right-normed brackets whose multidegree fits ``budget`` for some role assignment.

    Words whose last two letters coincide vanish and are skipped; of the
    mirror pair ``[..., [a, b]]`` / ``[..., [b, a]]`` only ``a < b`` is kept.
    Base fields are included.
    """
    if m < 2:
        raise ValueError("need at least 2 groups")
    if min(budget) < 0:
        raise ValueError("degree budgets must be nonnegative")
    top = max(budget)
    exprs = []
    for counts in product(range(top + 1), repeat=m):
        if sum(counts) == 0 or not _admits(counts, budget, m):
            continue
        for word in _words(counts):
            if len(word) >= 2 and word[-2] >= word[-1]:
                continue
            exprs.append(from_word(word))
    exprs.sort(key=lambda e: (len(expr_str(e)), expr_str(e)))
    return exprs


@lru_cache(maxsize=32)
def _coefficients(membership_bytes, shape, turn_gain, budget):
    membership = np.frombuffer(membership_bytes, dtype=np.int8).reshape(shape)
    alloc = GroupAllocation(membership)
    params = SwarmParams(n=alloc.n, turn_gain=turn_gain)
    exprs = enumerate_brackets(budget, alloc.m)
    coefs = np.array([bracket_field(e, alloc, params).coef for e in exprs])
    rates = np.array([bracket_field(e, alloc, params).rate for e in exprs])
    return exprs, coefs, rates


def bracket_matrix(q, alloc: GroupAllocation, params: SwarmParams, budget: DegreeBudget = DegreeBudget()) -> np.ndarray:
    """Rows are the enumerated brackets evaluated at ``q`` (full ``3n`` columns)."""
    q = check_state(q, alloc.n)
    n = alloc.n
    _, coefs, rates = _coefficients(alloc.membership.tobytes(), alloc.membership.shape, params.turn_gain, budget)
    z = coefs * np.exp(1j * q[2 * n :])[None, :]
    pos = np.stack([z.real, z.imag], axis=2).reshape(len(coefs), 2 * n)
    return np.hstack([pos, rates])


def numerical_rank(mat, rtol: float = RANK_RTOL) -> int:
    """Rank after scaling every nonzero row to unit length.

    Bracket magnitudes scale with powers of ``turn_gain``; row scaling leaves
    the rank unchanged but keeps deep brackets above the relative cutoff.
    """
    mat = np.asarray(mat, dtype=float)
    norms = np.linalg.norm(mat, axis=1)
    keep = norms > 1e-300
    if not keep.any():
        return 0
    sv = np.linalg.svd(mat[keep] / norms[keep, None], compute_uv=False)
    return int((sv > rtol * sv[0]).sum())


def position_rank(q, alloc: GroupAllocation, params: SwarmParams, budget: DegreeBudget = DegreeBudget()) -> int:
    """Rank of the bracket span restricted to the ``2n`` position coordinates."""
    return numerical_rank(bracket_matrix(q, alloc, params, budget)[:, : 2 * alloc.n])


def orientation_rank(q, alloc: GroupAllocation, params: SwarmParams, budget: DegreeBudget = DegreeBudget()) -> int:
    return numerical_rank(bracket_matrix(q, alloc, params, budget)[:, 2 * alloc.n :])


def rank_report(states, alloc: GroupAllocation, params: SwarmParams, budget: DegreeBudget = DegreeBudget()) -> dict:
    """Position and orientation ranks at each of ``states``."""
    pos, ori = [], []
    for q in states:
        pos.append(position_rank(q, alloc, params, budget))
        ori.append(orientation_rank(q, alloc, params, budget))
    hist = {}
    for r in pos:
        hist[r] = hist.get(r, 0) + 1
    return {
        "n": alloc.n,
        "m": alloc.m,
        "n_brackets": len(enumerate_brackets(budget, alloc.m)),
        "position_ranks": pos,
        "orientation_ranks": ori,
        "histogram": dict(sorted(hist.items())),
        "full_rank_fraction": sum(r == 2 * alloc.n for r in pos) / max(len(pos), 1),
    }


def random_states(n: int, count: int, rng, extent: float = 10.0) -> np.ndarray:
    """Generic states: uniform positions in ``[0, extent]^2`` and headings in ``[0, 2*pi)``."""
    pos = rng.uniform(0.0, extent, size=(count, 2 * n))
    theta = rng.uniform(0.0, 2 * np.pi, size=(count, n))
    return np.hstack([pos, theta])
