import numpy as np
import pytest

from microswarm.dynamics import positions_of, rollout
from microswarm.primitives import (
    CircleFit,
    fit_circle,
    primitive_sequence,
    repeat_primitive,
    solve_selective_motion,
)


def test_fit_exact_circle(rng):
    t = rng.uniform(0, 2 * np.pi, 30)
    xy = np.column_stack([2 + 3 * np.cos(t), -1 + 3 * np.sin(t)])
    center, radius, res = fit_circle(xy)
    np.testing.assert_allclose(center, [2, -1], atol=1e-10)
    assert radius == pytest.approx(3, abs=1e-10) and res < 1e-10


def test_fit_short_arc(rng):
    # a 30 degree arc is where the algebraic fit alone is weakest
    t = np.linspace(0, np.pi / 6, 40)
    xy = np.column_stack([5 * np.cos(t), 5 * np.sin(t)]) + rng.normal(scale=1e-4, size=(40, 2))
    c = CircleFit().fit(xy)
    assert c.radius_ == pytest.approx(5, rel=1e-2)
    assert c.residual_ < 1e-3


def test_fit_needs_three_points():
    with pytest.raises(ValueError):
        fit_circle(np.zeros((2, 2)))


def test_primitive_sequence():
    np.testing.assert_array_equal(primitive_sequence([1, 2, 3], 3), [1, 2, 3] * 3)


def test_repeat_primitive_matches_rollout(alloc6, params6, ref_q0):
    prim = primitive_sequence([1, 2, 3], 3)
    u = np.linspace(0.2, 1.0, 9)
    states = repeat_primitive(ref_q0, prim, u, 4, alloc6, params6)
    full = rollout(ref_q0, np.tile(prim, 4), np.tile(u, 4), alloc6, params6)
    np.testing.assert_array_equal(states, full[::9])


def test_repeated_primitive_traces_circles(alloc6, params6, ref_q0):
    prim = primitive_sequence([1, 2, 3], 3)
    pos = positions_of(repeat_primitive(ref_q0, prim, 1.0, 200, alloc6, params6))
    for j in range(6):
        _, radius, res = fit_circle(pos[:, j])
        assert res <= 0.01 * radius


def test_selective_zero_displacement(alloc6, params6, ref_q0):
    res = solve_selective_motion(ref_q0, primitive_sequence([1, 2, 3], 3), 3, [0, 0], 5, alloc6, params6)
    assert res.converged and not res.u.any()


def test_selective_motion_moves_one_robot(alloc6, params6, ref_q0):
    prim = primitive_sequence([1, 2, 3], 3)
    res = solve_selective_motion(ref_q0, prim, 3, [0.1, 0.0], 20, alloc6, params6)
    assert res.converged
    assert res.u.min() >= 0 and res.u.max() <= 3.5
    end = positions_of(rollout(ref_q0, np.tile(prim, 20), np.tile(res.u, 20), alloc6, params6)[-1])
    start = positions_of(ref_q0)
    np.testing.assert_allclose(end[2] - start[2], [0.1, 0.0], atol=1e-2)
    others = np.delete(np.arange(6), 2)
    assert np.abs(end[others] - start[others]).max() <= 1e-2


def test_selective_motion_validation(alloc6, params6, ref_q0):
    prim = primitive_sequence([1, 2, 3], 3)
    with pytest.raises(ValueError):
        solve_selective_motion(ref_q0, prim, 7, [0.1, 0], 5, alloc6, params6)
    with pytest.raises(ValueError):
        solve_selective_motion(ref_q0, prim, 3, [0.1, 0], 0, alloc6, params6)
