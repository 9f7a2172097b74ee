import json
import math

import numpy as np
import pytest

from tacnog.extremal import CostateParams, propagate_extremal
from tacnog.frames import EngagementState
from tacnog.shooting import (
    ShootingProblem,
    multistart,
    residual,
    residual_jacobian,
    solve,
    write_roots,
)

from refs import S51, S51_J_HIGH, S51_J_LOW


def test_recovers_parameters_from_their_own_endpoint(rng):
    """Forward construction oracle: the endpoint of a known extremal must
    shoot back to that extremal's q.  Only disconjugate extremals qualify,
    since there Phi(T) is invertible and the root is isolated.  Guesses are
    local: near-straight extremals are ill-conditioned (cond Phi ~ 1e3), and
    their basin in c_0 is narrow."""
    done = 0
    while done < 8:
        q = CostateParams.from_array(rng.uniform(-6, 6, 3))
        if not propagate_extremal(q, 1.5).optimal:
            continue
        done += 1
        z0 = EngagementState.from_array(propagate_extremal(q, 1.5, filters=False).terminal)
        guess = CostateParams.from_array(q.as_array() + rng.normal(scale=0.05, size=3))
        res = solve(ShootingProblem(z0, 1.5, guess))
        assert res.converged and res.residual_norm < 1e-9
        assert np.allclose(res.q.as_array(), q.as_array(), atol=1e-6)
        assert res.residual_history[-1] == res.residual_norm


def test_newton_converges_quadratically():
    q = CostateParams(2.0, -3.0, 1.0)
    z0 = EngagementState.from_array(propagate_extremal(q, 1.5, filters=False).terminal)
    res = solve(ShootingProblem(z0, 1.5, CostateParams(2.2, -2.9, 0.9)))
    h = res.residual_history
    tail = [r for r in h if 1e-12 < r < 1e-2]
    assert any(b < 10 * a * a for a, b in zip(tail, tail[1:]))


def test_jacobian_is_sensitivity(rng):
    prob = ShootingProblem(EngagementState(0.3, 1.0, -1.2), 1.5)
    q = CostateParams(1.0, 2.0, -0.5)
    J = residual_jacobian(q, prob)
    eps = 1e-6
    for k in range(3):
        dq = np.zeros(3)
        dq[k] = eps
        rp, _ = residual(CostateParams.from_array(q.as_array() + dq), prob)
        rm, _ = residual(CostateParams.from_array(q.as_array() - dq), prob)
        assert np.allclose((rp - rm) / (2 * eps), J[:, k], rtol=1e-5, atol=1e-7)


def test_residual_angle_on_shortest_arc():
    z_end = propagate_extremal(CostateParams(0, 0, 0), 1.0, filters=False).terminal
    # target heading offset by 3*pi - 0.1 must read as pi - 0.1
    prob = ShootingProblem(EngagementState(z_end[0], z_end[1], z_end[2] + 3 * math.pi - 0.1), 1.0)
    r, ok = residual(CostateParams(0, 0, 0), prob)
    assert ok and r[2] == pytest.approx(-(math.pi - 0.1))


def test_divergence_gives_sentinel():
    r, ok = residual(CostateParams(1e154, 1e154, 1e154), ShootingProblem(EngagementState(0, 1, 0), 1.5))
    assert not ok and np.all(np.isinf(r))


def test_horizon_must_be_positive():
    with pytest.raises(ValueError):
        ShootingProblem(EngagementState(0, 0, 0), 0.0)


@pytest.fixture(scope="module")
def s51_roots():
    z0 = EngagementState(S51["x"], S51["y"], S51["theta"])
    return multistart(z0, S51["t_f"], p_q=8, spacing=2)


def test_multistart_finds_both_reference_branches(s51_roots):
    conv = [r for r in s51_roots if r.converged]
    assert len(conv) >= 2
    efforts = [r.effort for r in conv]
    assert efforts == sorted(efforts)
    low = conv[0]
    assert abs(low.effort - S51_J_LOW) < 0.05 * S51_J_LOW and low.optimal
    near_high = [r for r in conv if abs(r.effort - S51_J_HIGH) < 0.05 * S51_J_HIGH]
    assert any(r.disconjugate is False for r in near_high)
    qs = np.array([r.q.as_array() for r in conv])
    d = np.linalg.norm(qs[:, None] - qs[None], axis=-1) + np.eye(len(qs)) * 1e9
    assert d.min() > 1e-4  # clustered: no duplicate roots


def test_root_report(tmp_path, s51_roots):
    p = tmp_path / "roots.json"
    write_roots(s51_roots, p)
    data = json.loads(p.read_text())
    assert set(data[0]) == {"q", "residual_norm", "effort", "disconjugate", "colinear_free", "iterations"}
    assert len(data) == len(s51_roots)
