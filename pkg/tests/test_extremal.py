import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from tacnog import kernels
from tacnog.extremal import (
    CostateParams,
    PropagationDiverged,
    backward_rhs,
    check_colinearity_free,
    check_disconjugacy,
    colinear_pair,
    disconjugacy_violation_time,
    forward_simulate,
    n_steps,
    propagate_extremal,
    replay_forward,
    terminal_error,
    variational_rhs,
)


def random_q(rng, n, p=10.0):
    return [CostateParams.from_array(rng.uniform(-p, p, 3)) for _ in range(n)]


def test_constant_turn_matches_closed_form(backend):
    c0 = 1.7
    tr = propagate_extremal(CostateParams(0.0, 0.0, c0), 1.5, filters=False)
    t = tr.t
    assert np.allclose(tr.Z[:, 0], (1 - np.cos(c0 * t)) / c0, atol=1e-12)
    assert np.allclose(tr.Z[:, 1], np.sin(c0 * t) / c0, atol=1e-12)
    assert np.allclose(tr.Z[:, 2], -math.pi / 2 - c0 * t, atol=1e-12)
    assert np.allclose(tr.U, c0)


def test_matches_independent_integrator(backend, rng):
    for q in random_q(rng, 5):
        tr = propagate_extremal(q, 1.5, filters=False)
        sol = solve_ivp(lambda t, z: backward_rhs(z, q), (0, 1.5), [0, 0, -math.pi / 2],
                        method="DOP853", t_eval=tr.t, rtol=1e-12, atol=1e-12)
        assert np.max(np.abs(sol.y.T - tr.Z)) < 1e-9


def test_hamiltonian_is_conserved(backend, rng):
    for q in random_q(rng, 20):
        tr = propagate_extremal(q, 1.5, filters=False)
        assert np.std(tr.H) < 1e-8


def test_sensitivity_matches_finite_differences(backend, rng):
    eps = 1e-6
    for q in random_q(rng, 10):
        Phi = propagate_extremal(q, 1.5, filters=False).Phi[-1]
        fd = np.empty((3, 3))
        for k in range(3):
            dq = np.zeros(3)
            dq[k] = eps
            zp = propagate_extremal(CostateParams.from_array(q.as_array() + dq), 1.5, filters=False).terminal
            zm = propagate_extremal(CostateParams.from_array(q.as_array() - dq), 1.5, filters=False).terminal
            fd[:, k] = (zp - zm) / (2 * eps)
        assert np.linalg.norm(Phi - fd) <= 1e-4 * np.linalg.norm(fd)


def test_variational_rhs_is_jacobian_of_flow(rng):
    """The sensitivity ODE's right-hand side is d/dq of the state RHS along Phi."""
    q = CostateParams(1.0, -2.0, 0.5)
    Z = np.array([0.3, -0.2, 1.1])
    Phi = rng.normal(size=(3, 3))
    eps = 1e-7
    f = lambda z, qq: backward_rhs(z, qq)
    num = np.empty((3, 3))
    for k in range(3):
        dq = np.zeros(3)
        dq[k] = eps
        qp, qm = CostateParams.from_array(q.as_array() + dq), CostateParams.from_array(q.as_array() - dq)
        num[:, k] = (f(Z + eps * Phi[:, k], qp) - f(Z - eps * Phi[:, k], qm)) / (2 * eps)
    assert np.allclose(variational_rhs(Z, Phi, q), num, atol=1e-7)


def test_forward_replay_closes(backend, rng):
    for q in random_q(rng, 10):
        tr = propagate_extremal(q, 1.5, filters=False)
        fw = replay_forward(tr)
        assert np.max(np.abs(terminal_error(fw.terminal))) < 1e-6
        assert abs(fw.effort - tr.effort) < 1e-6 * max(1.0, tr.effort)


def test_control_interpolation_between_samples():
    q = CostateParams(3.0, -4.0, 1.0)
    coarse = propagate_extremal(q, 1.5, 1e-3, filters=False)
    fine = propagate_extremal(q, 1.5, 1e-4, filters=False)
    for k in range(5, 15000, 997):
        s = 1.5 - fine.t[k]
        assert abs(coarse.control_at(s) - fine.U[k]) < 1e-9


def test_straight_line_forward():
    fw = forward_simulate(np.array([0.0, 2.0, -math.pi / 2]), lambda t: 0.0, 2.0)
    assert np.max(np.abs(terminal_error(fw.terminal))) < 1e-12
    assert fw.effort == 0.0


def test_zero_effort_line_passes_filters(backend):
    tr = propagate_extremal(CostateParams(0.0, 3.0, 0.0), 1.5)
    assert np.max(np.abs(tr.delta)) < 1e-12
    assert tr.disconjugate and tr.colinear_free


def test_full_loop_is_rejected(backend):
    # a constant turn through more than one revolution revisits a point with the same heading
    c0 = 1.2 * 2 * math.pi / 1.5
    tr = propagate_extremal(CostateParams(0.0, 0.0, c0), 1.5)
    assert not tr.colinear_free
    t1, t2 = colinear_pair(tr)
    assert abs((t2 - t1) * c0 - 2 * math.pi) < 0.02


def test_short_turn_is_accepted(backend):
    assert propagate_extremal(CostateParams(0.0, 0.0, 1.0), 1.5).optimal


def test_flagged_pairs_are_genuinely_colinear(backend, rng):
    """Every reported pair satisfies both colinearity equations when the
    extremal is re-integrated ten times finer."""
    found = 0
    for q in random_q(rng, 40):
        tr = propagate_extremal(q, 1.5, filters=False)
        pair = colinear_pair(tr)
        if pair is None:
            continue
        found += 1
        fine = propagate_extremal(q, 1.5, 1e-4, filters=False)
        i, j = (int(round(t / 1e-4)) for t in pair)
        X, Y, th = fine.Z[:, 0], fine.Z[:, 1], fine.Z[:, 2]
        a = math.sin(th[j] - th[i])
        b = (X[j] - X[i]) * math.sin(th[i]) - (Y[j] - Y[i]) * math.cos(th[i])
        assert abs(a) < 1e-3 and abs(b) < 1e-3
        assert 0 < pair[0] < pair[1] < 1.5
    assert found > 0


def test_disconjugacy_kernel_synthetic():
    t = np.linspace(0, 1, 101)
    assert kernels.disconjugacy_violation(t**3 + 0.1, 10, 1e-9) == -1
    d = np.sin(6 * t) + 0.01  # crosses zero near t = pi/6
    k = kernels.disconjugacy_violation(d, 10, 1e-9)
    assert d[k - 1] > 0 > d[k]
    # a touch-down without a sign change is still a violation
    dip = (t - 0.5) ** 2
    assert kernels.disconjugacy_violation(dip, 10, 1e-9) == 50
    # violations before the start index are ignored
    assert kernels.disconjugacy_violation(-t + 0.05, 10, 1e-9) == -1


def test_kernel_backends_agree(rng):
    mods = kernels.available_backends()
    if len(mods) < 2:
        pytest.skip("compiled extension not built")
    py, cy = mods["python"], mods["cython"]
    for q in random_q(rng, 15, 15.0):
        a = py.propagate(q.p_x, q.p_y, q.c_0, 1.5, 1500)
        b = cy.propagate(q.p_x, q.p_y, q.c_0, 1.5, 1500)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
        X, Y, th = (np.ascontiguousarray(b[:, i]) for i in range(3))
        U = q.p_x * Y - q.p_y * X + q.c_0
        delta = np.ascontiguousarray(np.linalg.det(b[:, 3:].reshape(-1, 3, 3)))
        assert py.disconjugacy_violation(delta, 10, 1e-9) == cy.disconjugacy_violation(delta, 10, 1e-9)
        pa = py.colinear_pair(X, Y, th, U, 1e-3, 5, 1e-3)
        pb = cy.colinear_pair(X, Y, th, U, 1e-3, 5, 1e-3)
        assert (pa is None) == (pb is None)
        if pa is not None:
            assert np.allclose(pa, pb, atol=1e-12)
    hp = py.plant_hold(1.0, 2.0, 0.3, 250.0, 30.0, 1e-3, 500)
    hc = cy.plant_hold(1.0, 2.0, 0.3, 250.0, 30.0, 1e-3, 500)
    assert np.allclose(hp, hc, rtol=1e-13, atol=1e-9)


def test_divergence_is_reported():
    with pytest.raises(PropagationDiverged):
        propagate_extremal(CostateParams(1e154, 1e154, 1e154), 1.5)


def test_step_validation():
    with pytest.raises(ValueError):
        n_steps(1.0, 0.0)
    with pytest.raises(ValueError):
        n_steps(1.0, 2.0)
    assert n_steps(1.5, 1e-3) == 1500


def test_violation_time_for_conjugate_branch(backend):
    """The costly branch of the reference engagement loses disconjugacy."""
    tr = propagate_extremal(CostateParams(-4.4831, -14.9443, 0.9972), 2.7)
    t = disconjugacy_violation_time(tr)
    assert t is not None and 0 < t < 2.7
    assert not check_disconjugacy(tr)
    assert check_colinearity_free(propagate_extremal(CostateParams(1.6272, 5.4827, -2.6996), 2.7))
