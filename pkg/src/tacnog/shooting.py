"""Indirect shooting: find q whose backward extremal reaches a prescribed
initial state at time-to-go t_f.

Newton's method uses the propagated sensitivity Phi(t_f) = dZ(t_f)/dq as the
exact Jacobian.  Converged roots are *reported* with their optimality
verdicts, never rejected: shooting alone only certifies the necessary
conditions.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .extremal import (
    DEFAULT_STEP,
    CostateParams,
    ExtremalTrajectory,
    PropagationDiverged,
    check_colinearity_free,
    check_disconjugacy,
    propagate_extremal,
)
from .frames import EngagementState, wrap_angle


@dataclass(frozen=True)
class ShootingProblem:
    z0: EngagementState
    t_f: float
    q0: CostateParams = CostateParams(0.0, 0.0, 0.0)
    tol: float = 1e-9
    max_iter: int = 50
    h: float = DEFAULT_STEP

    def __post_init__(self):
        if not self.t_f > 0:
            raise ValueError(f"t_f must be positive, got {self.t_f}")


@dataclass(eq=False)
class ShootingResult:
    q: CostateParams
    converged: bool
    iterations: int
    residual_norm: float
    residual_history: list[float]
    effort: float = math.nan
    disconjugate: bool | None = None
    colinear_free: bool | None = None
    trajectory: ExtremalTrajectory | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return bool(self.disconjugate and self.colinear_free)

    def to_dict(self) -> dict:
        return {
            "q": [self.q.p_x, self.q.p_y, self.q.c_0],
            "residual_norm": self.residual_norm,
            "effort": self.effort,
            "disconjugate": self.disconjugate,
            "colinear_free": self.colinear_free,
            "iterations": self.iterations,
        }


def _residual_from(traj: ExtremalTrajectory, z0: EngagementState) -> np.ndarray:
    Z = traj.terminal
    r = np.array([Z[0] - z0.x, Z[1] - z0.y, wrap_angle(Z[2] - z0.theta)])
    # shortest-arc tie at exactly pi goes to +pi
    if r[2] == -math.pi:
        r[2] = math.pi
    return r


def residual(q: CostateParams, prob: ShootingProblem) -> tuple[np.ndarray, bool]:
    """Boundary mismatch Z(t_f, q) - z0 (angle on the shortest arc).

    Returns (r, ok); on divergence r is an infinite sentinel and ok is False.
    """
    try:
        traj = propagate_extremal(q, prob.t_f, prob.h, filters=False)
    except PropagationDiverged:
        return np.full(3, math.inf), False
    return _residual_from(traj, prob.z0), True


def residual_jacobian(q: CostateParams, prob: ShootingProblem) -> np.ndarray:
    traj = propagate_extremal(q, prob.t_f, prob.h, filters=False)
    return traj.Phi[-1].copy()


def _try(q: CostateParams, prob: ShootingProblem):
    try:
        traj = propagate_extremal(q, prob.t_f, prob.h, filters=False)
    except PropagationDiverged:
        return None, None
    return traj, _residual_from(traj, prob.z0)


def solve(prob: ShootingProblem, filters: bool = True) -> ShootingResult:
    """Damped Newton with backtracking on ||r||."""
    q = prob.q0.as_array()
    traj, r = _try(prob.q0, prob)
    if traj is None:
        return ShootingResult(prob.q0, False, 0, math.inf, [math.inf])
    norm = float(np.linalg.norm(r))
    history = [norm]
    it = 0
    while norm >= prob.tol and it < prob.max_iter:
        it += 1
        J = traj.Phi[-1]
        try:
            dq = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            dq = np.linalg.lstsq(J, -r, rcond=None)[0]
        if not np.all(np.isfinite(dq)):
            break
        lam = 1.0
        accepted = False
        while lam > 1e-8:
            q_try = q + lam * dq
            t_try, r_try = _try(CostateParams.from_array(q_try), prob)
            if t_try is not None:
                n_try = float(np.linalg.norm(r_try))
                if n_try < (1.0 - 1e-4 * lam) * norm:
                    accepted = True
                    break
            lam *= 0.5
        if not accepted:
            break
        q, traj, r, norm = q_try, t_try, r_try, n_try
        history.append(norm)
    res = ShootingResult(
        CostateParams.from_array(q), norm < prob.tol, it, norm, history,
        effort=traj.effort, trajectory=traj,
    )
    if filters and res.converged:
        res.disconjugate = check_disconjugacy(traj)
        res.colinear_free = check_colinearity_free(traj)
    return res


def multistart(
    z0: EngagementState,
    t_f: float,
    p_q: float = 8.0,
    spacing: float = 2.0,
    cluster: float = 1e-4,
    ref_horizon: float | None = None,
    h: float = DEFAULT_STEP,
    tol: float = 1e-9,
) -> list[ShootingResult]:
    """Newton from every node of a q0 grid over [-p_q, p_q]^3; converged roots
    are clustered by q-distance and returned sorted by effort.

    With ``ref_horizon`` the grid is laid out for that horizon and stretched to
    t_f (p scales by (ref/t_f)^2, c_0 by ref/t_f).
    """
    lam = 1.0 if ref_horizon is None else t_f / ref_horizon
    axis = np.arange(-p_q, p_q + 0.5 * spacing, spacing)
    roots: list[ShootingResult] = []
    for node in itertools.product(axis, axis, axis):
        q0 = CostateParams(*node).rescaled(lam)
        res = solve(ShootingProblem(z0, t_f, q0, tol=tol, h=h), filters=False)
        if not res.converged:
            continue
        qa = res.q.as_array()
        scale = max(1.0, float(np.linalg.norm(qa)))
        if any(np.linalg.norm(qa - r.q.as_array()) < cluster * scale for r in roots):
            continue
        roots.append(res)
    for res in roots:
        res.disconjugate = check_disconjugacy(res.trajectory)
        res.colinear_free = check_colinearity_free(res.trajectory)
    roots.sort(key=lambda r: r.effort)
    return roots


def write_roots(roots: list[ShootingResult], path) -> None:
    with open(Path(path), "w") as f:
        json.dump([r.to_dict() for r in roots], f, indent=2)
