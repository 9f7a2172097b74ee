"""Time-scaling covariance of the extremal family.

Stretching time by lam maps the extremal of q = (p_x, p_y, c_0) on [0, T]
onto the extremal of q' = (p_x / lam^2, p_y / lam^2, c_0 / lam) on
[0, lam T]: positions scale by lam, headings are unchanged and the control
scales by 1 / lam.  This is what lets a fixed-horizon network serve every
time-to-go.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .extremal import (
    DEFAULT_STEP,
    FINAL_HEADING,
    CostateParams,
    PropagationDiverged,
    backward_rhs,
    extremal_control,
    propagate_extremal,
)

DEFAULT_LAMBDAS = (0.25, 0.5, 2.0, 4.0)


@dataclass
class ScalingReport:
    n_params: int = 0
    lambdas: tuple = DEFAULT_LAMBDAS
    max_position_error: float = 0.0
    max_angle_error: float = 0.0
    max_control_error: float = 0.0
    worst: dict = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.max_position_error, self.max_angle_error, self.max_control_error)

    def as_dict(self) -> dict:
        return {
            "n_params": self.n_params,
            "lambdas": list(self.lambdas),
            "max_position_error": self.max_position_error,
            "max_angle_error": self.max_angle_error,
            "max_control_error": self.max_control_error,
            "worst": self.worst,
        }


def scaling_errors(q: CostateParams, lam: float, T: float, h: float = DEFAULT_STEP):
    """(position, angle, control) discrepancy between the stretched extremal
    and the scaled original at matching instants.

    The original comes from the fixed-step propagator; the stretched one is
    integrated independently by an adaptive 8th-order scheme, so agreement
    is not an artefact of shared arithmetic."""
    base = propagate_extremal(q, T, h, filters=False)
    q2 = q.rescaled(lam)
    sol = solve_ivp(
        lambda t, z: backward_rhs(z, q2),
        (0.0, lam * T),
        [0.0, 0.0, FINAL_HEADING],
        method="DOP853",
        t_eval=lam * base.t,
        rtol=1e-13,
        atol=1e-13,
    )
    Zs = sol.y.T
    e_pos = float(np.max(np.abs(Zs[:, :2] - lam * base.Z[:, :2])))
    e_ang = float(np.max(np.abs(Zs[:, 2] - base.Z[:, 2])))
    e_u = float(np.max(np.abs(extremal_control(Zs, q2) - base.U / lam)))
    return e_pos, e_ang, e_u


def sample_accepted(n: int, p_max: float, T: float, h: float, rng) -> list[CostateParams]:
    """Uniform draws from [-p_max, p_max]^3 kept only if both filters pass."""
    out = []
    while len(out) < n:
        q = CostateParams.from_array(rng.uniform(-p_max, p_max, 3))
        try:
            if propagate_extremal(q, T, h).optimal:
                out.append(q)
        except PropagationDiverged:
            continue
    return out


def scaling_suite(
    n: int = 100,
    lambdas=DEFAULT_LAMBDAS,
    p_max: float = 10.0,
    T: float = 1.5,
    h: float = DEFAULT_STEP,
    seed: int = 0,
) -> ScalingReport:
    rng = np.random.default_rng(seed)
    rep = ScalingReport(lambdas=tuple(lambdas))
    for q in sample_accepted(n, p_max, T, h, rng):
        for lam in lambdas:
            e = scaling_errors(q, lam, T, h)
            if max(e) > rep.max_error:
                rep.worst = {"q": [q.p_x, q.p_y, q.c_0], "lambda": lam}
            rep.max_position_error = max(rep.max_position_error, e[0])
            rep.max_angle_error = max(rep.max_angle_error, e[1])
            rep.max_control_error = max(rep.max_control_error, e[2])
        rep.n_params += 1
    return rep
