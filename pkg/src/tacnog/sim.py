"""Closed-loop engagement simulation.

Guidance runs at a fixed step dt: the canonical state and time-to-go are fed
to a policy, the answer is dimensionalized, saturated and held while the
plant x' = V cos(theta), y' = V sin(theta), theta' = u / V is integrated at
the finer step h.  Policies speak canonical units: ``policy(t_g, z_c)``
returns u / V.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from . import kernels
from .extremal import DEFAULT_STEP, CostateParams, extremal_control
from .frames import (
    DimensionalScenario,
    EngagementState,
    canonicalize,
    dimensionalize_control,
    wrap_angle,
)
from .policy import PolicyNetwork, feedback_control
from .shooting import ShootingProblem, multistart, solve

TRACE_HEADER = ["t", "x", "y", "theta", "u_cmd", "u_app"]
HOLD_STEPS = 1


class Policy(Protocol):
    def __call__(self, t_g: float, z_c: EngagementState) -> float: ...


def control_effort(t, u) -> float:
    """Trapezoidal integral of u**2 / 2."""
    t = np.asarray(t, dtype=float)
    u = np.asarray(u, dtype=float)
    if t.size == 0:
        raise ValueError("empty trace")
    return float(np.trapezoid(0.5 * u * u, t))


@dataclass(eq=False)
class SimResult:
    """Trace rows are (t, x, y, theta, u_cmd, u_app).  Hold boundaries appear
    twice (old command, new command) so the trapezoid of a zero-order-hold
    signal is exact."""

    trace: np.ndarray = field(repr=False)
    t_f: float
    theta_f: float
    target: tuple[float, float]
    miss: float
    impact_time_error: float
    impact_angle_error: float
    effort: float
    saturation_fraction: float
    aborted: bool = False
    reason: str | None = None

    @property
    def t(self) -> np.ndarray:
        return self.trace[:, 0]

    @property
    def u_applied(self) -> np.ndarray:
        return self.trace[:, 5]

    def summary(self) -> dict:
        return {
            "miss_m": self.miss,
            "impact_time_error_s": self.impact_time_error,
            "impact_angle_error_deg": math.degrees(self.impact_angle_error),
            "effort": self.effort,
            "saturation_fraction": self.saturation_fraction,
            "aborted": self.aborted,
            "reason": self.reason,
        }

    def write(self, json_path, csv_path=None) -> None:
        json_path = Path(json_path)
        if csv_path is None:
            csv_path = json_path.with_suffix(".csv")
        with open(json_path, "w") as f:
            json.dump({**self.summary(), "trace": str(csv_path)}, f, indent=2)
        with open(csv_path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for row in self.trace:
                w.writerow([f"{v:.12g}" for v in row])


def _score(trace, sc: DimensionalScenario, dt: float, n_sat: int, n_cmd: int, aborted, reason):
    t = trace[:, 0]
    tx, ty = sc.target
    if aborted or t[-1] < sc.t_f - 1e-9 * max(1.0, sc.t_f):
        end = trace[-1]
        return SimResult(
            trace, sc.t_f, sc.theta_f, sc.target,
            miss=math.hypot(end[1] - tx, end[2] - ty),
            impact_time_error=math.nan,
            impact_angle_error=math.nan,
            effort=control_effort(t, trace[:, 5]),
            saturation_fraction=n_sat / max(n_cmd, 1),
            aborted=True, reason=reason,
        )
    last = t >= sc.t_f - dt - 1e-12 * sc.t_f
    miss = float(np.min(np.hypot(trace[last, 1] - tx, trace[last, 2] - ty)))
    return SimResult(
        trace, sc.t_f, sc.theta_f, sc.target,
        miss=miss,
        impact_time_error=float(t[-1] - sc.t_f),
        impact_angle_error=wrap_angle(trace[-1, 3] - sc.theta_f),
        effort=control_effort(t, trace[:, 5]),
        saturation_fraction=n_sat / max(n_cmd, 1),
    )


def run_closed_loop(
    sc: DimensionalScenario,
    policy: Policy,
    dt: float | None = None,
    h: float | None = None,
    a_max: float | None = None,
    hold_steps: int = HOLD_STEPS,
) -> SimResult:
    """Fly ``sc`` under ``policy``.

    The policy is not queried once t_g < hold_steps * dt; the last command is
    held through impact.  A policy exception or non-finite command ends the
    run early with ``aborted`` set and the partial trace kept.
    """
    if dt is None:
        dt = 0.01 * sc.t_f
    if h is None:
        h = dt / 10
    if not (dt >= h > 0):
        raise ValueError(f"need dt >= h > 0, got dt={dt}, h={h}")
    a_max = sc.a_max if a_max is None else a_max
    n_guid = max(1, int(round(sc.t_f / dt)))
    dt = sc.t_f / n_guid
    sub = max(1, int(round(dt / h)))
    hs = dt / sub
    tr = canonicalize(sc).transform
    V = sc.speed

    x, y, th = sc.pursuer0.x, sc.pursuer0.y, sc.pursuer0.theta
    rows = []
    u_cmd = 0.0
    n_sat = 0
    aborted, reason = False, None
    for k in range(n_guid):
        t0 = k * dt
        t_g = sc.t_f - t0
        if k == 0 or t_g >= hold_steps * dt - 1e-12 * sc.t_f:
            try:
                z_c = tr.to_canonical(EngagementState(x, y, th))
                u_c = float(policy(t_g, z_c))
            except Exception as e:  # noqa: BLE001 -- any policy failure aborts the run
                aborted, reason = True, f"policy failed at t={t0:.6g}: {type(e).__name__}: {e}"
                break
            if not math.isfinite(u_c):
                aborted, reason = True, f"policy returned {u_c} at t={t0:.6g}"
                break
            u_cmd = dimensionalize_control(u_c, V)
        u_app = min(max(u_cmd, -a_max), a_max)
        n_sat += u_app != u_cmd
        seg = kernels.plant_hold(x, y, th, V, u_app, hs, sub)
        ts = t0 + hs * np.arange(sub + 1)
        ts[-1] = (k + 1) * dt
        rows.append(np.column_stack([ts, seg, np.full(sub + 1, u_cmd), np.full(sub + 1, u_app)]))
        x, y, th = seg[-1]
    if not rows:
        rows.append(np.array([[0.0, x, y, th, 0.0, 0.0]]))
    trace = np.vstack(rows)
    return _score(trace, sc, dt, n_sat, len(rows), aborted, reason)


def network_policy(net: PolicyNetwork) -> Callable[[float, EngagementState], float]:
    def policy(t_g, z_c):
        return feedback_control(net, t_g, z_c.as_array())

    return policy


class ShootingOracle:
    """Exact feedback: re-solve the two-point problem from the current state
    and time-to-go, warm-started from the previous root, and return the
    extremal control at the start, p_x y - p_y x + c_0."""

    def __init__(self, q0: CostateParams, steps: int = 2000, tol: float = 1e-10):
        self.q = q0
        self.steps = steps
        self.tol = tol
        self.last_t_g: float | None = None

    @classmethod
    def for_scenario(cls, sc: DimensionalScenario, **kw) -> "ShootingOracle":
        """Start from the cheapest root of a multistart that passes both filters
        (the cheapest converged root when none does)."""
        cs = canonicalize(sc)
        roots = multistart(cs.pursuer0, cs.t_f, ref_horizon=1.5, h=cs.t_f / 3000)
        if not roots:
            raise RuntimeError("multistart found no root for this scenario")
        best = next((r for r in roots if r.optimal), roots[0])
        return cls(best.q, **kw)

    def __call__(self, t_g: float, z_c: EngagementState) -> float:
        h = min(DEFAULT_STEP, t_g / self.steps)
        res = solve(ShootingProblem(z_c, t_g, self.q, tol=self.tol, h=h), filters=False)
        if not res.converged:
            raise RuntimeError(f"shooting did not converge at t_g={t_g:.6g} (|r|={res.residual_norm:.3g})")
        self.q = res.q
        self.last_t_g = t_g
        return float(extremal_control(z_c.as_array(), res.q))
