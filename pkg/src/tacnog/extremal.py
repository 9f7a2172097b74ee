"""Extremals of the minimum-effort problem, indexed by q = (p_x, p_y, c_0).

Each extremal is generated backward from the terminal condition
(0, 0, -pi/2): X' = -cos(Theta), Y' = -sin(Theta), Theta' = -U with
U = p_x Y - p_y X + c_0.  Time t here is time-to-go, so the forward
trajectory that reaches the origin at time T starts from Z(T, q) and applies
u(s) = U(T - s, q).

The sensitivity Phi = dZ/dq is integrated alongside; its determinant delta
drives the conjugate-point (disconjugacy) filter.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import kernels
from .frames import FINAL_HEADING, EngagementState, wrap_angle

DEFAULT_STEP = 1e-3
DELTA_TOL = 1e-9
PAIR_GAP = 5
# Below this peak |U| the extremal is the zero-effort straight line, which is
# globally optimal although delta vanishes identically along it.
ZERO_EFFORT_TOL = 1e-9


class PropagationDiverged(ArithmeticError):
    pass


@dataclass(frozen=True)
class CostateParams:
    p_x: float
    p_y: float
    c_0: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.p_x, self.p_y, self.c_0)):
            raise ValueError(f"non-finite costate parameters {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_x, self.p_y, self.c_0])

    @classmethod
    def from_array(cls, q) -> "CostateParams":
        return cls(float(q[0]), float(q[1]), float(q[2]))

    def rescaled(self, lam: float) -> "CostateParams":
        """Parameters of the same extremal stretched in time by ``lam``."""
        return CostateParams(self.p_x / lam**2, self.p_y / lam**2, self.c_0 / lam)


def backward_rhs(Z, q: CostateParams) -> np.ndarray:
    X, Y, th = Z
    return np.array([-math.cos(th), -math.sin(th), -(q.p_x * Y - q.p_y * X + q.c_0)])


def variational_rhs(Z, Phi, q: CostateParams) -> np.ndarray:
    X, Y, th = Z
    A = np.array(
        [
            [0.0, 0.0, math.sin(th)],
            [0.0, 0.0, -math.cos(th)],
            [q.p_y, -q.p_x, 0.0],
        ]
    )
    B = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [-Y, X, -1.0]])
    return A @ np.asarray(Phi, dtype=float) + B


def hamiltonian(Z, U, q: CostateParams):
    """p_x cos(Theta) + p_y sin(Theta) + U**2 / 2 (with p_theta = U)."""
    th = np.asarray(Z)[..., 2]
    return q.p_x * np.cos(th) + q.p_y * np.sin(th) + 0.5 * np.asarray(U) ** 2


def extremal_control(Z, q: CostateParams):
    Z = np.asarray(Z)
    return q.p_x * Z[..., 1] - q.p_y * Z[..., 0] + q.c_0


def n_steps(T: float, h: float) -> int:
    if not (T > 0 and 0 < h <= T * (1 + 1e-12)):
        raise ValueError(f"need T > 0 and 0 < h <= T, got T={T}, h={h}")
    return max(1, int(round(T / h)))


@dataclass(frozen=True, eq=False)
class ExtremalTrajectory:
    params: CostateParams
    T: float
    t: np.ndarray = field(repr=False)
    Z: np.ndarray = field(repr=False)
    Phi: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    delta: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    disconjugate: bool | None = None
    colinear_free: bool | None = None

    @property
    def h(self) -> float:
        return self.T / (len(self.t) - 1)

    @property
    def terminal(self) -> np.ndarray:
        """Z(T, q): the forward initial state that this extremal steers home."""
        return self.Z[-1]

    @property
    def effort(self) -> float:
        return float(np.trapezoid(0.5 * self.U**2, self.t))

    @property
    def optimal(self) -> bool:
        return bool(self.disconjugate and self.colinear_free)

    def control_at(self, s: float) -> float:
        """Forward-time control u(s) = U(T - s), cubic Hermite between samples
        using the exact slope dU/dt = -p_x sin(Theta) + p_y cos(Theta)."""
        tau = min(max(self.T - s, 0.0), self.T)
        h = self.h
        k = min(int(tau / h), len(self.t) - 2)
        r = (tau - self.t[k]) / h
        q = self.params
        th0, th1 = self.Z[k, 2], self.Z[k + 1, 2]
        d0 = -q.p_x * math.sin(th0) + q.p_y * math.cos(th0)
        d1 = -q.p_x * math.sin(th1) + q.p_y * math.cos(th1)
        r2, r3 = r * r, r * r * r
        return float(
            (2 * r3 - 3 * r2 + 1) * self.U[k]
            + (r3 - 2 * r2 + r) * h * d0
            + (-2 * r3 + 3 * r2) * self.U[k + 1]
            + (r3 - r2) * h * d1
        )

    def to_csv(self, path) -> None:
        with open(Path(path), "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["t", "X", "Y", "Theta", "U", "delta", "H"])
            for k in range(len(self.t)):
                row = (self.t[k], *self.Z[k], self.U[k], self.delta[k], self.H[k])
                w.writerow([f"{v:.12g}" for v in row])


def propagate_extremal(
    q: CostateParams, T: float, h: float = DEFAULT_STEP, filters: bool = True
) -> ExtremalTrajectory:
    n = n_steps(T, h)
    raw = kernels.propagate(q.p_x, q.p_y, q.c_0, float(T), n)
    if not np.all(np.isfinite(raw[-1])):
        raise PropagationDiverged(f"extremal for {q} left the finite range before T={T}")
    Z = raw[:, :3]
    Phi = raw[:, 3:].reshape(-1, 3, 3)
    U = extremal_control(Z, q)
    traj = ExtremalTrajectory(
        params=q,
        T=float(T),
        t=np.linspace(0.0, T, n + 1),
        Z=Z,
        Phi=Phi,
        U=U,
        delta=np.linalg.det(Phi),
        H=hamiltonian(Z, U, q),
    )
    if not filters:
        return traj
    d = check_disconjugacy(traj)
    c = check_colinearity_free(traj)
    return ExtremalTrajectory(
        traj.params, traj.T, traj.t, traj.Z, traj.Phi, traj.U, traj.delta, traj.H, d, c
    )


def _zero_effort(traj: ExtremalTrajectory) -> bool:
    return float(np.max(np.abs(traj.U))) <= ZERO_EFFORT_TOL


def disconjugacy_violation_time(
    traj: ExtremalTrajectory, eps_t: float | None = None, tol: float = DELTA_TOL
) -> float | None:
    """Time of the first zero (sign change or near-zero dip) of delta on
    [eps_t, T], or None."""
    if _zero_effort(traj):
        return None
    h = traj.h
    if eps_t is None:
        eps_t = 10 * h
    start = max(1, int(math.ceil(eps_t / h - 1e-9)))
    k = kernels.disconjugacy_violation(np.ascontiguousarray(traj.delta), start, tol)
    return None if k < 0 else float(traj.t[k])


def check_disconjugacy(
    traj: ExtremalTrajectory, eps_t: float | None = None, tol: float = DELTA_TOL
) -> bool:
    return disconjugacy_violation_time(traj, eps_t, tol) is None


def colinear_pair(
    traj: ExtremalTrajectory, gap: int = PAIR_GAP, tol_pos: float | None = None
) -> tuple[float, float] | None:
    """Two interior instants whose velocity vectors lie on one common line
    through both positions, or None."""
    if _zero_effort(traj):
        return None
    h = traj.h
    Z = traj.Z
    return kernels.colinear_pair(
        np.ascontiguousarray(Z[:, 0]),
        np.ascontiguousarray(Z[:, 1]),
        np.ascontiguousarray(Z[:, 2]),
        np.ascontiguousarray(traj.U),
        h,
        int(gap),
        h if tol_pos is None else float(tol_pos),
    )


def check_colinearity_free(
    traj: ExtremalTrajectory, gap: int = PAIR_GAP, tol_pos: float | None = None
) -> bool:
    return colinear_pair(traj, gap, tol_pos) is None


@dataclass(frozen=True, eq=False)
class ForwardTrajectory:
    t: np.ndarray
    z: np.ndarray
    u: np.ndarray

    @property
    def terminal(self) -> np.ndarray:
        return self.z[-1]

    @property
    def effort(self) -> float:
        return float(np.trapezoid(0.5 * self.u**2, self.t))


def _plant(z, u):
    return np.array([math.cos(z[2]), math.sin(z[2]), u])


def forward_simulate(
    z0: EngagementState | np.ndarray,
    control: Callable[[float], float],
    t_f: float,
    h: float = DEFAULT_STEP,
) -> ForwardTrajectory:
    """RK4 on x' = cos(theta), y' = sin(theta), theta' = u(t). Heading is
    left unwrapped in the samples."""
    n = n_steps(t_f, h)
    h = t_f / n
    z = np.asarray(z0.as_array() if isinstance(z0, EngagementState) else z0, dtype=float).copy()
    t = np.linspace(0.0, t_f, n + 1)
    zs = np.empty((n + 1, 3))
    us = np.empty(n + 1)
    zs[0] = z
    for k in range(n):
        tk = t[k]
        u0 = control(tk)
        um = control(tk + 0.5 * h)
        u1 = control(tk + h)
        k1 = _plant(z, u0)
        k2 = _plant(z + 0.5 * h * k1, um)
        k3 = _plant(z + 0.5 * h * k2, um)
        k4 = _plant(z + h * k3, u1)
        z = z + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        zs[k + 1] = z
        us[k] = u0
    us[n] = control(t_f)
    return ForwardTrajectory(t, zs, us)


def replay_forward(traj: ExtremalTrajectory) -> ForwardTrajectory:
    """Fly the extremal forward from Z(T, q) under u(s) = U(T - s)."""
    return forward_simulate(traj.terminal, traj.control_at, traj.T, traj.h)


def terminal_error(z) -> np.ndarray:
    """Distance of a forward terminal state from (0, 0, -pi/2), heading mod 2pi."""
    return np.array([z[0], z[1], wrap_angle(z[2] - FINAL_HEADING)])
