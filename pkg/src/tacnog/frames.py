"""Engagement frames: translate, rotate and scale a dimensional engagement into
the canonical one (target at origin, final heading -pi/2, unit speed) and back.

Time is never rescaled here, so a canonical control is ``u / V`` and a
canonical effort is ``J / V**2``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

G0 = 9.8  # m/s^2
FINAL_HEADING = -math.pi / 2


class InvalidScenario(ValueError):
    pass


def wrap_angle(a):
    """Wrap to (-pi, pi]. Works on scalars and arrays."""
    w = np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)
    if np.ndim(w) == 0:
        return float(w)
    return w


@dataclass(frozen=True)
class EngagementState:
    x: float
    y: float
    theta: float

    def __post_init__(self):
        vals = (self.x, self.y, self.theta)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidScenario(f"non-finite state {vals}")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @classmethod
    def from_array(cls, z) -> "EngagementState":
        return cls(float(z[0]), float(z[1]), float(z[2]))


@dataclass(frozen=True)
class DimensionalScenario:
    pursuer0: EngagementState
    target: tuple[float, float]
    speed: float
    t_f: float
    theta_f: float
    a_max: float = math.inf

    def __post_init__(self):
        if not self.speed > 0:
            raise InvalidScenario(f"speed must be positive, got {self.speed}")
        if not self.t_f > 0:
            raise InvalidScenario(f"impact time must be positive, got {self.t_f}")
        if not self.a_max > 0:
            raise InvalidScenario(f"a_max must be positive, got {self.a_max}")
        object.__setattr__(self, "target", (float(self.target[0]), float(self.target[1])))


@dataclass(frozen=True)
class FrameTransform:
    """Dimensional -> canonical: p_c = R(psi) (p - target) / V, theta_c = theta + psi."""

    target: tuple[float, float]
    psi: float
    speed: float

    def to_canonical(self, s: EngagementState) -> EngagementState:
        moved = EngagementState(s.x - self.target[0], s.y - self.target[1], s.theta)
        r = rotate_state(moved, self.psi)
        return EngagementState(r.x / self.speed, r.y / self.speed, r.theta)

    def to_dimensional(self, s: EngagementState) -> EngagementState:
        r = rotate_state(
            EngagementState(s.x * self.speed, s.y * self.speed, s.theta), -self.psi
        )
        return EngagementState(r.x + self.target[0], r.y + self.target[1], r.theta)

    def positions_to_dimensional(self, xy: np.ndarray) -> np.ndarray:
        """Vectorised inverse for an (n, 2) array of canonical positions."""
        c, s = math.cos(-self.psi), math.sin(-self.psi)
        x = xy[:, 0] * self.speed
        y = xy[:, 1] * self.speed
        return np.column_stack(
            [c * x - s * y + self.target[0], s * x + c * y + self.target[1]]
        )


@dataclass(frozen=True)
class CanonicalScenario:
    pursuer0: EngagementState
    t_f: float
    transform: FrameTransform = field(repr=False)


def rotate_state(s: EngagementState, psi: float) -> EngagementState:
    c, sn = math.cos(psi), math.sin(psi)
    return EngagementState(c * s.x - sn * s.y, sn * s.x + c * s.y, s.theta + psi)


def canonicalize(sc: DimensionalScenario) -> CanonicalScenario:
    psi = wrap_angle(FINAL_HEADING - sc.theta_f)
    tf = FrameTransform(sc.target, psi, sc.speed)
    return CanonicalScenario(tf.to_canonical(sc.pursuer0), sc.t_f, tf)


def decanonicalize(cs: CanonicalScenario, a_max: float = math.inf) -> DimensionalScenario:
    tr = cs.transform
    return DimensionalScenario(
        pursuer0=tr.to_dimensional(cs.pursuer0),
        target=tr.target,
        speed=tr.speed,
        t_f=cs.t_f,
        theta_f=wrap_angle(FINAL_HEADING - tr.psi),
        a_max=a_max,
    )


def dimensionalize_control(u_canonical, speed: float):
    return speed * u_canonical


# Scenario files carry degrees and metres.


def scenario_from_dict(d: dict) -> DimensionalScenario:
    try:
        p = d["pursuer"]
        t = d["target"]
        a_max_g = d.get("a_max_g")
        return DimensionalScenario(
            pursuer0=EngagementState(p["x_m"], p["y_m"], math.radians(p["theta_deg"])),
            target=(t["x_m"], t["y_m"]),
            speed=float(d["speed_mps"]),
            t_f=float(d["impact_time_s"]),
            theta_f=math.radians(d["impact_angle_deg"]),
            a_max=math.inf if a_max_g is None else float(a_max_g) * G0,
        )
    except KeyError as e:
        raise InvalidScenario(f"scenario is missing key {e}") from None


def scenario_to_dict(sc: DimensionalScenario) -> dict:
    d = {
        "pursuer": {
            "x_m": sc.pursuer0.x,
            "y_m": sc.pursuer0.y,
            "theta_deg": math.degrees(sc.pursuer0.theta),
        },
        "target": {"x_m": sc.target[0], "y_m": sc.target[1]},
        "speed_mps": sc.speed,
        "impact_time_s": sc.t_f,
        "impact_angle_deg": math.degrees(sc.theta_f),
    }
    if math.isfinite(sc.a_max):
        d["a_max_g"] = sc.a_max / G0
    return d


def load_scenario(path) -> DimensionalScenario:
    with open(Path(path)) as f:
        return scenario_from_dict(json.load(f))


def save_scenario(sc: DimensionalScenario, path) -> None:
    with open(Path(path), "w") as f:
        json.dump(scenario_to_dict(sc), f, indent=2)
