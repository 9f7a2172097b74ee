import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tacnog.frames import (
    G0,
    DimensionalScenario,
    EngagementState,
    InvalidScenario,
    canonicalize,
    decanonicalize,
    load_scenario,
    rotate_state,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    wrap_angle,
)

finite = st.floats(-1e4, 1e4, allow_nan=False)
angle = st.floats(-50, 50, allow_nan=False)


@given(angle)
def test_wrap_range_and_congruence(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert abs(math.remainder(w - a, 2 * math.pi)) < 1e-9


def test_wrap_seam_maps_to_plus_pi():
    assert wrap_angle(-math.pi) == math.pi
    assert wrap_angle(math.pi) == math.pi
    assert np.allclose(wrap_angle(np.array([0.0, 3 * math.pi])), [0.0, math.pi])


def test_state_rejects_non_finite():
    with pytest.raises(InvalidScenario):
        EngagementState(math.nan, 0, 0)
    with pytest.raises(InvalidScenario):
        EngagementState(0, math.inf, 0)


@pytest.mark.parametrize("field,value", [("speed", 0.0), ("t_f", -1.0), ("a_max", 0.0)])
def test_scenario_validation(field, value):
    kw = dict(pursuer0=EngagementState(0, 0, 0), target=(1, 1), speed=1.0, t_f=1.0, theta_f=0.0)
    kw[field] = value
    with pytest.raises(InvalidScenario):
        DimensionalScenario(**kw)


def test_case_a_canonical_state_by_hand():
    # psi = -90 - 10 = -100 deg; rotate (-10500, 1000) by it and divide by 250
    sc = DimensionalScenario(
        EngagementState(-10000, 1000, math.radians(60)), (500, 0), 250.0, 45.0, math.radians(10)
    )
    c, s = math.cos(math.radians(-100)), math.sin(math.radians(-100))
    want = ((c * -10500 - s * 1000) / 250, (s * -10500 + c * 1000) / 250, math.radians(-40))
    got = canonicalize(sc).pursuer0
    assert np.allclose([got.x, got.y, got.theta], want, atol=1e-12)


def test_canonical_final_heading_is_minus_half_pi():
    sc = DimensionalScenario(EngagementState(0, 0, 0), (3, 4), 2.0, 5.0, math.radians(33))
    tr = canonicalize(sc).transform
    # a pursuer at the target flying theta_f lands on the canonical terminal state
    z = tr.to_canonical(EngagementState(3, 4, math.radians(33)))
    assert np.allclose([z.x, z.y, z.theta], [0, 0, -math.pi / 2], atol=1e-12)


@settings(max_examples=60)
@given(finite, finite, angle, finite, finite, st.floats(0.1, 500), angle)
def test_round_trip(x, y, th, tx, ty, v, thf):
    sc = DimensionalScenario(EngagementState(x, y, th), (tx, ty), v, 10.0, thf)
    back = decanonicalize(canonicalize(sc))
    assert math.hypot(back.pursuer0.x - x, back.pursuer0.y - y) < 1e-9 * (1 + abs(x) + abs(y) + abs(tx) + abs(ty))
    assert abs(wrap_angle(back.pursuer0.theta - th)) < 1e-12
    assert abs(wrap_angle(back.theta_f - thf)) < 1e-12


@settings(max_examples=60)
@given(finite, finite, angle, finite, finite, angle, angle)
def test_rotation_covariance(x, y, th, tx, ty, thf, phi):
    """Rotating the whole engagement about any point leaves the canonical
    state unchanged."""
    sc = DimensionalScenario(EngagementState(x, y, th), (tx, ty), 3.0, 10.0, thf)
    p = rotate_state(EngagementState(x, y, th), phi)
    t = rotate_state(EngagementState(tx, ty, 0.0), phi)
    sc2 = DimensionalScenario(p, (t.x, t.y), 3.0, 10.0, thf + phi)
    a, b = canonicalize(sc).pursuer0, canonicalize(sc2).pursuer0
    scale = 1 + abs(x) + abs(y) + abs(tx) + abs(ty)
    assert abs(a.x - b.x) < 1e-9 * scale and abs(a.y - b.y) < 1e-9 * scale
    assert abs(wrap_angle(a.theta - b.theta)) < 1e-9


def test_scenario_json_round_trip(tmp_path):
    sc = DimensionalScenario(
        EngagementState(-10000, 1000, math.radians(60)), (500, 0), 250.0, 45.0, math.radians(10), 5 * G0
    )
    path = tmp_path / "s.json"
    save_scenario(sc, path)
    back = load_scenario(path)
    assert back.pursuer0 == sc.pursuer0 or np.allclose(back.pursuer0.as_array(), sc.pursuer0.as_array())
    assert back.a_max == pytest.approx(5 * G0)
    assert "a_max_g" in json.loads(path.read_text())


def test_scenario_missing_key():
    d = scenario_to_dict(
        DimensionalScenario(EngagementState(0, 0, 0), (1, 0), 1.0, 1.0, 0.0)
    )
    del d["speed_mps"]
    with pytest.raises(InvalidScenario, match="speed_mps"):
        scenario_from_dict(d)
