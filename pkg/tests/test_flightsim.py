import math

import numpy as np
import pytest

from skybench.errors import InvalidArgumentError, MissionInfeasibleError
from skybench.flightsim import (
    FlightParams,
    Mission,
    StateSample,
    camera_pose_at,
    coordinated_turn_rate_dps,
    generate_trajectory,
    load_mission,
    preset_oscillating,
    preset_three_loops,
    save_mission,
    turn_radius,
)
from skybench.geometry import quat_rotate, rotation_angle_deg

from oracles import oracle_path_length


def straight_mission(length=100.0, alt=300.0):
    return Mission(waypoints=np.array([[0, 0, alt], [0, length, alt]]), init_leg_length=0.0)


def test_straight_mission_displacement_and_level_bank():
    traj = generate_trajectory(straight_mission(100.0), FlightParams(airspeed=10.0))
    assert traj[-1].t_us == pytest.approx(10.0e6, abs=2e6 / 31)
    disp = np.linalg.norm(traj[-1].pose.t - traj[0].pose.t)
    assert disp == pytest.approx(100.0, abs=0.5)
    assert max(abs(s.bank) for s in traj) == 0.0


def test_coordinated_turn_formulas():
    assert coordinated_turn_rate_dps(25.0, 45.0) == pytest.approx(22.48, abs=0.01)
    assert turn_radius(25.0, 45.0) == pytest.approx(63.71, abs=0.01)


def test_bank_slew_duration():
    # 0 -> 45 deg at 25 deg/s takes 1.8 s
    assert 45.0 / 25.0 == pytest.approx(1.8)
    m = Mission(waypoints=np.array([[0, 0, 300], [0, 400, 300], [400, 400, 300]]),
                init_leg_length=0.0)
    p = FlightParams(airspeed=10.0, max_roll_rate=25.0, max_bank=45.0)
    traj = generate_trajectory(m, p)
    banks = np.array([s.bank for s in traj])
    i_first = np.argmax(np.abs(banks) > 1e-6)
    i_full = np.argmax(np.abs(banks) > 45.0 - 1e-6)
    assert i_full > i_first
    assert (traj[i_full].t_us - traj[i_first].t_us) / 1e6 == pytest.approx(1.8, abs=0.1)


def test_speed_invariant():
    m = Mission(waypoints=np.array([[0, 0, 100], [0, 500, 150], [500, 500, 100]]),
                init_leg_length=50.0)
    traj = generate_trajectory(m, FlightParams(airspeed=17.0))
    speeds = np.linalg.norm([s.velocity for s in traj], axis=1)
    np.testing.assert_allclose(speeds, 17.0, atol=1e-6)


def test_roll_rate_bound():
    traj = generate_trajectory(preset_oscillating(0.3), FlightParams(airspeed=10.0))
    banks = np.array([s.bank for s in traj])
    rates = np.abs(np.diff(banks)) * 31.0
    assert rates.max() <= 25.0 + 1e-6


def test_curvature_bound():
    p = FlightParams(airspeed=10.0, max_bank=45.0)
    traj = generate_trajectory(preset_oscillating(0.3), p)
    pts = np.array([s.pose.t[:2] for s in traj])
    v = np.diff(pts, axis=0)
    headings = np.unwrap(np.arctan2(v[:, 0], v[:, 1]))
    seg = np.linalg.norm(v, axis=1)
    curvature = np.abs(np.diff(headings)) / seg[1:]
    bound = 9.81 * math.tan(math.radians(45.0)) / 10.0 ** 2
    assert curvature.max() <= bound + 1e-9


def test_timestamps_uniform_no_drift():
    traj = generate_trajectory(straight_mission(500.0), FlightParams(airspeed=10.0))
    for i, s in enumerate(traj):
        assert abs(s.t_us - i * 1e6 / 31.0) < 1.0
    dt = np.diff([s.t_us for s in traj])
    assert dt.min() >= 1  # strictly increasing integer microseconds


def test_init_leg_straight_and_level():
    m = preset_oscillating(1.0)
    traj = generate_trajectory(m, FlightParams(airspeed=10.0))
    n_init = int(m.init_leg_length / 10.0 * 31.0)
    for s in traj[:n_init]:
        assert s.bank == 0.0
        assert s.pose.t[2] == pytest.approx(300.0, abs=1e-9)
        assert s.velocity[2] == 0.0


def test_infeasible_mission_names_waypoint():
    # 20 m legs cannot fit a 63.7 m turn radius at 25 m/s
    m = Mission(waypoints=np.array([[0, 0, 100], [0, 20, 100], [20, 20, 100]]),
                init_leg_length=0.0)
    with pytest.raises(MissionInfeasibleError) as ei:
        generate_trajectory(m, FlightParams(airspeed=25.0))
    assert ei.value.waypoint_index == 1


def test_mission_validation():
    with pytest.raises(InvalidArgumentError):
        Mission(waypoints=np.array([[0, 0, 100]]))
    with pytest.raises(InvalidArgumentError):
        Mission(waypoints=np.array([[0, 0, 100], [0, 0, 200]]))


def test_mission_file_roundtrip(tmp_path):
    m = preset_oscillating(0.5)
    p = tmp_path / "mission.json"
    save_mission(m, p)
    m2 = load_mission(p)
    np.testing.assert_array_equal(m.waypoints, m2.waypoints)
    assert m.init_leg_length == m2.init_leg_length


# ---------------------------------------------------------------------------
# camera mount
# ---------------------------------------------------------------------------


def test_level_flight_camera_points_nadir():
    traj = generate_trajectory(straight_mission(50.0), FlightParams(airspeed=10.0))
    cam = camera_pose_at(traj[0])
    axis_world = quat_rotate(cam.q, [0.0, 0.0, 1.0])
    np.testing.assert_allclose(axis_world, [0, 0, -1], atol=1e-9)


def test_banked_camera_tilts_by_bank_angle():
    # 30 deg bank tilts the optical axis 30 deg off nadir
    from skybench.flightsim import body_quat, NADIR_MOUNT
    from skybench.geometry import Pose, quat_mul

    q_wb = body_quat(0.0, 0.0, math.radians(30.0))
    cam_q = quat_mul(q_wb, NADIR_MOUNT)
    axis = quat_rotate(cam_q, [0, 0, 1.0])
    tilt = math.degrees(math.acos(np.dot(axis, [0, 0, -1.0])))
    assert tilt == pytest.approx(30.0, abs=1e-9)


def test_mount_compose_decompose_identity():
    from skybench.flightsim import NADIR_MOUNT
    from skybench.geometry import Pose, quat_conj

    s = generate_trajectory(straight_mission(50.0), FlightParams())[0]
    cam = camera_pose_at(s)
    back = cam.compose(Pose(q=quat_conj(NADIR_MOUNT)))
    assert rotation_angle_deg(back.q, s.pose.q) < 1e-9
    np.testing.assert_allclose(back.t, s.pose.t, atol=1e-12)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------


def test_oscillating_polyline_length():
    m = preset_oscillating(1.0)
    assert m.path_length() == pytest.approx(3300.0, rel=0.05)


def test_three_loops_polyline_length():
    m = preset_three_loops(1.0)
    assert m.path_length() == pytest.approx(9600.0, rel=0.05)


def test_oscillating_generated_path_length():
    traj = generate_trajectory(preset_oscillating(1.0), FlightParams(airspeed=10.0))
    length = oracle_path_length([s.pose.t for s in traj])
    assert length == pytest.approx(3300.0, rel=0.05)


def test_three_loops_generated_path_length():
    traj = generate_trajectory(preset_three_loops(1.0), FlightParams(airspeed=25.0))
    length = oracle_path_length([s.pose.t for s in traj])
    assert length == pytest.approx(9600.0, rel=0.05)


def test_preset_scaling_halves_polyline():
    full = preset_oscillating(1.0).path_length()
    half = preset_oscillating(0.5).path_length()
    assert half == pytest.approx(full / 2.0, rel=1e-6)


def test_preset_rejects_bad_scale():
    with pytest.raises(InvalidArgumentError):
        preset_oscillating(0.0)
    with pytest.raises(InvalidArgumentError):
        preset_three_loops(-1.0)


def test_three_loops_counter_clockwise():
    m = preset_three_loops(1.0)
    # signed area of the first loop's vertices should be positive (CCW in ENU)
    loop = m.waypoints[2:14, :2]
    area = 0.0
    for i in range(len(loop)):
        x0, y0 = loop[i]
        x1, y1 = loop[(i + 1) % len(loop)]
        area += x0 * y1 - x1 * y0
    assert area > 0
