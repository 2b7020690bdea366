"""Kinematic fixed-wing trajectory generation from waypoint missions.

Point-mass model at constant airspeed: straight legs, coordinated turns
(yaw rate g*tan(bank)/V in level flight), bank slewed at the maximum
roll rate, altitude ramped along legs. No wind, so airspeed equals
ground speed. Body frame is FRD (x forward, y right, z down); world is
ENU. Heading is measured from north, positive toward east.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, MissionInfeasibleError
from .geometry import Pose, quat_from_matrix, quat_normalize

GRAVITY = 9.81  # m/s^2

# ENU <-> NED axis swap; its own inverse.
_ENU_FROM_NED = np.array([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])

# Nadir camera mount: optical axis along body +z (down), image up = forward.
# Columns are camera axes (x right, y down, z forward) in the body frame.
NADIR_MOUNT_MATRIX = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
NADIR_MOUNT = quat_from_matrix(NADIR_MOUNT_MATRIX)


def body_quat(yaw_rad: float, pitch_rad: float, roll_rad: float) -> np.ndarray:
    """World<-body quaternion from aerospace z-y'-x'' angles (NED sense)."""
    cy, sy = math.cos(yaw_rad), math.sin(yaw_rad)
    cp, sp = math.cos(pitch_rad), math.sin(pitch_rad)
    cr, sr = math.cos(roll_rad), math.sin(roll_rad)
    r_ned = np.array(
        [
            [cy * cp, cy * sp * sr - sy * cr, cy * sp * cr + sy * sr],
            [sy * cp, sy * sp * sr + cy * cr, sy * sp * cr - cy * sr],
            [-sp, cp * sr, cp * cr],
        ]
    )
    return quat_from_matrix(_ENU_FROM_NED @ r_ned)


@dataclass
class Mission:
    """Ordered ENU waypoints (east, north, altitude) plus the length of the
    straight-and-level lead-in used for VO initialization."""

    waypoints: np.ndarray  # (N, 3)
    init_leg_length: float = 200.0

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float)
        if self.waypoints.ndim != 2 or self.waypoints.shape[1] != 3 or len(self.waypoints) < 2:
            raise InvalidArgumentError("mission needs at least 2 waypoints of (e, n, alt)")
        d = np.linalg.norm(np.diff(self.waypoints[:, :2], axis=0), axis=1)
        if np.any(d < 1e-9):
            raise InvalidArgumentError("consecutive waypoints coincide in the horizontal plane")
        if self.init_leg_length < 0:
            raise InvalidArgumentError("init_leg_length must be non-negative")

    def path_length(self) -> float:
        """Total 3-D polyline length over the waypoints."""
        return float(np.linalg.norm(np.diff(self.waypoints, axis=0), axis=1).sum())

    def to_dict(self) -> dict:
        return {
            "waypoints": [[float(v) for v in w] for w in self.waypoints],
            "init_leg_length": float(self.init_leg_length),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mission":
        return cls(waypoints=np.array(d["waypoints"], dtype=float),
                   init_leg_length=float(d.get("init_leg_length", 200.0)))


def load_mission(path) -> Mission:
    with open(path) as f:
        return Mission.from_dict(json.load(f))


def save_mission(m: Mission, path) -> None:
    with open(path, "w") as f:
        json.dump(m.to_dict(), f, indent=2)


@dataclass
class FlightParams:
    airspeed: float = 10.0  # m/s
    max_roll_rate: float = 25.0  # deg/s
    max_bank: float = 45.0  # deg
    sample_rate: float = 31.0  # Hz, matches the camera frame rate

    def __post_init__(self):
        if self.airspeed <= 0:
            raise InvalidArgumentError("airspeed must be positive")
        if not (0.0 < self.max_bank < 90.0):
            raise InvalidArgumentError("max_bank must be in (0, 90) degrees")
        if self.max_roll_rate <= 0:
            raise InvalidArgumentError("max_roll_rate must be positive")
        if self.sample_rate <= 0:
            raise InvalidArgumentError("sample_rate must be positive")

    def turn_radius(self) -> float:
        return turn_radius(self.airspeed, self.max_bank)


def coordinated_turn_rate_dps(airspeed: float, bank_deg: float) -> float:
    """Level coordinated-turn yaw rate, deg/s."""
    return math.degrees(GRAVITY * math.tan(math.radians(bank_deg)) / airspeed)


def turn_radius(airspeed: float, bank_deg: float) -> float:
    return airspeed ** 2 / (GRAVITY * math.tan(math.radians(bank_deg)))


@dataclass
class StateSample:
    t_us: int
    pose: Pose  # world<-body (FRD)
    velocity: np.ndarray  # (3,) m/s, ENU
    bank: float  # deg


def _wrap_pi(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def generate_trajectory(mission: Mission, params: FlightParams) -> list[StateSample]:
    """Fly the mission and return uniformly sampled truth states.

    Intermediate waypoints are captured within one maximum-bank turn
    radius and rounded with a fillet; the final waypoint is captured by
    crossing its perpendicular plane. The first `init_leg_length` meters
    of travel are forced straight and level.
    """
    wps = mission.waypoints
    v = params.airspeed
    r_max = params.turn_radius()
    max_bank_rad = math.radians(params.max_bank)
    roll_rate = math.radians(params.max_roll_rate)

    leg_h = np.linalg.norm(np.diff(wps[:, :2], axis=0), axis=1)
    for i in range(1, len(wps) - 1):
        if leg_h[i - 1] < r_max or leg_h[i] < r_max:
            raise MissionInfeasibleError(
                f"turn radius {r_max:.1f} m does not fit legs of "
                f"{leg_h[i - 1]:.1f}/{leg_h[i]:.1f} m", waypoint_index=i
            )

    dt = 1.0 / params.sample_rate
    # Bank command reaches full bank beyond 30 deg of heading error; the
    # 3-radius lookahead damps cross-track convergence after each fillet.
    k_heading = max_bank_rad / math.radians(30.0)
    lookahead = max(3.0 * r_max, 3.0 * v)
    climb_limit = math.radians(20.0)

    pos = wps[0].copy()
    d0 = wps[1, :2] - wps[0, :2]
    heading = math.atan2(d0[0], d0[1])  # from north, toward east
    bank = 0.0
    traveled = 0.0
    target = 1
    samples: list[StateSample] = []
    # generous stall guard: no mission should need 4x its polyline time
    max_steps = int(4.0 * (mission.path_length() + mission.init_leg_length) / (v * dt)) + 1000

    for i in range(max_steps):
        leg_a = wps[target - 1]
        leg_b = wps[target]
        leg_dir = (leg_b[:2] - leg_a[:2]) / np.linalg.norm(leg_b[:2] - leg_a[:2])
        to_wp = leg_b[:2] - pos[:2]
        dist_wp = float(np.linalg.norm(to_wp))
        along_remaining = float(to_wp @ leg_dir)

        in_init = traveled < mission.init_leg_length

        # pure pursuit toward a point ahead on the current leg
        along_here = float((pos[:2] - leg_a[:2]) @ leg_dir)
        carrot = leg_a[:2] + leg_dir * min(along_here + lookahead, float(np.linalg.norm(leg_b[:2] - leg_a[:2])))
        to_carrot = carrot - pos[:2]
        if np.linalg.norm(to_carrot) < 1e-6:
            desired_heading = math.atan2(leg_dir[0], leg_dir[1])
        else:
            desired_heading = math.atan2(to_carrot[0], to_carrot[1])

        if in_init:
            bank_cmd = 0.0
            gamma = 0.0
        else:
            err = _wrap_pi(desired_heading - heading)
            bank_cmd = max(-max_bank_rad, min(max_bank_rad, k_heading * err))
            alt_err = float(leg_b[2] - pos[2])
            horiz = max(dist_wp, 1e-6)
            gamma = max(-climb_limit, min(climb_limit, math.atan2(alt_err, horiz)))

        # slew bank at the roll-rate limit
        dbank = max(-roll_rate * dt, min(roll_rate * dt, bank_cmd - bank))
        bank += dbank

        # coordinated turn; cos(gamma) keeps horizontal curvature <= g tan/V^2
        heading_rate = GRAVITY * math.tan(bank) * math.cos(gamma) / v
        cg, sg = math.cos(gamma), math.sin(gamma)
        vel = np.array([v * cg * math.sin(heading), v * cg * math.cos(heading), v * sg])

        t_us = i * 1_000_000 * 1000 // int(round(params.sample_rate * 1000))
        samples.append(
            StateSample(
                t_us=int(t_us),
                pose=Pose(t_us=int(t_us), q=body_quat(heading, gamma, bank), t=pos.copy()),
                velocity=vel,
                bank=math.degrees(bank),
            )
        )

        pos = pos + vel * dt
        traveled += v * dt
        heading = _wrap_pi(heading + heading_rate * dt)

        final = target == len(wps) - 1
        capture = dist_wp <= r_max if not final else along_remaining <= 0.0
        if capture:
            if final:
                return samples
            target += 1
    raise MissionInfeasibleError(
        "guidance failed to capture waypoint within the time budget", waypoint_index=target
    )


def camera_pose_at(sample: StateSample, mount=None) -> Pose:
    """Camera pose = body pose composed with the fixed mount rotation."""
    q_mount = NADIR_MOUNT if mount is None else np.asarray(mount, dtype=float)
    return sample.pose.compose(Pose(t_us=sample.t_us, q=quat_normalize(q_mount)))


# ---------------------------------------------------------------------------
# Mission presets
# ---------------------------------------------------------------------------


def preset_oscillating(scale: float = 1.0, altitude: float = 300.0) -> Mission:
    """South lead-in then east-west passes marching back north.

    At scale 1 the waypoint polyline is 3.3 km.
    """
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")
    s = scale
    pts = [(0.0, 0.0), (0.0, -600.0)]
    x_far, y = 300.0, -600.0
    for k in range(6):
        x_to = x_far if k % 2 == 0 else 0.0
        pts.append((x_to, y))
        y += 150.0
        pts.append((x_to, y))
    wps = np.array([[x * s, y * s, altitude] for x, y in pts])
    return Mission(waypoints=wps, init_leg_length=200.0 * s)


def preset_three_loops(scale: float = 1.0, altitude: float = 250.0) -> Mission:
    """East lead-in, then three counter-clockwise 12-gon loops drifting east.

    At scale 1 the waypoint polyline is 9.6 km (within tolerance).
    """
    if scale <= 0:
        raise InvalidArgumentError("scale must be positive")
    s = scale
    radius = 465.0
    drift = 200.0
    init_len = 600.0
    pts = [(0.0, 0.0), (init_len, 0.0)]
    for loop in range(3):
        cx = init_len + loop * drift
        cy = radius
        for j in range(1, 13):
            theta = math.radians(-90.0 + 30.0 * j)
            pts.append((cx + radius * math.cos(theta), cy + radius * math.sin(theta)))
    wps = np.array([[x * s, y * s, altitude] for x, y in pts])
    return Mission(waypoints=wps, init_leg_length=200.0 * s)
