"""Rigid-body math, pinhole camera model, and local-frame geodesy.

Conventions used throughout the package:
  - World frame is a local east-north-up (ENU) tangent plane, z up.
  - Quaternions are [w, x, y, z], unit norm, and rotate body vectors into
    the world frame: v_world = R(q) @ v_body.
  - A Pose is the world<-body transform: p_world = R(q) @ p_body + t.
  - Camera frame follows the usual computer-vision layout: x right,
    y down, z forward along the optical axis. Pixel (u, v) = (col, row),
    sampled at integer coordinates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BehindCameraError,
    InvalidArgumentError,
    NumericFailureError,
)

# ---------------------------------------------------------------------------
# Quaternions
# ---------------------------------------------------------------------------


def quat_identity() -> np.ndarray:
    return np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise InvalidArgumentError("cannot normalize a zero quaternion")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product; composes rotations as R(a) @ R(b)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q, v) -> np.ndarray:
    """Rotate one or many 3-vectors (broadcast over leading axes)."""
    return np.asarray(v, dtype=float) @ matrix_from_quat(q).T


def matrix_from_quat(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_matrix(m) -> np.ndarray:
    """Shepperd's method; returns the w >= 0 representative."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] >= m[1, 1] and m[0, 0] >= m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] >= m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0:
        q = -q
    return quat_normalize(q)


def quat_from_axis_angle(axis, angle_rad: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return quat_identity()
    half = 0.5 * angle_rad
    return np.concatenate([[math.cos(half)], math.sin(half) * axis / n])


def quat_from_rotvec(rv) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        return quat_normalize(np.array([1.0, 0.5 * rv[0], 0.5 * rv[1], 0.5 * rv[2]]))
    return quat_from_axis_angle(rv, angle)


def rotvec_from_quat(q) -> np.ndarray:
    w, x, y, z = q
    vn = math.sqrt(x * x + y * y + z * z)
    if vn < 1e-12:
        return np.zeros(3)
    angle = 2.0 * math.atan2(vn, abs(w))
    sign = 1.0 if w >= 0 else -1.0
    return sign * angle * np.array([x, y, z]) / vn


def quat_slerp(q0, q1, u: float) -> np.ndarray:
    """Shortest-path spherical interpolation, u in [0, 1]."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    d = float(np.dot(q0, q1))
    if d < 0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-12:
        return quat_normalize(q0 + u * (q1 - q0))
    theta = math.acos(min(1.0, d))
    s = math.sin(theta)
    return quat_normalize(
        (math.sin((1 - u) * theta) / s) * q0 + (math.sin(u * theta) / s) * q1
    )


def rotation_angle_deg(qa, qb) -> float:
    """Geodesic angle between two rotations, in degrees, range [0, 180]."""
    qd = quat_mul(quat_conj(np.asarray(qa, dtype=float)), np.asarray(qb, dtype=float))
    vn = float(np.linalg.norm(qd[1:]))
    return math.degrees(2.0 * math.atan2(vn, abs(float(qd[0]))))


def yaw_pitch_roll_deg(q) -> tuple[float, float, float]:
    """Intrinsic z-y'-x'' Euler angles of R(q), degrees. Report use only."""
    m = matrix_from_quat(q)
    pitch = math.asin(max(-1.0, min(1.0, -m[2, 0])))
    if abs(m[2, 0]) < 1.0 - 1e-9:
        yaw = math.atan2(m[1, 0], m[0, 0])
        roll = math.atan2(m[2, 1], m[2, 2])
    else:
        yaw = math.atan2(-m[0, 1], m[1, 1])
        roll = 0.0
    return math.degrees(yaw), math.degrees(pitch), math.degrees(roll)


# ---------------------------------------------------------------------------
# Poses
# ---------------------------------------------------------------------------


@dataclass
class Pose:
    """Timestamped world<-body rigid transform."""

    t_us: int = 0
    q: np.ndarray = field(default_factory=quat_identity)
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.t = np.asarray(self.t, dtype=float)

    def compose(self, other: "Pose") -> "Pose":
        """self (world<-A) composed with other (A<-B) -> world<-B."""
        return Pose(
            t_us=self.t_us,
            q=quat_normalize(quat_mul(self.q, other.q)),
            t=self.t + quat_rotate(self.q, other.t),
        )

    def inverse(self) -> "Pose":
        qi = quat_conj(self.q)
        return Pose(t_us=self.t_us, q=qi, t=-quat_rotate(qi, self.t))

    def transform(self, p) -> np.ndarray:
        """Map body-frame point(s) into the world frame."""
        return quat_rotate(self.q, p) + self.t

    def rotation_matrix(self) -> np.ndarray:
        return matrix_from_quat(self.q)


def pose_interpolate(a: Pose, b: Pose, t_us: int) -> Pose:
    """Linear translation / slerp rotation interpolation at t_us."""
    if b.t_us == a.t_us:
        u = 0.0
    else:
        u = (t_us - a.t_us) / (b.t_us - a.t_us)
    return Pose(
        t_us=t_us,
        q=quat_slerp(a.q, b.q, u),
        t=(1 - u) * a.t + u * b.t,
    )


# ---------------------------------------------------------------------------
# Pinhole camera with radial-tangential distortion
# ---------------------------------------------------------------------------


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    k1: float = 0.0
    k2: float = 0.0
    p1: float = 0.0
    p2: float = 0.0
    width: int = 0
    height: int = 0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        if self.width and not (0 < self.cx < self.width):
            raise InvalidArgumentError("principal point cx outside image")
        if self.height and not (0 < self.cy < self.height):
            raise InvalidArgumentError("principal point cy outside image")

    def has_distortion(self) -> bool:
        return any(abs(v) > 0 for v in (self.k1, self.k2, self.p1, self.p2))

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "k1": self.k1, "k2": self.k2, "p1": self.p1, "p2": self.p2,
            "width": self.width, "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraIntrinsics":
        return cls(**{k: d[k] for k in
                      ("fx", "fy", "cx", "cy", "k1", "k2", "p1", "p2", "width", "height")})


def intrinsics_from_fov(width: int, height: int, hfov_deg: float) -> CameraIntrinsics:
    """Distortion-free intrinsics from a horizontal field of view."""
    if not (0.0 < hfov_deg < 180.0):
        raise InvalidArgumentError(f"horizontal FOV must be in (0, 180), got {hfov_deg}")
    if width <= 0 or height <= 0:
        raise InvalidArgumentError("image dimensions must be positive")
    f = (width / 2.0) / math.tan(math.radians(hfov_deg) / 2.0)
    return CameraIntrinsics(
        fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height
    )


def distort_normalized(K: CameraIntrinsics, xn, yn):
    """Apply the radial-tangential polynomial to normalized coordinates."""
    r2 = xn * xn + yn * yn
    radial = 1.0 + r2 * (K.k1 + K.k2 * r2)
    xd = xn * radial + 2.0 * K.p1 * xn * yn + K.p2 * (r2 + 2.0 * xn * xn)
    yd = yn * radial + K.p1 * (r2 + 2.0 * yn * yn) + 2.0 * K.p2 * xn * yn
    return xd, yd


def project(K: CameraIntrinsics, p_cam) -> np.ndarray:
    """Project camera-frame point(s) to pixel coordinates.

    Accepts shape (3,) or (N, 3); every point must have z > 0.
    """
    p = np.asarray(p_cam, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    z = p[:, 2]
    if np.any(z <= 0):
        raise BehindCameraError("point(s) with non-positive depth")
    xn = p[:, 0] / z
    yn = p[:, 1] / z
    xd, yd = distort_normalized(K, xn, yn)
    pix = np.stack([K.fx * xd + K.cx, K.fy * yd + K.cy], axis=-1)
    return pix[0] if single else pix


def undistort_normalized(K: CameraIntrinsics, xd, yd, max_iter: int = 20, tol: float = 1e-10):
    """Invert the distortion polynomial by fixed-point iteration."""
    xd = np.asarray(xd, dtype=float)
    yd = np.asarray(yd, dtype=float)
    x, y = xd.copy(), yd.copy()
    if not K.has_distortion():
        return x, y
    converged = False
    for _ in range(max_iter):
        r2 = x * x + y * y
        radial = 1.0 + r2 * (K.k1 + K.k2 * r2)
        dx = 2.0 * K.p1 * x * y + K.p2 * (r2 + 2.0 * x * x)
        dy = K.p1 * (r2 + 2.0 * y * y) + 2.0 * K.p2 * x * y
        x_new = (xd - dx) / radial
        y_new = (yd - dy) / radial
        step = np.max(np.abs(x_new - x)) + np.max(np.abs(y_new - y))
        x, y = x_new, y_new
        if step < tol:
            converged = True
            break
    if not converged:
        raise NumericFailureError("undistortion fixed-point iteration did not converge")
    return x, y


def unproject(K: CameraIntrinsics, pix) -> np.ndarray:
    """Pixel(s) to unit ray(s) in the camera frame.

    Pixels must lie inside the image bounds (tolerance 1 px) when the
    intrinsics carry image dimensions.
    """
    p = np.asarray(pix, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p)
    if K.width and K.height:
        if np.any(p[:, 0] < -1) or np.any(p[:, 0] > K.width + 1) \
                or np.any(p[:, 1] < -1) or np.any(p[:, 1] > K.height + 1):
            raise InvalidArgumentError("pixel outside image bounds")
    xd = (p[:, 0] - K.cx) / K.fx
    yd = (p[:, 1] - K.cy) / K.fy
    x, y = undistort_normalized(K, xd, yd)
    rays = np.stack([x, y, np.ones_like(x)], axis=-1)
    rays /= np.linalg.norm(rays, axis=-1, keepdims=True)
    return rays[0] if single else rays


# ---------------------------------------------------------------------------
# WGS-84 geodesy on a local tangent plane
# ---------------------------------------------------------------------------

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)


@dataclass(frozen=True)
class GeodeticCoord:
    lat_deg: float
    lon_deg: float
    alt_m: float = 0.0

    def __post_init__(self):
        if abs(self.lat_deg) > 90.0:
            raise InvalidArgumentError(f"latitude {self.lat_deg} out of range")
        if abs(self.lon_deg) > 180.0:
            raise InvalidArgumentError(f"longitude {self.lon_deg} out of range")


@dataclass(frozen=True)
class LocalFrame:
    """ENU tangent plane anchored at a geodetic origin for one scenario."""

    origin: GeodeticCoord

    def _radii(self) -> tuple[float, float]:
        """(meridian, prime-vertical) radii of curvature at the origin."""
        s = math.sin(math.radians(self.origin.lat_deg))
        w2 = 1.0 - WGS84_E2 * s * s
        r_n = WGS84_A / math.sqrt(w2)
        r_m = WGS84_A * (1.0 - WGS84_E2) / w2 ** 1.5
        return r_m, r_n


def geodetic_to_enu(c: GeodeticCoord, frame: LocalFrame) -> np.ndarray:
    r_m, r_n = frame._radii()
    lat0 = math.radians(frame.origin.lat_deg)
    h0 = frame.origin.alt_m
    east = math.radians(c.lon_deg - frame.origin.lon_deg) * (r_n + h0) * math.cos(lat0)
    north = math.radians(c.lat_deg - frame.origin.lat_deg) * (r_m + h0)
    up = c.alt_m - h0
    return np.array([east, north, up])


def enu_to_geodetic(enu, frame: LocalFrame) -> GeodeticCoord:
    r_m, r_n = frame._radii()
    lat0 = math.radians(frame.origin.lat_deg)
    h0 = frame.origin.alt_m
    e, n, u = np.asarray(enu, dtype=float)
    return GeodeticCoord(
        lat_deg=frame.origin.lat_deg + math.degrees(n / (r_m + h0)),
        lon_deg=frame.origin.lon_deg + math.degrees(e / ((r_n + h0) * math.cos(lat0))),
        alt_m=h0 + u,
    )
