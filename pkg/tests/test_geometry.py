import math

import numpy as np
import pytest

from skybench.errors import BehindCameraError, InvalidArgumentError
from skybench.geometry import (
    CameraIntrinsics,
    GeodeticCoord,
    LocalFrame,
    Pose,
    enu_to_geodetic,
    geodetic_to_enu,
    intrinsics_from_fov,
    matrix_from_quat,
    pose_interpolate,
    quat_identity,
    project,
    quat_from_axis_angle,
    quat_from_matrix,
    quat_mul,
    quat_normalize,
    quat_slerp,
    rotation_angle_deg,
    unproject,
)

from oracles import oracle_distort, oracle_meridian_arc_per_degree, oracle_rotation_angle_deg


def random_quat(rng):
    return quat_normalize(rng.normal(size=4))


# ---------------------------------------------------------------------------
# intrinsics_from_fov
# ---------------------------------------------------------------------------


def test_intrinsics_from_fov_reference_camera():
    K = intrinsics_from_fov(1280, 960, 84.872)
    expected_f = (1280 / 2) / math.tan(math.radians(84.872) / 2)
    assert K.fx == pytest.approx(expected_f, rel=1e-12)
    assert K.fx == pytest.approx(700.0056, abs=1e-3)
    assert K.fy == K.fx
    assert (K.cx, K.cy) == (640, 480)
    assert not K.has_distortion()


def test_intrinsics_from_fov_trivial_square():
    K = intrinsics_from_fov(2, 2, 90.0)
    assert K.fx == pytest.approx(1.0)
    assert K.cx == pytest.approx(1.0)


def test_intrinsics_from_fov_half_width():
    assert intrinsics_from_fov(640, 480, 84.872).fx == pytest.approx(350.0028, abs=1e-3)


def test_intrinsics_from_fov_rejects_bad_fov():
    with pytest.raises(InvalidArgumentError):
        intrinsics_from_fov(640, 480, 0.0)
    with pytest.raises(InvalidArgumentError):
        intrinsics_from_fov(640, 480, 180.0)


# ---------------------------------------------------------------------------
# project / unproject
# ---------------------------------------------------------------------------


def test_project_optical_axis_hits_principal_point():
    K = CameraIntrinsics(fx=700, fy=710, cx=321, cy=239, width=640, height=480)
    np.testing.assert_allclose(project(K, [0, 0, 1.0]), [321, 239])
    np.testing.assert_allclose(project(K, [0, 0, 25.0]), [321, 239])


def test_project_behind_camera_rejected():
    K = CameraIntrinsics(fx=700, fy=700, cx=320, cy=240, width=640, height=480)
    with pytest.raises(BehindCameraError):
        project(K, [0, 0, -1.0])
    with pytest.raises(BehindCameraError):
        project(K, [0.1, 0.1, 0.0])


def test_project_matches_distortion_polynomial_oracle():
    K = CameraIntrinsics(fx=500, fy=500, cx=320, cy=240, k1=0.1, width=640, height=480)
    pix = project(K, [0.5, 0.0, 1.0])
    xd, yd = oracle_distort(0.1, 0.0, 0.0, 0.0, 0.5, 0.0)
    np.testing.assert_allclose(pix, [500 * xd + 320, 500 * yd + 240], rtol=1e-12)


def test_project_full_distortion_oracle():
    K = CameraIntrinsics(
        fx=450, fy=460, cx=315, cy=245, k1=-0.2, k2=0.05, p1=1e-3, p2=-2e-3,
        width=640, height=480,
    )
    rng = np.random.default_rng(7)
    for _ in range(50):
        xn, yn = rng.uniform(-0.4, 0.4, 2)
        pix = project(K, [xn, yn, 1.0])
        xd, yd = oracle_distort(K.k1, K.k2, K.p1, K.p2, xn, yn)
        np.testing.assert_allclose(pix, [K.fx * xd + K.cx, K.fy * yd + K.cy], rtol=1e-12)


def test_unproject_principal_point_is_axis():
    K = CameraIntrinsics(fx=700, fy=700, cx=320, cy=240, k1=-0.1, k2=0.02,
                         width=640, height=480)
    np.testing.assert_allclose(unproject(K, [320, 240]), [0, 0, 1], atol=1e-15)


def test_unproject_roundtrip_zero_distortion_exact():
    K = intrinsics_from_fov(640, 480, 84.872)
    rng = np.random.default_rng(3)
    pix = np.stack([rng.uniform(0, 639, 200), rng.uniform(0, 479, 200)], axis=-1)
    rays = unproject(K, pix)
    back = project(K, rays * rng.uniform(0.5, 100.0, (200, 1)))
    np.testing.assert_allclose(back, pix, atol=1e-12)


def test_unproject_roundtrip_with_distortion():
    K = CameraIntrinsics(fx=700, fy=700, cx=320, cy=240, k1=-0.2,
                         width=640, height=480)
    pix = np.array([420.0, 240.0])
    ray = unproject(K, pix)
    np.testing.assert_allclose(project(K, ray * 5.0), pix, atol=1e-6)


def test_unproject_roundtrip_grid_interior():
    # interior grid, distorted radius below 0.8x the normalized half-diagonal
    K = CameraIntrinsics(fx=500, fy=490, cx=320, cy=240, k1=-0.15, k2=0.03,
                         p1=5e-4, p2=-5e-4, width=640, height=480)
    us = np.linspace(64, 576, 9)
    vs = np.linspace(48, 432, 9)
    for u in us:
        for v in vs:
            ray = unproject(K, [u, v])
            np.testing.assert_allclose(project(K, ray * 3.0), [u, v], atol=1e-6)


def test_unproject_rejects_far_outside_pixels():
    K = intrinsics_from_fov(640, 480, 90)
    with pytest.raises(InvalidArgumentError):
        unproject(K, [900.0, 200.0])


# ---------------------------------------------------------------------------
# rotation metric
# ---------------------------------------------------------------------------


def test_rotation_angle_identity_and_pi():
    q = quat_from_axis_angle([0, 0, 1], math.radians(30))
    assert rotation_angle_deg(q, q) == pytest.approx(0.0, abs=1e-12)
    qa = quat_from_axis_angle([0, 0, 1], 0.0)
    qb = quat_from_axis_angle([0, 0, 1], math.pi)
    assert rotation_angle_deg(qa, qb) == pytest.approx(180.0, abs=1e-9)


def test_rotation_angle_matches_log_map_oracle():
    rng = np.random.default_rng(11)
    for _ in range(100):
        qa, qb = random_quat(rng), random_quat(rng)
        got = rotation_angle_deg(qa, qb)
        want = oracle_rotation_angle_deg(matrix_from_quat(qa), matrix_from_quat(qb))
        assert got == pytest.approx(want, abs=1e-6)


def test_rotation_angle_symmetry_and_triangle_inequality():
    rng = np.random.default_rng(12)
    for _ in range(200):
        qa, qb, qc = (random_quat(rng) for _ in range(3))
        ab = rotation_angle_deg(qa, qb)
        ba = rotation_angle_deg(qb, qa)
        assert ab == pytest.approx(ba, abs=1e-9)
        ac = rotation_angle_deg(qa, qc)
        cb = rotation_angle_deg(qc, qb)
        assert ab <= ac + cb + 1e-9


# ---------------------------------------------------------------------------
# poses
# ---------------------------------------------------------------------------


def test_pose_compose_inverse_identity():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = Pose(q=random_quat(rng), t=rng.normal(size=3))
        ident = p.compose(p.inverse())
        assert rotation_angle_deg(ident.q, [1, 0, 0, 0]) < 1e-9
        np.testing.assert_allclose(ident.t, 0, atol=1e-9)


def test_pose_composition_associative():
    rng = np.random.default_rng(6)
    for _ in range(50):
        a, b, c = (Pose(q=random_quat(rng), t=rng.normal(size=3)) for _ in range(3))
        left = a.compose(b).compose(c)
        right = a.compose(b.compose(c))
        assert rotation_angle_deg(left.q, right.q) < 1e-9
        np.testing.assert_allclose(left.t, right.t, atol=1e-9)


def test_pose_quaternion_norm_maintained():
    rng = np.random.default_rng(8)
    p = Pose(q=quat_normalize(rng.normal(size=4)), t=np.zeros(3))
    for _ in range(1000):
        p = p.compose(Pose(q=quat_from_axis_angle(rng.normal(size=3), 0.01), t=np.zeros(3)))
    assert abs(np.linalg.norm(p.q) - 1.0) < 1e-9


def test_pose_interpolation_midpoint():
    a = Pose(t_us=0, q=quat_identity(), t=np.zeros(3))
    b = Pose(t_us=2_000_000, q=quat_from_axis_angle([0, 0, 1], math.radians(90)),
             t=np.array([2.0, 0.0, 0.0]))
    mid = pose_interpolate(a, b, 1_000_000)
    np.testing.assert_allclose(mid.t, [1.0, 0.0, 0.0], atol=1e-12)
    assert rotation_angle_deg(mid.q, quat_from_axis_angle([0, 0, 1], math.radians(45))) < 1e-9


def test_slerp_endpoints_and_shortest_path():
    q0 = quat_from_axis_angle([1, 0, 0], 0.3)
    q1 = quat_from_axis_angle([1, 0, 0], 0.9)
    assert rotation_angle_deg(quat_slerp(q0, q1, 0.0), q0) < 1e-9
    assert rotation_angle_deg(quat_slerp(q0, q1, 1.0), q1) < 1e-9
    # antipodal representation must not take the long way round
    assert rotation_angle_deg(quat_slerp(q0, -q1, 1.0), q1) < 1e-9


def test_quat_matrix_roundtrip():
    rng = np.random.default_rng(9)
    for _ in range(100):
        q = random_quat(rng)
        q2 = quat_from_matrix(matrix_from_quat(q))
        assert min(np.linalg.norm(q - q2), np.linalg.norm(q + q2)) < 1e-12


# ---------------------------------------------------------------------------
# geodesy
# ---------------------------------------------------------------------------


def test_geodetic_origin_maps_to_zero():
    f = LocalFrame(GeodeticCoord(39.78, -86.1, 250.0))
    np.testing.assert_allclose(geodetic_to_enu(f.origin, f), 0, atol=1e-12)


def test_geodetic_meridian_arc_at_equator():
    f = LocalFrame(GeodeticCoord(0.0, 0.0, 0.0))
    enu = geodetic_to_enu(GeodeticCoord(1e-5, 0.0, 0.0), f)
    per_degree = oracle_meridian_arc_per_degree(0.0)
    assert per_degree == pytest.approx(110574.27, abs=0.5)
    assert enu[1] == pytest.approx(per_degree * 1e-5, rel=1e-12)
    assert enu[1] == pytest.approx(1.106, abs=1e-3)


def test_geodetic_altitude_passthrough():
    f = LocalFrame(GeodeticCoord(39.78, -86.1, 250.0))
    enu = geodetic_to_enu(GeodeticCoord(39.78, -86.1, 260.0), f)
    np.testing.assert_allclose(enu, [0, 0, 10.0], atol=1e-9)


def test_geodetic_roundtrip_within_10km():
    f = LocalFrame(GeodeticCoord(39.78, -86.1, 250.0))
    rng = np.random.default_rng(10)
    for _ in range(100):
        enu = rng.uniform(-1e4, 1e4, 3)
        c = enu_to_geodetic(enu, f)
        back = geodetic_to_enu(c, f)
        np.testing.assert_allclose(back, enu, atol=1e-6)
        c2 = enu_to_geodetic(back, f)
        assert c2.lat_deg == pytest.approx(c.lat_deg, abs=1e-9)
        assert c2.lon_deg == pytest.approx(c.lon_deg, abs=1e-9)


def test_geodetic_validation():
    with pytest.raises(InvalidArgumentError):
        GeodeticCoord(91.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        GeodeticCoord(0.0, 200.0)
