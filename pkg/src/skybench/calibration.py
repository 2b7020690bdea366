"""Checkerboard intrinsics calibration.

Closed-form initialization from homography constraints on the absolute
conic, then joint damped Gauss-Newton over intrinsics, distortion, and
per-view poses minimizing squared reprojection error. Corner detection
is out of scope: correspondences arrive analytically or from a CSV.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfigurationError,
    InsufficientViewsError,
    InvalidArgumentError,
)
from .geometry import CameraIntrinsics, distort_normalized, project
from .optim import lm_solve


class IllConditionedCalibrationWarning(UserWarning):
    pass


@dataclass
class CheckerboardSpec:
    inner_cols: int
    inner_rows: int
    square_size: float  # meters

    def __post_init__(self):
        if self.inner_cols < 3 or self.inner_rows < 3:
            raise InvalidArgumentError("checkerboard needs at least 3x3 inner corners")
        if self.square_size <= 0:
            raise InvalidArgumentError("square size must be positive")

    def corners(self) -> np.ndarray:
        """Inner-corner board coordinates, row-major, shape (N, 2) meters."""
        xs, ys = np.meshgrid(np.arange(self.inner_cols), np.arange(self.inner_rows))
        return np.stack([xs.ravel(), ys.ravel()], axis=-1).astype(float) * self.square_size


@dataclass
class CalibrationView:
    board: np.ndarray  # (N, 2) board-plane meters
    pixels: np.ndarray  # (N, 2)
    view_id: int = 0

    def __post_init__(self):
        self.board = np.asarray(self.board, dtype=float)
        self.pixels = np.asarray(self.pixels, dtype=float)
        if len(self.board) != len(self.pixels) or len(self.board) < 4:
            raise InvalidArgumentError("view needs >= 4 board/pixel correspondences")
        centered = self.board - self.board.mean(axis=0)
        if np.linalg.matrix_rank(centered, tol=1e-9) < 2:
            raise InvalidArgumentError("board correspondences are collinear")


def synthesize_views(K_true: CameraIntrinsics, spec: CheckerboardSpec, poses,
                     noise_sigma: float = 0.0, seed: int = 0) -> list[CalibrationView]:
    """Forward-project board corners through known poses (camera<-board).

    poses: list of (R, t) with p_cam = R @ (bx, by, 0) + t.
    """
    corners = spec.corners()
    board3 = np.column_stack([corners, np.zeros(len(corners))])
    rng = np.random.default_rng(seed)
    views = []
    for i, (R, t) in enumerate(poses):
        p_cam = board3 @ np.asarray(R, dtype=float).T + np.asarray(t, dtype=float)
        if np.any(p_cam[:, 2] <= 0):
            raise InvalidArgumentError(f"board behind camera in pose {i}")
        pix = project(K_true, p_cam)
        if noise_sigma > 0:
            pix = pix + rng.normal(0.0, noise_sigma, pix.shape)
        views.append(CalibrationView(board=corners, pixels=pix, view_id=i))
    return views


# ---------------------------------------------------------------------------
# Homography estimation (normalized DLT)
# ---------------------------------------------------------------------------


def _normalization(pts: np.ndarray) -> np.ndarray:
    """Similarity that moves points to zero mean, sqrt(2) mean radius."""
    mean = pts.mean(axis=0)
    dist = np.linalg.norm(pts - mean, axis=1).mean()
    s = math.sqrt(2.0) / max(dist, 1e-12)
    return np.array([[s, 0, -s * mean[0]], [0, s, -s * mean[1]], [0, 0, 1.0]])


def estimate_homography(view_or_src, pixels=None):
    """Normalized DLT homography (board/source -> pixel/destination).

    Returns (H, algebraic_residual); H scaled so H[2,2] = 1.
    """
    if pixels is None:
        src, dst = view_or_src.board, view_or_src.pixels
    else:
        src, dst = np.asarray(view_or_src, dtype=float), np.asarray(pixels, dtype=float)
    if len(src) < 4:
        raise DegenerateConfigurationError("homography needs >= 4 correspondences")
    Ts = _normalization(src)
    Td = _normalization(dst)
    sh = np.column_stack([src, np.ones(len(src))]) @ Ts.T
    dh = np.column_stack([dst, np.ones(len(dst))]) @ Td.T
    A = np.zeros((2 * len(src), 9))
    A[0::2, 0:3] = sh
    A[0::2, 6:9] = -dh[:, [0]] * sh
    A[1::2, 3:6] = sh
    A[1::2, 6:9] = -dh[:, [1]] * sh
    _, svals, vt = np.linalg.svd(A)
    if svals[-2] < 1e-9 * max(svals[0], 1e-300):
        raise DegenerateConfigurationError("degenerate correspondence configuration")
    h = vt[-1]
    residual = float(np.linalg.norm(A @ h))
    H = np.linalg.inv(Td) @ h.reshape(3, 3) @ Ts
    if abs(H[2, 2]) < 1e-12:
        raise DegenerateConfigurationError("homography has vanishing scale")
    return H / H[2, 2], residual


# ---------------------------------------------------------------------------
# Closed-form intrinsics (absolute-conic constraints)
# ---------------------------------------------------------------------------


def _conic_row(H, i, j):
    h = H[:, [i, j]]
    return np.array(
        [
            h[0, 0] * h[0, 1],
            h[0, 0] * h[1, 1] + h[1, 0] * h[0, 1],
            h[1, 0] * h[1, 1],
            h[2, 0] * h[0, 1] + h[0, 0] * h[2, 1],
            h[2, 0] * h[1, 1] + h[1, 0] * h[2, 1],
            h[2, 0] * h[2, 1],
        ]
    )


def _closed_form_intrinsics(homographies, image_size) -> CameraIntrinsics:
    V = []
    for H in homographies:
        V.append(_conic_row(H, 0, 1))
        V.append(_conic_row(H, 0, 0) - _conic_row(H, 1, 1))
    V = np.array(V)
    _, svals, vt = np.linalg.svd(V)
    cond = svals[0] / max(svals[-1], 1e-300)
    if cond > 1e8:
        warnings.warn(
            f"near-parallel board orientations: constraint condition {cond:.2e}",
            IllConditionedCalibrationWarning,
        )
    b11, b12, b22, b13, b23, b33 = vt[-1]
    if b11 < 0:
        b11, b12, b22, b13, b23, b33 = (-v for v in (b11, b12, b22, b13, b23, b33))
    denom = b11 * b22 - b12 * b12
    cy = (b12 * b13 - b11 * b23) / denom
    lam = b33 - (b13 * b13 + cy * (b12 * b13 - b11 * b23)) / b11
    fx2 = lam / b11
    fy2 = lam * b11 / denom
    if fx2 <= 0 or fy2 <= 0:
        raise DegenerateConfigurationError("conic constraints yielded non-positive focals")
    fx = math.sqrt(fx2)
    fy = math.sqrt(fy2)
    skew = -b12 * fx2 * fy / lam
    cx = skew * cy / fy - b13 * fx2 / lam
    w, h = image_size
    return CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=w, height=h)


def _pose_from_homography(H, K: CameraIntrinsics):
    Km = np.array([[K.fx, 0, K.cx], [0, K.fy, K.cy], [0, 0, 1.0]])
    Kinv = np.linalg.inv(Km)
    h1, h2, h3 = H[:, 0], H[:, 1], H[:, 2]
    lam = 1.0 / max(np.linalg.norm(Kinv @ h1), 1e-300)
    r1 = lam * (Kinv @ h1)
    r2 = lam * (Kinv @ h2)
    t = lam * (Kinv @ h3)
    if t[2] < 0:  # board must sit in front of the camera
        r1, r2, t = -r1, -r2, -t
    r3 = np.cross(r1, r2)
    Q = np.column_stack([r1, r2, r3])
    u, _, vt = np.linalg.svd(Q)
    R = u @ vt
    if np.linalg.det(R) < 0:
        R = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return R, t


# ---------------------------------------------------------------------------
# Joint refinement
# ---------------------------------------------------------------------------


@dataclass
class _CalibState:
    k: np.ndarray  # fx, fy, cx, cy, k1, k2, p1, p2
    rotations: list[np.ndarray]
    translations: list[np.ndarray]


def _skew(v):
    return np.array([[0, -v[2], v[1]], [v[2], 0, -v[0]], [-v[1], v[0], 0.0]])


def _rodrigues(w):
    theta = np.linalg.norm(w)
    if theta < 1e-12:
        return np.eye(3) + _skew(w)
    k = w / theta
    Ks = _skew(k)
    return np.eye(3) + math.sin(theta) * Ks + (1 - math.cos(theta)) * (Ks @ Ks)


def calib_residuals(state: _CalibState, views) -> np.ndarray:
    fx, fy, cx, cy, k1, k2, p1, p2 = state.k
    K = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, k1=k1, k2=k2, p1=p1, p2=p2)
    out = []
    for R, t, view in zip(state.rotations, state.translations, views):
        board3 = np.column_stack([view.board, np.zeros(len(view.board))])
        p = board3 @ R.T + t
        xn = p[:, 0] / p[:, 2]
        yn = p[:, 1] / p[:, 2]
        xd, yd = distort_normalized(K, xn, yn)
        u = fx * xd + cx
        v = fy * yd + cy
        out.append(np.column_stack([u, v]) - view.pixels)
    return np.concatenate(out).ravel()


def calib_jacobian(state: _CalibState, views) -> np.ndarray:
    """Analytic Jacobian w.r.t. [dK(8) | per-view (dtheta(3), dt(3))]."""
    fx, fy, cx, cy, k1, k2, p1, p2 = state.k
    n_obs = sum(len(v.board) for v in views)
    n_par = 8 + 6 * len(views)
    J = np.zeros((2 * n_obs, n_par))
    row = 0
    for vi, (R, t, view) in enumerate(zip(state.rotations, state.translations, views)):
        board3 = np.column_stack([view.board, np.zeros(len(view.board))])
        m = board3 @ R.T  # rotated board points, before translation
        p = m + t
        X, Y, Z = p[:, 0], p[:, 1], p[:, 2]
        x = X / Z
        y = Y / Z
        r2 = x * x + y * y
        radial = 1 + k1 * r2 + k2 * r2 * r2
        xd = x * radial + 2 * p1 * x * y + p2 * (r2 + 2 * x * x)
        yd = y * radial + p1 * (r2 + 2 * y * y) + 2 * p2 * x * y

        n = len(x)
        rows_u = row + 2 * np.arange(n)
        rows_v = rows_u + 1

        # intrinsics
        J[rows_u, 0] = xd
        J[rows_v, 1] = yd
        J[rows_u, 2] = 1.0
        J[rows_v, 3] = 1.0
        J[rows_u, 4] = fx * x * r2
        J[rows_v, 4] = fy * y * r2
        J[rows_u, 5] = fx * x * r2 * r2
        J[rows_v, 5] = fy * y * r2 * r2
        J[rows_u, 6] = fx * 2 * x * y
        J[rows_v, 6] = fy * (r2 + 2 * y * y)
        J[rows_u, 7] = fx * (r2 + 2 * x * x)
        J[rows_v, 7] = fy * 2 * x * y

        # distortion chain d(xd, yd)/d(x, y)
        dr = k1 + 2 * k2 * r2
        dxdx = radial + 2 * x * x * dr + 2 * p1 * y + 6 * p2 * x
        dxdy = 2 * x * y * dr + 2 * p1 * x + 2 * p2 * y
        dydx = dxdy  # the distortion Jacobian is symmetric
        dydy = radial + 2 * y * y * dr + 6 * p1 * y + 2 * p2 * x

        # normalized coords w.r.t. camera point
        iz = 1.0 / Z
        dx_dp = np.stack([iz, np.zeros(n), -X * iz * iz], axis=1)
        dy_dp = np.stack([np.zeros(n), iz, -Y * iz * iz], axis=1)
        du_dp = fx * (dxdx[:, None] * dx_dp + dxdy[:, None] * dy_dp)
        dv_dp = fy * (dydx[:, None] * dx_dp + dydy[:, None] * dy_dp)

        col = 8 + 6 * vi
        for i in range(n):
            dp_dtheta = -_skew(m[i])  # left-multiplicative rotation increment
            J[row + 2 * i, col:col + 3] = du_dp[i] @ dp_dtheta
            J[row + 2 * i + 1, col:col + 3] = dv_dp[i] @ dp_dtheta
            J[row + 2 * i, col + 3:col + 6] = du_dp[i]
            J[row + 2 * i + 1, col + 3:col + 6] = dv_dp[i]
        row += 2 * n
    return J


def _calib_retract(state: _CalibState, dx, n_views: int) -> _CalibState:
    k = state.k + dx[:8]
    rotations = []
    translations = []
    for i in range(n_views):
        d = dx[8 + 6 * i: 8 + 6 * i + 6]
        rotations.append(_rodrigues(d[:3]) @ state.rotations[i])
        translations.append(state.translations[i] + d[3:])
    return _CalibState(k=k, rotations=rotations, translations=translations)


def calibrate(views: list[CalibrationView], image_size=None):
    """Estimate intrinsics, distortion, and per-view poses.

    Returns (CameraIntrinsics, [(R, t)] per view, rms reprojection px).
    """
    if len(views) < 3:
        raise InsufficientViewsError(f"need >= 3 views, got {len(views)}")
    if image_size is None:
        w = int(np.ceil(max(v.pixels[:, 0].max() for v in views))) + 1
        h = int(np.ceil(max(v.pixels[:, 1].max() for v in views))) + 1
        image_size = (w, h)

    homographies = [estimate_homography(v)[0] for v in views]
    K0 = _closed_form_intrinsics(homographies, image_size)
    poses = [_pose_from_homography(H, K0) for H in homographies]

    state = _CalibState(
        k=np.array([K0.fx, K0.fy, K0.cx, K0.cy, 0.0, 0.0, 0.0, 0.0]),
        rotations=[R for R, _ in poses],
        translations=[t for _, t in poses],
    )
    result = lm_solve(
        state,
        residual_fn=lambda s: calib_residuals(s, views),
        jacobian_fn=lambda s: calib_jacobian(s, views),
        retract=lambda s, dx: _calib_retract(s, dx, len(views)),
        max_iters=60,
    )
    s = result.state
    fx, fy, cx, cy, k1, k2, p1, p2 = s.k
    K = CameraIntrinsics(fx=fx, fy=fy, cx=cx, cy=cy, k1=k1, k2=k2, p1=p1, p2=p2,
                         width=image_size[0], height=image_size[1])
    res = calib_residuals(s, views).reshape(-1, 2)
    rms = float(np.sqrt(np.mean((res ** 2).sum(axis=1))))
    return K, list(zip(s.rotations, s.translations)), rms


# ---------------------------------------------------------------------------
# Correspondence CSV: view_id, board_x_m, board_y_m, px, py
# ---------------------------------------------------------------------------


def load_correspondences(path) -> list[CalibrationView]:
    by_view: dict[int, list[tuple[float, float, float, float]]] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        for lineno, rowvals in enumerate(reader):
            if not rowvals or rowvals[0].strip().startswith("#"):
                continue
            if lineno == 0 and not _is_number(rowvals[0]):
                continue  # header
            if len(rowvals) != 5:
                raise InvalidArgumentError(
                    f"correspondence row {lineno + 1} needs 5 fields, got {len(rowvals)}"
                )
            vid = int(rowvals[0])
            bx, by, px, py = (float(v) for v in rowvals[1:])
            by_view.setdefault(vid, []).append((bx, by, px, py))
    views = []
    for vid in sorted(by_view):
        arr = np.array(by_view[vid])
        views.append(CalibrationView(board=arr[:, :2], pixels=arr[:, 2:], view_id=vid))
    return views


def save_correspondences(views: list[CalibrationView], path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["view_id", "board_x_m", "board_y_m", "px", "py"])
        for v in views:
            for (bx, by), (px, py) in zip(v.board, v.pixels):
                writer.writerow([v.view_id, repr(bx), repr(by), repr(px), repr(py)])


def _is_number(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
