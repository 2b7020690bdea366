"""Pose-only and windowed Gauss-Newton refinement on reprojection error.

Residuals are pixel reprojection errors, Huber-robustified. Rotations
update left-multiplicatively; the first window pose is held fixed as
the gauge. Jacobians are analytic and validated against central finite
differences in the test suite.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..geometry import CameraIntrinsics, distort_normalized
from ..optim import LMResult, lm_solve


def _skew_rows(m: np.ndarray) -> np.ndarray:
    """Per-row skew matrices, shape (N, 3, 3)."""
    n = len(m)
    out = np.zeros((n, 3, 3))
    out[:, 0, 1] = -m[:, 2]
    out[:, 0, 2] = m[:, 1]
    out[:, 1, 0] = m[:, 2]
    out[:, 1, 2] = -m[:, 0]
    out[:, 2, 0] = -m[:, 1]
    out[:, 2, 1] = m[:, 0]
    return out


def _rodrigues(w: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(w))
    Ks = np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0.0]])
    if theta < 1e-12:
        return np.eye(3) + Ks
    Ks = Ks / theta
    return np.eye(3) + np.sin(theta) * Ks + (1 - np.cos(theta)) * (Ks @ Ks)


def project_points(K: CameraIntrinsics, p: np.ndarray):
    """Pixels plus the 2x3 per-point Jacobians w.r.t. the camera point.

    p: (N, 3) camera-frame points with positive depth.
    Returns (pix (N,2), J (N,2,3)).
    """
    X, Y, Z = p[:, 0], p[:, 1], p[:, 2]
    x = X / Z
    y = Y / Z
    xd, yd = distort_normalized(K, x, y)
    pix = np.stack([K.fx * xd + K.cx, K.fy * yd + K.cy], axis=-1)

    r2 = x * x + y * y
    radial = 1 + K.k1 * r2 + K.k2 * r2 * r2
    dr = K.k1 + 2 * K.k2 * r2
    dxdx = radial + 2 * x * x * dr + 2 * K.p1 * y + 6 * K.p2 * x
    dxdy = 2 * x * y * dr + 2 * K.p1 * x + 2 * K.p2 * y
    dydy = radial + 2 * y * y * dr + 6 * K.p1 * y + 2 * K.p2 * x

    n = len(p)
    iz = 1.0 / Z
    dx_dp = np.stack([iz, np.zeros(n), -X * iz * iz], axis=1)
    dy_dp = np.stack([np.zeros(n), iz, -Y * iz * iz], axis=1)
    J = np.empty((n, 2, 3))
    J[:, 0, :] = K.fx * (dxdx[:, None] * dx_dp + dxdy[:, None] * dy_dp)
    J[:, 1, :] = K.fy * (dxdy[:, None] * dx_dp + dydy[:, None] * dy_dp)
    return pix, J


# ---------------------------------------------------------------------------
# Pose-only refinement
# ---------------------------------------------------------------------------


@dataclass
class PoseState:
    R: np.ndarray  # camera<-world rotation
    t: np.ndarray  # camera<-world translation


def pose_residuals(state: PoseState, K, points_w, pixels) -> np.ndarray:
    p = points_w @ state.R.T + state.t
    if np.any(p[:, 2] <= 1e-9):
        return np.full(2 * len(points_w), np.inf)
    pix, _ = project_points(K, p)
    return (pix - pixels).ravel()


def pose_jacobian(state: PoseState, K, points_w, pixels) -> np.ndarray:
    m = points_w @ state.R.T
    p = m + state.t
    _, Jp = project_points(K, p)
    n = len(points_w)
    J = np.empty((2 * n, 6))
    dtheta = -_skew_rows(m)  # d(exp(dw) R X)/d dw = -[R X]x
    J[:, :3] = np.einsum("nij,njk->nik", Jp, dtheta).reshape(2 * n, 3)
    J[:, 3:] = Jp.reshape(2 * n, 3)
    return J


def _pose_retract(state: PoseState, dx) -> PoseState:
    return PoseState(R=_rodrigues(dx[:3]) @ state.R, t=state.t + dx[3:])


def refine_pose(K: CameraIntrinsics, points_w, pixels, R0, t0,
                huber_px: float = 2.0, max_iters: int = 15) -> tuple[PoseState, LMResult]:
    """Camera-from-world pose from 3-D/pixel matches, starting at (R0, t0)."""
    points_w = np.asarray(points_w, dtype=float)
    pixels = np.asarray(pixels, dtype=float)
    state = PoseState(R=np.asarray(R0, dtype=float).copy(),
                      t=np.asarray(t0, dtype=float).copy())
    result = lm_solve(
        state,
        residual_fn=lambda s: pose_residuals(s, K, points_w, pixels),
        jacobian_fn=lambda s: pose_jacobian(s, K, points_w, pixels),
        retract=_pose_retract,
        max_iters=max_iters,
        huber_delta=huber_px,
    )
    return result.state, result


# ---------------------------------------------------------------------------
# Windowed refinement (poses + points, first pose fixed)
# ---------------------------------------------------------------------------


@dataclass
class WindowState:
    rotations: list[np.ndarray]  # camera<-world per keyframe
    translations: list[np.ndarray]
    points: np.ndarray  # (M, 3) world


@dataclass
class WindowProblem:
    K: CameraIntrinsics
    kf_idx: np.ndarray  # (L,) keyframe index per observation
    pt_idx: np.ndarray  # (L,) point index per observation
    pixels: np.ndarray  # (L, 2)

    def n_params(self, state: WindowState) -> int:
        return 6 * (len(state.rotations) - 1) + 3 * len(state.points)


def window_residuals(state: WindowState, prob: WindowProblem) -> np.ndarray:
    R = np.stack(state.rotations)
    t = np.stack(state.translations)
    X = state.points[prob.pt_idx]
    p = np.einsum("nij,nj->ni", R[prob.kf_idx], X) + t[prob.kf_idx]
    if np.any(p[:, 2] <= 1e-9):
        return np.full(2 * len(X), np.inf)
    pix, _ = project_points(prob.K, p)
    return (pix - prob.pixels).ravel()


def window_jacobian(state: WindowState, prob: WindowProblem) -> np.ndarray:
    R = np.stack(state.rotations)
    t = np.stack(state.translations)
    X = state.points[prob.pt_idx]
    Robs = R[prob.kf_idx]
    m = np.einsum("nij,nj->ni", Robs, X)
    p = m + t[prob.kf_idx]
    _, Jp = project_points(prob.K, p)

    L = len(X)
    n_kf = len(state.rotations)
    n_par = 6 * (n_kf - 1) + 3 * len(state.points)
    J = np.zeros((2 * L, n_par))

    Jtheta = np.einsum("nij,njk->nik", Jp, -_skew_rows(m))  # (L, 2, 3)
    Jpoint = np.einsum("nij,njk->nik", Jp, Robs)  # d pix / d X

    rows = 2 * np.arange(L)
    for k in range(1, n_kf):
        sel = prob.kf_idx == k
        col = 6 * (k - 1)
        r = rows[sel]
        J[np.repeat(r, 3), np.tile(np.arange(col, col + 3), sel.sum())] = Jtheta[sel, 0].ravel()
        J[np.repeat(r + 1, 3), np.tile(np.arange(col, col + 3), sel.sum())] = Jtheta[sel, 1].ravel()
        J[np.repeat(r, 3), np.tile(np.arange(col + 3, col + 6), sel.sum())] = Jp[sel, 0].ravel()
        J[np.repeat(r + 1, 3), np.tile(np.arange(col + 3, col + 6), sel.sum())] = Jp[sel, 1].ravel()
    pcols = 6 * (n_kf - 1) + 3 * prob.pt_idx
    J[np.repeat(rows, 3), (pcols[:, None] + np.arange(3)).ravel()] = Jpoint[:, 0].ravel()
    J[np.repeat(rows + 1, 3), (pcols[:, None] + np.arange(3)).ravel()] = Jpoint[:, 1].ravel()
    return J


def _window_retract(state: WindowState, dx) -> WindowState:
    n_kf = len(state.rotations)
    rotations = [state.rotations[0].copy()]
    translations = [state.translations[0].copy()]
    for k in range(1, n_kf):
        d = dx[6 * (k - 1): 6 * k]
        rotations.append(_rodrigues(d[:3]) @ state.rotations[k])
        translations.append(state.translations[k] + d[3:])
    pts = state.points + dx[6 * (n_kf - 1):].reshape(-1, 3)
    return WindowState(rotations=rotations, translations=translations, points=pts)


def refine_window(K: CameraIntrinsics, poses, points, observations,
                  huber_px: float = 2.0, max_iters: int = 12) -> tuple[WindowState, LMResult]:
    """Joint refinement of window keyframe poses and map points.

    poses: [(R, t)] camera<-world, first held fixed as gauge.
    observations: iterable of (kf_index, point_index, pixel (2,)).
    Returns the refined state; on singular normal equations the state
    comes back unchanged with a warning.
    """
    if len(poses) < 2:
        raise ValueError("window refinement needs at least 2 keyframes")
    obs = list(observations)
    state = WindowState(
        rotations=[np.asarray(R, dtype=float).copy() for R, _ in poses],
        translations=[np.asarray(t, dtype=float).copy() for _, t in poses],
        points=np.asarray(points, dtype=float).copy(),
    )
    prob = WindowProblem(
        K=K,
        kf_idx=np.array([o[0] for o in obs], dtype=int),
        pt_idx=np.array([o[1] for o in obs], dtype=int),
        pixels=np.array([o[2] for o in obs], dtype=float),
    )
    result = lm_solve(
        state,
        residual_fn=lambda s: window_residuals(s, prob),
        jacobian_fn=lambda s: window_jacobian(s, prob),
        retract=_window_retract,
        max_iters=max_iters,
        huber_delta=huber_px,
    )
    if result.iterations > 0 and len(result.costs) == 1 and not np.isfinite(result.costs[0]):
        warnings.warn("window refinement skipped: invalid initial state")
    return result.state, result
