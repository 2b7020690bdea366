"""Two-view bootstrap: RANSAC homography, analytic plane decomposition,
ray triangulation, and map initialization at unit average depth.

Geometry conventions: matches map frame 0 to frame 1; the recovered
(R, t) satisfy X1 = R @ X0 + t with t expressed in units of the plane
distance (monocular scale freedom). The plane normal n is in frame 0
with n . X = d > 0 for points in front of the camera.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import (
    CannotInitializeError,
    DegenerateMotionError,
    LowParallaxError,
)
from ..calibration import estimate_homography
from ..geometry import CameraIntrinsics, Pose, project, unproject
from .detect import select_candidate_pixels
from .params import DetectorParams, MapPoint
from .patches import track_patches


def _k_matrix(K: CameraIntrinsics) -> np.ndarray:
    return np.array([[K.fx, 0, K.cx], [0, K.fy, K.cy], [0, 0, 1.0]])


# ---------------------------------------------------------------------------
# RANSAC homography
# ---------------------------------------------------------------------------


def ransac_homography(pts0, pts1, threshold_px: float = 1.5, iterations: int = 500,
                      seed: int = 0):
    """Robust pixel-space homography; returns (H, inlier_mask).

    Stops early once the inlier ratio makes further sampling pointless
    (0.999 confidence), which keeps noiseless cases cheap.
    """
    pts0 = np.asarray(pts0, dtype=float)
    pts1 = np.asarray(pts1, dtype=float)
    n = len(pts0)
    if n < 4:
        raise CannotInitializeError(f"homography needs >= 4 matches, got {n}")
    rng = np.random.default_rng(seed)
    ones = np.ones((n, 1))
    h0 = np.hstack([pts0, ones])
    best_mask = None
    best_count = 3
    required = iterations
    it = 0
    while it < min(iterations, required):
        it += 1
        idx = rng.choice(n, 4, replace=False)
        try:
            H, _ = estimate_homography(pts0[idx], pts1[idx])
        except Exception:
            continue
        proj = h0 @ H.T
        w = proj[:, 2]
        valid = np.abs(w) > 1e-12
        err = np.full(n, np.inf)
        err[valid] = np.linalg.norm(proj[valid, :2] / w[valid, None] - pts1[valid], axis=1)
        mask = err < threshold_px
        count = int(mask.sum())
        if count > best_count:
            best_count = count
            best_mask = mask
            ratio = count / n
            if ratio >= 1.0 - 1e-12:
                break
            required = math.ceil(math.log(1e-3) / math.log(1 - ratio ** 4 + 1e-12))
    if best_mask is None:
        raise DegenerateMotionError("no homography consensus found")
    H, _ = estimate_homography(pts0[best_mask], pts1[best_mask])
    proj = h0 @ H.T
    w = proj[:, 2]
    valid = np.abs(w) > 1e-12
    err = np.full(n, np.inf)
    err[valid] = np.linalg.norm(proj[valid, :2] / w[valid, None] - pts1[valid], axis=1)
    return H, err < threshold_px


# ---------------------------------------------------------------------------
# Homography decomposition (plane-induced motion)
# ---------------------------------------------------------------------------


@dataclass
class PlaneMotion:
    R: np.ndarray  # (3,3), X1 = R X0 + t
    t: np.ndarray  # (3,), scaled by 1/plane-distance
    n: np.ndarray  # (3,), plane normal in frame 0


def decompose_homography(H_pix: np.ndarray, K: CameraIntrinsics,
                         rays0: np.ndarray, rays1: np.ndarray) -> PlaneMotion:
    """Pick the physically valid {R, t/d, n} from a pixel homography.

    rays0/rays1: matched unit rays used for the cheirality check.
    Raises DegenerateMotionError when the homography is (near) a pure
    rotation - zero baseline - or no candidate passes the checks.
    """
    Km = _k_matrix(K)
    Hn = np.linalg.inv(Km) @ np.asarray(H_pix, dtype=float) @ Km

    # fix the projective sign so x1 ~ +Hn x0 for the correspondences
    x0h = np.column_stack([rays0[:, 0] / rays0[:, 2], rays0[:, 1] / rays0[:, 2],
                           np.ones(len(rays0))])
    x1h = np.column_stack([rays1[:, 0] / rays1[:, 2], rays1[:, 1] / rays1[:, 2],
                           np.ones(len(rays1))])
    sign_votes = np.sum((x0h @ Hn.T) * x1h, axis=1)
    if np.median(sign_votes) < 0:
        Hn = -Hn

    U, lam, Vt = np.linalg.svd(Hn)
    if lam[1] < 1e-12:
        raise DegenerateMotionError("homography is rank deficient")
    d1, d3 = lam[0] / lam[1], lam[2] / lam[1]
    if d1 - d3 < 1e-6:
        raise DegenerateMotionError("equal singular values: zero baseline or pure rotation")
    s = np.linalg.det(U) * np.linalg.det(Vt)
    V = Vt.T

    denom = d1 * d1 - d3 * d3
    x1a = math.sqrt(max(0.0, (d1 * d1 - 1.0) / denom))
    x3a = math.sqrt(max(0.0, (1.0 - d3 * d3) / denom))

    H_unit = Hn / lam[1] * s
    candidates = []
    for e1 in (1.0, -1.0):
        for e3 in (1.0, -1.0):
            x1 = e1 * x1a
            x3 = e3 * x3a
            sin_t = (d1 - d3) * x1 * x3
            cos_t = d1 * x3 * x3 + d3 * x1 * x1
            Rp = np.array([[cos_t, 0, -sin_t], [0, 1, 0], [sin_t, 0, cos_t]])
            tp = (d1 - d3) * np.array([x1, 0.0, -x3])
            npr = np.array([x1, 0.0, x3])
            R = s * (U @ Rp @ Vt)
            t = U @ tp
            nvec = V @ npr
            recon = min(
                np.linalg.norm(R + np.outer(t, nvec) - H_unit),
                np.linalg.norm(R + np.outer(t, nvec) + H_unit),
            )
            if recon > 1e-4 * max(1.0, np.linalg.norm(H_unit)):
                continue
            candidates.append(PlaneMotion(R=R, t=t, n=nvec))

    best = None
    best_key = (-1, -np.inf)
    for cand in candidates:
        depths0, depths1, _, _ = _triangulate_batch(cand.R, cand.t, rays0, rays1)
        good = int(np.sum((depths0 > 0) & (depths1 > 0)))
        key = (good, cand.n[2])
        if cand.n[2] > 0 and key > best_key:
            best_key = key
            best = cand
    if best is None or best_key[0] < max(3, len(rays0) // 4):
        raise DegenerateMotionError("no decomposition passes cheirality")
    return best


def _triangulate_batch(R, t, rays0, rays1):
    """Midpoint triangulation in frame 0 for all ray pairs at once.

    Camera 0 at origin; camera 1 center C1 = -R^T t, rays rotated back.
    Returns (depth0, depth1, points, parallax_deg).
    """
    C1 = -R.T @ t
    r1w = rays1 @ R  # R^T @ ray, vectorized
    d0, d1w = rays0, r1w
    b = C1[None, :]
    a00 = np.einsum("ij,ij->i", d0, d0)
    a01 = -np.einsum("ij,ij->i", d0, d1w)
    a11 = np.einsum("ij,ij->i", d1w, d1w)
    b0 = np.einsum("ij,ij->i", d0, b)
    b1 = -np.einsum("ij,ij->i", d1w, b)
    det = a00 * a11 - a01 * a01
    det = np.where(np.abs(det) < 1e-14, np.nan, det)
    su = (b0 * a11 - b1 * a01) / det
    sv = (a00 * b1 - a01 * b0) / det
    p0 = d0 * su[:, None]
    p1 = C1[None, :] + d1w * sv[:, None]
    pts = 0.5 * (p0 + p1)
    depth0 = pts[:, 2]
    depth1 = (pts @ R.T + t)[:, 2]
    v0 = pts
    v1 = pts - C1[None, :]
    cosang = np.einsum("ij,ij->i", v0, v1) / np.maximum(
        np.linalg.norm(v0, axis=1) * np.linalg.norm(v1, axis=1), 1e-300
    )
    parallax = np.degrees(np.arccos(np.clip(cosang, -1.0, 1.0)))
    return depth0, depth1, pts, parallax


def triangulate(pose_a: Pose, pose_b: Pose, ray_a, ray_b,
                parallax_gate_deg: float = 1.0):
    """World-frame midpoint of two camera rays; parallax-gated.

    pose_a/pose_b are world<-camera; rays are unit vectors in each
    camera frame. Returns (point, parallax_deg).
    """
    da = pose_a.rotation_matrix() @ np.asarray(ray_a, dtype=float)
    db = pose_b.rotation_matrix() @ np.asarray(ray_b, dtype=float)
    da = da / np.linalg.norm(da)
    db = db / np.linalg.norm(db)
    parallax = math.degrees(math.acos(max(-1.0, min(1.0, float(da @ db)))))
    if parallax < parallax_gate_deg:
        raise LowParallaxError(
            f"parallax {parallax:.3f} deg below gate {parallax_gate_deg} deg"
        )
    oa, ob = pose_a.t, pose_b.t
    a00 = float(da @ da)
    a01 = -float(da @ db)
    a11 = float(db @ db)
    rhs = ob - oa
    b0 = float(da @ rhs)
    b1 = -float(db @ rhs)
    det = a00 * a11 - a01 * a01
    su = (b0 * a11 - b1 * a01) / det
    sv = (a00 * b1 - a01 * b0) / det
    point = 0.5 * ((oa + su * da) + (ob + sv * db))
    return point, parallax


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------


@dataclass
class TwoViewInit:
    R: np.ndarray  # X1 = R X0 + t, frame-0 -> frame-1
    t: np.ndarray  # unit-mean-depth scale
    normal: np.ndarray
    points: np.ndarray  # (M, 3) in frame 0, mean depth 1
    match_indices: np.ndarray  # (M,) indices into the input match arrays
    avg_scene_depth: float = 1.0
    inlier_mask: np.ndarray = field(default=None)


def initialize_from_matches(pts0, pts1, K: CameraIntrinsics,
                            min_matches: int = 30, min_flow_px: float = 2.0,
                            ransac_threshold_px: float = 1.5,
                            ransac_iterations: int = 500,
                            parallax_gate_deg: float = 1.0,
                            seed: int = 0) -> TwoViewInit:
    """Relative pose up to scale plus an initial map at mean depth 1."""
    pts0 = np.asarray(pts0, dtype=float)
    pts1 = np.asarray(pts1, dtype=float)
    if len(pts0) < min_matches:
        raise CannotInitializeError(
            f"{len(pts0)} matches below the minimum of {min_matches}"
        )
    flow = np.median(np.linalg.norm(pts1 - pts0, axis=1))
    if flow < min_flow_px:
        if flow < 0.25:  # indistinguishable views: zero baseline, not just low flow
            raise DegenerateMotionError(
                f"median flow {flow:.2f} px: zero baseline between views"
            )
        raise CannotInitializeError(
            f"median flow {flow:.2f} px below the {min_flow_px} px parallax gate"
        )
    H, inliers = ransac_homography(pts0, pts1, ransac_threshold_px,
                                   ransac_iterations, seed)
    if inliers.sum() < min_matches:
        raise CannotInitializeError(f"only {int(inliers.sum())} homography inliers")
    rays0 = unproject(K, pts0[inliers])
    rays1 = unproject(K, pts1[inliers])
    motion = decompose_homography(H, K, rays0, rays1)
    depth0, depth1, pts3d, parallax = _triangulate_batch(motion.R, motion.t, rays0, rays1)
    keep = (
        (depth0 > 0) & (depth1 > 0)
        & (parallax >= parallax_gate_deg)
        & np.isfinite(pts3d).all(axis=1)
    )
    if keep.sum() < 3:
        raise CannotInitializeError(
            f"only {int(keep.sum())} triangulated points above the parallax gate"
        )
    pts3d = pts3d[keep]
    mean_depth = float(pts3d[:, 2].mean())
    scale = 1.0 / mean_depth
    return TwoViewInit(
        R=motion.R,
        t=motion.t * scale,
        normal=motion.n,
        points=pts3d * scale,
        match_indices=np.nonzero(inliers)[0][keep],
        avg_scene_depth=1.0,
        inlier_mask=inliers,
    )


def initialize_two_view(f0, f1, K: CameraIntrinsics,
                        detector: DetectorParams | None = None,
                        search_radius: int = 12, seed: int = 0) -> TwoViewInit:
    """Detect in f0, match into f1, then bootstrap the two-view geometry."""
    detector = detector or DetectorParams()
    cands = select_candidate_pixels(f0.pixels, detector.block_size_d, detector.min_grad_add)
    if len(cands) < 4:
        raise CannotInitializeError(f"only {len(cands)} candidate pixels in the first view")
    pts = np.array(cands, dtype=float)
    tracks = track_patches(f0.pixels, f1.pixels, pts, search_radius,
                           max_residual=400.0)
    if len(tracks) < 4:
        raise CannotInitializeError(f"only {len(tracks)} patch matches between views")
    p0 = np.array([t.point for t in tracks])
    p1 = p0 + np.array([t.displacement for t in tracks])
    return initialize_from_matches(p0, p1, K, seed=seed)


def map_points_from_init(init: TwoViewInit, host_keyframe: int,
                         first_id: int = 0) -> list[MapPoint]:
    pts = []
    for i, p in enumerate(init.points):
        pts.append(MapPoint(id=first_id + i, position=np.asarray(p, dtype=float),
                            host_keyframe=host_keyframe, observations=2))
    return pts
