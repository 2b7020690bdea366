"""Frame-by-frame VO session: two-view bootstrap, constant-velocity
patch tracking, policy-driven keyframing, triangulation, windowed
refinement. Loss is terminal; every input frame yields one trajectory
sample (initializing / tracking / lost).

Output poses live in a z-up pipeline frame whose origin sits on the
scene plane below the initialization camera, with the camera at unit
height (the map is scaled to average depth 1). Altitude anchoring
against truth therefore reduces to a similarity with scale
truth_altitude / 1.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import CannotInitializeError, DegenerateMotionError
from ..evaluation import (
    STATUS_INITIALIZING,
    STATUS_LOST,
    STATUS_TRACKING,
    Trajectory,
    TrajectorySample,
)
from ..geometry import (
    CameraIntrinsics,
    Pose,
    quat_conj,
    quat_from_matrix,
    quat_from_rotvec,
    quat_mul,
    rotvec_from_quat,
    unproject,
)
from .detect import detect_corners, select_candidate_pixels
from .params import DetectorParams, KeyframePolicy, MapPoint, TrackState, VOConfig
from .patches import track_patches
from .solvers import refine_pose, refine_window
from .two_view import initialize_from_matches, triangulate


@dataclass
class Keyframe:
    id: int
    frame_id: int
    t_us: int
    pose: Pose  # world<-camera, pipeline frame
    image: np.ndarray
    obs: dict = field(default_factory=dict)  # point id -> (2,) pixel


@dataclass
class FrameStats:
    distance_to_nearest_kf: float = 0.0
    tracked_fraction_vs_ref: float = 1.0
    median_flow_vs_ref: float = 0.0


def keyframe_decision(policy: KeyframePolicy, state: TrackState,
                      stats: FrameStats) -> bool:
    """Should the current frame become a keyframe?"""
    if policy.kind == "distance_based":
        return stats.distance_to_nearest_kf > policy.min_dist_fraction * state.avg_scene_depth
    return (
        stats.tracked_fraction_vs_ref < policy.min_tracked_fraction
        or stats.median_flow_vs_ref > policy.min_median_flow
    )


@dataclass
class SessionResult:
    trajectory: Trajectory
    initialized: bool = False
    lost_at_frame: int | None = None
    frames_processed: int = 0
    keyframes: int = 0
    map_size: int = 0

    def tracked_fraction(self) -> float:
        return self.trajectory.tracked_fraction()

    def summary(self) -> dict:
        return {
            "initialized": self.initialized,
            "initialization_failed": not self.initialized,
            "tracked_fraction": round(self.tracked_fraction(), 4),
            "frames": self.frames_processed,
            "keyframes": self.keyframes,
            "map_size": self.map_size,
            "lost_at_frame": self.lost_at_frame,
        }


# camera -> pipeline-world axes: x right, y forward (image up), z up
_PIPE_Q0 = quat_from_matrix(np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, -1.0]]))


def _pose_fraction(delta: Pose, fraction: float) -> Pose:
    return Pose(
        q=quat_from_rotvec(rotvec_from_quat(delta.q) * fraction),
        t=delta.t * fraction,
    )


class _Session:
    def __init__(self, K: CameraIntrinsics, cfg: VOConfig, mount_q=None, label="vo"):
        self.K = K
        self.cfg = cfg
        self.mount_q_inv = None if mount_q is None else quat_conj(np.asarray(mount_q, float))
        self.label = label
        self.samples: list[TrajectorySample] = []
        self.state = TrackState()
        self.keyframes: list[Keyframe] = []
        self.points: dict[int, MapPoint] = {}
        self.active: dict[int, np.ndarray] = {}  # point id -> pixel in prev frame
        self.next_point_id = 0
        self.prev_image = None
        self.prev_pose: Pose | None = None
        self.lost_at: int | None = None
        self.frames_processed = 0
        # initialization bookkeeping
        self.anchor_image = None
        self.anchor_pts = None
        self.anchor_frame_idx = 0
        self.track_pts = None

    # -- helpers ------------------------------------------------------------

    def _detect(self, image) -> np.ndarray:
        d = self.cfg.detector
        if d.method == "fast_cells":
            corners = detect_corners(image, d.cell_size, d.fast_threshold)
            pts = np.array([c[0] for c in corners], dtype=float) if corners else np.zeros((0, 2))
        else:
            cands = select_candidate_pixels(image, d.block_size_d, d.min_grad_add)
            pts = np.array(cands, dtype=float) if cands else np.zeros((0, 2))
        if len(pts) > d.max_features:
            pts = pts[: d.max_features]
        return pts

    def _emit(self, t_us: int, status: str, cam_pose: Pose | None = None):
        pose = cam_pose if cam_pose is not None else Pose(t_us=t_us)
        if cam_pose is not None and self.mount_q_inv is not None:
            pose = cam_pose.compose(Pose(q=self.mount_q_inv))
        self.samples.append(TrajectorySample(t_us=t_us, pose=Pose(t_us=t_us, q=pose.q, t=pose.t),
                                             status=status))

    def _cam_from_world(self, pose: Pose):
        inv = pose.inverse()
        return inv.rotation_matrix(), inv.t

    # -- initialization -----------------------------------------------------

    def _init_step(self, frame) -> None:
        img = frame.pixels
        if self.anchor_image is None:
            pts = self._detect(img)
            if len(pts) >= self.cfg.min_init_matches:
                self.anchor_image = img
                self.anchor_pts = pts
                self.track_pts = pts.copy()
                self.anchor_frame_idx = self.frames_processed
                self.prev_image = img
            self._emit(frame.t_us, STATUS_INITIALIZING)
            return

        tracks = track_patches(self.prev_image, img, self.track_pts,
                               self.cfg.search_radius,
                               max_residual=self.cfg.patch_residual_max)
        if len(tracks) < self.cfg.min_init_matches:
            self.anchor_image = None  # reseed from the next frame
            self.prev_image = None
            self._emit(frame.t_us, STATUS_INITIALIZING)
            return
        idx = np.array([t.index for t in tracks])
        self.anchor_pts = self.anchor_pts[idx]
        self.track_pts = np.array([t.point + t.displacement for t in tracks])
        self.prev_image = img

        flow = np.median(np.linalg.norm(self.track_pts - self.anchor_pts, axis=1))
        if flow >= max(self.cfg.init_target_flow_px, self.cfg.init_min_flow_px):
            try:
                init = initialize_from_matches(
                    self.anchor_pts, self.track_pts, self.K,
                    min_matches=self.cfg.min_init_matches,
                    min_flow_px=self.cfg.init_min_flow_px,
                    ransac_threshold_px=self.cfg.ransac_threshold_px,
                    ransac_iterations=self.cfg.ransac_iterations,
                    parallax_gate_deg=self.cfg.parallax_gate_deg,
                    seed=self.cfg.seed,
                )
            except (CannotInitializeError, DegenerateMotionError):
                self._emit(frame.t_us, STATUS_INITIALIZING)
                return
            if len(init.points) >= self.cfg.min_init_points:
                self._finish_init(frame, init)
                return
        self._emit(frame.t_us, STATUS_INITIALIZING)

    def _finish_init(self, frame, init) -> None:
        pose0 = Pose(q=_PIPE_Q0, t=np.array([0.0, 0.0, 1.0]))
        rel = Pose(q=quat_from_matrix(init.R), t=init.t).inverse()  # c0 <- ck
        pose1 = pose0.compose(rel)
        kf0 = Keyframe(id=0, frame_id=self.anchor_frame_idx, t_us=0,
                       pose=pose0, image=self.anchor_image)
        kf1 = Keyframe(id=1, frame_id=self.frames_processed, t_us=frame.t_us,
                       pose=pose1, image=frame.pixels)
        for i, (p_c0, mi) in enumerate(zip(init.points, init.match_indices)):
            pid = self.next_point_id
            self.next_point_id += 1
            world = pose0.transform(p_c0)
            mp = MapPoint(id=pid, position=world, host_keyframe=0,
                          observations=2)
            self.points[pid] = mp
            kf0.obs[pid] = self.anchor_pts[mi].copy()
            kf1.obs[pid] = self.track_pts[mi].copy()
            self.active[pid] = self.track_pts[mi].copy()
        self.keyframes = [kf0, kf1]
        n_frames = max(self.frames_processed - self.anchor_frame_idx, 1)
        self.state = TrackState(
            status="tracking",
            pose=pose1,
            velocity=_pose_fraction(pose0.inverse().compose(pose1), 1.0 / n_frames),
            reference_keyframe=1,
            avg_scene_depth=1.0,
        )
        self.prev_pose = pose1
        self.prev_image = frame.pixels
        self._triangulate_new(kf1)  # densify beyond the bootstrap tracks
        self._refine_window_now()
        self.state.pose = kf1.pose
        self._emit(frame.t_us, STATUS_TRACKING, self.state.pose)

    # -- tracking -----------------------------------------------------------

    def _track_step(self, frame) -> None:
        img = frame.pixels
        pred = self.state.pose.compose(self.state.velocity)
        R_cw, t_cw = self._cam_from_world(pred)

        ids, prev_pix, proj = self._project_active(R_cw, t_cw)
        if len(ids) < max(6, self.cfg.min_inliers // 2):
            self._lose(frame)
            return
        tracks = track_patches(self.prev_image, img, prev_pix,
                               self.cfg.search_radius, predicted=proj,
                               max_residual=self.cfg.patch_residual_max)
        if len(tracks) < max(6, self.cfg.min_inliers // 2):
            self._lose(frame)
            return
        t_idx = np.array([t.index for t in tracks])
        matched_ids = [ids[i] for i in t_idx]
        matched_pix = np.array([t.point + t.displacement for t in tracks])
        pts3d = np.array([self.points[pid].position for pid in matched_ids])

        pose_state, _ = refine_pose(self.K, pts3d, matched_pix, R_cw, t_cw,
                                    huber_px=self.cfg.huber_px)
        p_cam = pts3d @ pose_state.R.T + pose_state.t
        front = p_cam[:, 2] > 1e-6
        err = np.full(len(pts3d), np.inf)
        if front.any():
            from .solvers import project_points

            pix, _ = project_points(self.K, p_cam[front])
            err[front] = np.linalg.norm(pix - matched_pix[front], axis=1)
        inlier = err <= self.cfg.inlier_px
        n_in = int(inlier.sum())
        if n_in < self.cfg.min_inliers or err[inlier].mean() > self.cfg.max_mean_inlier_err_px:
            self._lose(frame)
            return

        cam_pose = Pose(q=quat_from_matrix(pose_state.R.T),
                        t=-pose_state.R.T @ pose_state.t)
        self.state.velocity = self.state.pose.inverse().compose(cam_pose)
        self.state.pose = cam_pose
        self.state.avg_scene_depth = float(np.median(p_cam[inlier, 2]))

        self.active = {}
        for k, pid in enumerate(matched_ids):
            if inlier[k]:
                self.active[pid] = matched_pix[k]
                self.points[pid].observations += 1

        stats = self._frame_stats()
        if keyframe_decision(self.cfg.policy, self.state, stats):
            self._insert_keyframe(frame, img)

        self.prev_image = img
        self.prev_pose = cam_pose
        self._emit(frame.t_us, STATUS_TRACKING, self.state.pose)

    def _project_active(self, R_cw, t_cw):
        if not self.active:
            return [], np.zeros((0, 2)), np.zeros((0, 2))
        ids = list(self.active.keys())
        X = np.array([self.points[pid].position for pid in ids])
        p = X @ R_cw.T + t_cw
        margin = 4.0
        ok = p[:, 2] > 1e-6
        pix = np.zeros((len(ids), 2))
        if ok.any():
            from .solvers import project_points

            pp, _ = project_points(self.K, p[ok])
            pix[ok] = pp
        ok &= (
            (pix[:, 0] >= margin) & (pix[:, 0] <= self.K.width - 1 - margin)
            & (pix[:, 1] >= margin) & (pix[:, 1] <= self.K.height - 1 - margin)
        )
        ids = [pid for pid, good in zip(ids, ok) if good]
        prev_pix = np.array([self.active[pid] for pid in ids]) if ids else np.zeros((0, 2))
        return ids, prev_pix, pix[ok]

    def _frame_stats(self) -> FrameStats:
        pos = self.state.pose.t
        dist = min(float(np.linalg.norm(pos - kf.pose.t)) for kf in self.keyframes)
        ref = self.keyframes[self.state.reference_keyframe]
        if ref.obs:
            still = [pid for pid in ref.obs if pid in self.active]
            fraction = len(still) / len(ref.obs)
            flows = [float(np.linalg.norm(self.active[pid] - ref.obs[pid])) for pid in still]
            median_flow = float(np.median(flows)) if flows else float("inf")
        else:
            fraction, median_flow = 0.0, float("inf")
        return FrameStats(
            distance_to_nearest_kf=dist,
            tracked_fraction_vs_ref=fraction,
            median_flow_vs_ref=median_flow,
        )

    # -- keyframing ---------------------------------------------------------

    def _insert_keyframe(self, frame, img) -> None:
        kf = Keyframe(
            id=len(self.keyframes), frame_id=self.frames_processed,
            t_us=frame.t_us, pose=self.state.pose, image=img,
            obs={pid: pix.copy() for pid, pix in self.active.items()},
        )
        self.keyframes.append(kf)
        self.state.reference_keyframe = kf.id
        self._triangulate_new(kf)
        self._refine_window_now()

    def _triangulate_new(self, kf: Keyframe) -> None:
        prev_kf = self.keyframes[-2]
        cands = self._detect(kf.image)
        if len(cands) == 0:
            return
        # keep candidates clear of currently tracked pixels
        if self.active:
            occ = np.array(list(self.active.values()))
            keep = []
            spacing = self.cfg.min_point_spacing_px
            for c in cands:
                if np.min(np.abs(occ - c).max(axis=1)) >= spacing:
                    keep.append(c)
            cands = np.array(keep) if keep else np.zeros((0, 2))
        budget = self.cfg.detector.max_features - len(self.active)
        if budget <= 0 or len(cands) == 0:
            return
        cands = cands[:budget]

        rays = unproject(self.K, cands)
        depth = self.state.avg_scene_depth
        world_guess = kf.pose.transform(rays * depth)
        inv = prev_kf.pose.inverse()
        p_prev = world_guess @ inv.rotation_matrix().T + inv.t
        front = p_prev[:, 2] > 1e-6
        if not front.any():
            return
        from .solvers import project_points

        proj_prev = np.zeros((len(cands), 2))
        proj_prev[front], _ = project_points(self.K, p_prev[front])
        margin = 4.0
        ok = front & (
            (proj_prev[:, 0] >= margin) & (proj_prev[:, 0] <= self.K.width - 1 - margin)
            & (proj_prev[:, 1] >= margin) & (proj_prev[:, 1] <= self.K.height - 1 - margin)
        )
        if not ok.any():
            return
        cands = cands[ok]
        rays = rays[ok]
        proj_prev = proj_prev[ok]

        tracks = track_patches(kf.image, prev_kf.image, cands,
                               self.cfg.search_radius, predicted=proj_prev,
                               max_residual=self.cfg.patch_residual_max)
        for tr in tracks:
            pix_new = tr.point
            pix_prev = tr.point + tr.displacement
            try:
                world, parallax = triangulate(
                    prev_kf.pose, kf.pose,
                    unproject(self.K, pix_prev), rays[tr.index],
                    parallax_gate_deg=self.cfg.parallax_gate_deg,
                )
            except Exception:
                continue
            if not self._reprojection_ok(world, prev_kf, pix_prev) \
                    or not self._reprojection_ok(world, kf, pix_new):
                continue
            pid = self.next_point_id
            self.next_point_id += 1
            self.points[pid] = MapPoint(id=pid, position=world, host_keyframe=kf.id,
                                        observations=2, parallax_deg=parallax)
            kf.obs[pid] = np.asarray(pix_new, dtype=float)
            prev_kf.obs[pid] = np.asarray(pix_prev, dtype=float)
            self.active[pid] = np.asarray(pix_new, dtype=float)

    def _reprojection_ok(self, world, kf: Keyframe, pix, tol: float = 2.0) -> bool:
        inv = kf.pose.inverse()
        p = inv.rotation_matrix() @ np.asarray(world) + inv.t
        if p[2] <= 1e-6:
            return False
        from .solvers import project_points

        pp, _ = project_points(self.K, p[None, :])
        return float(np.linalg.norm(pp[0] - pix)) <= tol

    def _refine_window_now(self) -> None:
        window = self.keyframes[-self.cfg.window_size:]
        id_map = {kf.id: i for i, kf in enumerate(window)}
        counts: dict[int, int] = {}
        for kf in window:
            for pid in kf.obs:
                counts[pid] = counts.get(pid, 0) + 1
        pids = [pid for pid, c in counts.items() if c >= 2]
        if len(pids) < 8 or len(window) < 2:
            return
        pt_index = {pid: i for i, pid in enumerate(pids)}
        obs = []
        for kf in window:
            for pid, pix in kf.obs.items():
                if pid in pt_index:
                    obs.append((id_map[kf.id], pt_index[pid], pix))
        poses = []
        for kf in window:
            inv = kf.pose.inverse()
            poses.append((inv.rotation_matrix(), inv.t))
        pts = np.array([self.points[pid].position for pid in pids])
        state, result = refine_window(self.K, poses, pts, obs,
                                      huber_px=self.cfg.huber_px)
        if len(result.costs) < 2:
            return  # no accepted step; keep previous state
        for kf, R, t in zip(window, state.rotations, state.translations):
            kf.pose = Pose(t_us=kf.t_us, q=quat_from_matrix(R.T), t=-R.T @ t)
        for pid, pos in zip(pids, state.points):
            self.points[pid].position = pos
        newest = self.keyframes[-1]
        if newest.frame_id == self.frames_processed:
            self.state.pose = newest.pose

    def _lose(self, frame) -> None:
        if self.lost_at is None:
            self.lost_at = self.frames_processed
        self.state.status = "lost"
        self._emit(frame.t_us, STATUS_LOST, self.state.pose)

    # -- main loop ----------------------------------------------------------

    def process(self, frame) -> None:
        if self.state.status == "lost":
            self._emit(frame.t_us, STATUS_LOST, self.state.pose)
        elif self.state.status == "initializing":
            self._init_step(frame)
        else:
            self._track_step(frame)
        self.frames_processed += 1

    def result(self) -> SessionResult:
        return SessionResult(
            trajectory=Trajectory(samples=self.samples, label=self.label),
            initialized=bool(self.keyframes),
            lost_at_frame=self.lost_at,
            frames_processed=self.frames_processed,
            keyframes=len(self.keyframes),
            map_size=len(self.points),
        )


def run_session(frames, K: CameraIntrinsics, config: VOConfig | None = None,
                mount_q=None, label: str = "vo") -> SessionResult:
    """Run the VO pipeline over an iterable of frames.

    frames yield objects with t_us and pixels (rendered lazily or not);
    mount_q, when given, converts camera poses to body poses in the
    output trajectory.
    """
    cfg = config or VOConfig()
    session = _Session(K, cfg, mount_q=mount_q, label=label)
    for frame in frames:
        session.process(frame)
    return session.result()
