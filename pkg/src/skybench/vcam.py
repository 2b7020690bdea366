"""Virtual nadir camera: per-pixel ray-cast rendering and frame streaming.

Each pixel's ray is cast against the terrain heightfield; flat terrain
is intersected analytically, uneven terrain by a bracketed march with
bisection refinement. Intensity comes from the texture field and is
pushed through the exposure model to 8 bits. Rendering is deterministic:
identical inputs give bit-identical frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidViewpointError
from .geometry import CameraIntrinsics, Pose, project, unproject
from .terrain import ExposureModel, Terrain
from .flightsim import StateSample, camera_pose_at

_RAY_CACHE: dict[tuple, np.ndarray] = {}


def _camera_rays(K: CameraIntrinsics) -> np.ndarray:
    """Unit rays through every pixel center, camera frame, shape (H, W, 3)."""
    key = (K.fx, K.fy, K.cx, K.cy, K.k1, K.k2, K.p1, K.p2, K.width, K.height)
    rays = _RAY_CACHE.get(key)
    if rays is None:
        u, v = np.meshgrid(np.arange(K.width, dtype=float), np.arange(K.height, dtype=float))
        pix = np.stack([u.ravel(), v.ravel()], axis=-1)
        rays = unproject(K, pix).reshape(K.height, K.width, 3)
        _RAY_CACHE[key] = rays
    return rays


@dataclass
class ImageFrame:
    t_us: int
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8
    frame_id: int = 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=np.uint8)
        if self.pixels.shape != (self.height, self.width):
            raise InvalidArgumentError("pixel buffer does not match frame dimensions")


@dataclass
class LandmarkObservation:
    landmark_id: int
    pixel: np.ndarray  # (2,)
    noise_sigma: float


def render_frame(K: CameraIntrinsics, cam_pose: Pose, terrain: Terrain,
                 exposure: ExposureModel | None = None,
                 t_us: int | None = None, frame_id: int = 0) -> ImageFrame:
    """Ray-cast one grayscale frame from a world<-camera pose."""
    exposure = exposure or ExposureModel()
    hf = terrain.heightfield
    cam = cam_pose.t
    if cam[2] <= hf.height_at(cam[0], cam[1]):
        raise InvalidViewpointError(
            f"camera at z={cam[2]:.2f} is below terrain "
            f"({hf.height_at(cam[0], cam[1]):.2f})"
        )
    rays = _camera_rays(K)
    world_dirs = rays.reshape(-1, 3) @ cam_pose.rotation_matrix().T

    dz = world_dirs[:, 2]
    down = dz < -1e-12
    intensity = np.zeros(world_dirs.shape[0])

    if hf.is_flat():
        h0 = float(hf.elevations.flat[0])
        t = np.where(down, (cam[2] - h0) / np.where(down, -dz, 1.0), 0.0)
        hit = down
    else:
        t, hit = _march_heightfield(cam, world_dirs, hf)
    gx = cam[0] + t * world_dirs[:, 0]
    gy = cam[1] + t * world_dirs[:, 1]

    if np.any(hit):
        intensity[hit] = terrain.texture.intensity_at(gx[hit], gy[hit])
    pixels = exposure.apply(intensity).reshape(K.height, K.width)
    return ImageFrame(
        t_us=cam_pose.t_us if t_us is None else t_us,
        width=K.width, height=K.height, pixels=pixels, frame_id=frame_id,
    )


def _march_heightfield(cam: np.ndarray, dirs: np.ndarray, hf,
                       steps: int = 96, refine: int = 30):
    """First ray/heightfield crossing by uniform march + bisection."""
    dz = dirs[:, 2]
    down = dz < -1e-12
    # march slightly past the minimum elevation so grazing rays still bracket
    floor = hf.min_elevation() - max(1e-3 * (cam[2] - hf.min_elevation()), 1e-6)
    t_far = np.where(down, (cam[2] - floor) / np.where(down, -dz, 1.0), 0.0)
    lo = np.zeros(len(dirs))
    hi = np.zeros(len(dirs))
    prev = np.zeros(len(dirs))
    found = np.zeros(len(dirs), dtype=bool)
    for k in range(1, steps + 1):
        t = t_far * (k / steps)
        px = cam[0] + t * dirs[:, 0]
        py = cam[1] + t * dirs[:, 1]
        below = (cam[2] + t * dz) < hf.height_at(px, py)
        new = below & ~found & down
        lo[new] = prev[new]
        hi[new] = t[new]
        found |= new
        prev = t
    for _ in range(refine):
        mid = np.where(found, 0.5 * (lo + hi), 0.0)
        px = cam[0] + mid * dirs[:, 0]
        py = cam[1] + mid * dirs[:, 1]
        below = (cam[2] + mid * dz) < hf.height_at(px, py)
        hi = np.where(found & below, mid, hi)
        lo = np.where(found & ~below, mid, lo)
    return np.where(found, 0.5 * (lo + hi), 0.0), found


def observe_landmarks(K: CameraIntrinsics, cam_pose: Pose, landmarks,
                      sigma: float = 0.0, rng_seed: int = 0) -> list[LandmarkObservation]:
    """Project world landmarks to noisy pixel observations.

    Points behind the camera or out of bounds are omitted; identical
    seeds produce identical noise.
    """
    landmarks = np.atleast_2d(np.asarray(landmarks, dtype=float))
    inv = cam_pose.inverse()
    p_cam = landmarks @ inv.rotation_matrix().T + inv.t
    rng = np.random.default_rng(rng_seed)
    out: list[LandmarkObservation] = []
    for i, pc in enumerate(p_cam):
        if pc[2] <= 1e-9:
            continue
        pix = project(K, pc)
        if not (0 <= pix[0] <= K.width - 1 and 0 <= pix[1] <= K.height - 1):
            continue
        if sigma > 0:
            pix = pix + rng.normal(0.0, sigma, size=2)
            if not (0 <= pix[0] <= K.width - 1 and 0 <= pix[1] <= K.height - 1):
                continue
        out.append(LandmarkObservation(landmark_id=i, pixel=pix, noise_sigma=sigma))
    return out


# ---------------------------------------------------------------------------
# Frame streaming
# ---------------------------------------------------------------------------


@dataclass
class StreamConfig:
    fps: float = 31.0
    processing_fps_cap: float | None = None  # drop frames beyond this rate
    drop_policy: str = "drop-oldest"

    def __post_init__(self):
        if self.fps <= 0:
            raise InvalidArgumentError("fps must be positive")
        if self.processing_fps_cap is not None and self.processing_fps_cap > self.fps:
            raise InvalidArgumentError("processing cap must not exceed the stream rate")
        if self.drop_policy != "drop-oldest":
            raise InvalidArgumentError(f"unknown drop policy '{self.drop_policy}'")


@dataclass
class StreamStats:
    generated: int = 0
    delivered: int = 0
    dropped: int = 0


class LazyFrame:
    """Frame whose pixels render on first access; metadata is immediate.

    Lets a consumer that has stopped processing (e.g. a lost VO session)
    drain the stream without paying for rendering.
    """

    def __init__(self, t_us: int, width: int, height: int, frame_id: int, render_fn):
        self.t_us = t_us
        self.width = width
        self.height = height
        self.frame_id = frame_id
        self._render_fn = render_fn
        self._pixels = None

    @property
    def pixels(self) -> np.ndarray:
        if self._pixels is None:
            self._pixels = self._render_fn()
            self._render_fn = None
        return self._pixels


class VirtualCamera:
    """Renders frames along a trajectory through a fixed mount."""

    def __init__(self, K: CameraIntrinsics, terrain: Terrain,
                 exposure: ExposureModel | None = None, mount=None):
        self.K = K
        self.terrain = terrain
        self.exposure = exposure or ExposureModel()
        self.mount = mount
        _camera_rays(K)  # warm the ray cache

    def render_state(self, sample: StateSample, frame_id: int = 0) -> ImageFrame:
        pose = camera_pose_at(sample, self.mount)
        return render_frame(self.K, pose, self.terrain, self.exposure,
                            t_us=sample.t_us, frame_id=frame_id)

    def frames(self, trajectory: list[StateSample], cfg: StreamConfig | None = None):
        """Yield LazyFrames at the stream rate, in timestamp order."""
        cfg = cfg or StreamConfig()
        stride_indices = _select_indices(trajectory, cfg.fps)
        for frame_id, idx in enumerate(stride_indices):
            sample = trajectory[idx]
            pose = camera_pose_at(sample, self.mount)
            yield LazyFrame(
                t_us=sample.t_us, width=self.K.width, height=self.K.height,
                frame_id=frame_id,
                render_fn=lambda p=pose, t=sample.t_us, f=frame_id: render_frame(
                    self.K, p, self.terrain, self.exposure, t_us=t, frame_id=f
                ).pixels,
            )


def _select_indices(trajectory: list[StateSample], fps: float) -> list[int]:
    if len(trajectory) < 2:
        return list(range(len(trajectory)))
    span_s = (trajectory[-1].t_us - trajectory[0].t_us) / 1e6
    rate = (len(trajectory) - 1) / span_s if span_s > 0 else fps
    if rate < fps - 1e-6:
        raise InvalidArgumentError(
            f"trajectory sample rate {rate:.2f} Hz below stream rate {fps} Hz"
        )
    count = int(round(span_s * fps)) + 1
    indices = [min(int(round(k * rate / fps)), len(trajectory) - 1) for k in range(count)]
    out = [indices[0]]
    for idx in indices[1:]:
        if idx != out[-1]:
            out.append(idx)
    return out


def stream_frames(frames, cfg: StreamConfig, sink) -> StreamStats:
    """Deliver frames to a sink, enforcing the processing-rate cap.

    With a cap, a virtual consumer is busy 1/cap seconds per frame; a
    frame arriving while it is busy replaces any queued frame (the older
    one is dropped). Delivery order is timestamp order.
    """
    stats = StreamStats()
    if cfg.processing_fps_cap is None:
        for frame in frames:
            stats.generated += 1
            sink(frame)
            stats.delivered += 1
        return stats

    period_us = 1e6 / cfg.processing_fps_cap
    busy_until = -np.inf
    queued = None
    for frame in frames:
        stats.generated += 1
        t = frame.t_us
        if queued is not None and busy_until <= t:
            sink(queued)
            stats.delivered += 1
            busy_until = busy_until + period_us
            queued = None
        if busy_until <= t and queued is None:
            sink(frame)
            stats.delivered += 1
            busy_until = t + period_us
        else:
            if queued is not None:
                stats.dropped += 1
            queued = frame
    if queued is not None:
        sink(queued)
        stats.delivered += 1
    return stats
