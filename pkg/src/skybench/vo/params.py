"""Parameter and state types for the VO pipeline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError
from ..geometry import Pose


@dataclass
class DetectorParams:
    """Detection knobs shared by both feature front-ends.

    block_size_d / min_grad_add drive gradient-block candidate selection
    (defaults follow a 32 px block at 1280-wide imagery, scaled to the
    320-wide desk resolution). fast_threshold / cell_size drive per-cell
    FAST corner extraction.
    """

    block_size_d: int = 8
    min_grad_add: float = 7.0
    fast_threshold: float = 7.0
    cell_size: int = 32
    max_features: int = 250
    method: str = "gradient_blocks"  # or "fast_cells"

    def __post_init__(self):
        if self.block_size_d < 2:
            raise InvalidArgumentError("block_size_d must be >= 2")
        if self.min_grad_add < 0 or self.fast_threshold < 0:
            raise InvalidArgumentError("thresholds must be non-negative")
        if self.method not in ("gradient_blocks", "fast_cells"):
            raise InvalidArgumentError(f"unknown detector method '{self.method}'")


@dataclass
class KeyframePolicy:
    """When to promote a frame to keyframe.

    distance_based: fire when the camera has moved farther from every
    existing keyframe than min_dist_fraction of the average scene depth.
    view_change: fire when the tracked fraction of the reference
    keyframe's points drops below min_tracked_fraction, or the median
    pixel flow against the reference keyframe exceeds min_median_flow.
    """

    kind: str = "view_change"
    min_dist_fraction: float = 0.12
    min_tracked_fraction: float = 0.5
    min_median_flow: float = 40.0

    def __post_init__(self):
        if self.kind not in ("distance_based", "view_change"):
            raise InvalidArgumentError(f"unknown keyframe policy '{self.kind}'")
        if self.min_dist_fraction <= 0:
            raise InvalidArgumentError("min_dist_fraction must be positive")
        if not (0.0 < self.min_tracked_fraction <= 1.0):
            raise InvalidArgumentError("min_tracked_fraction must be in (0, 1]")
        if self.min_median_flow <= 0:
            raise InvalidArgumentError("min_median_flow must be positive")


@dataclass
class MapPoint:
    id: int
    position: np.ndarray  # (3,) pipeline-world
    host_keyframe: int
    observations: int = 2
    parallax_deg: float = 0.0


@dataclass
class TrackState:
    status: str = "initializing"  # initializing | tracking | lost
    pose: Pose = field(default_factory=Pose)  # world<-camera, pipeline frame
    velocity: Pose = field(default_factory=Pose)  # per-frame local delta
    reference_keyframe: int = -1
    avg_scene_depth: float = 1.0


@dataclass
class VOConfig:
    """Everything a session needs beyond the camera intrinsics."""

    detector: DetectorParams = field(default_factory=DetectorParams)
    policy: KeyframePolicy = field(default_factory=KeyframePolicy)
    window_size: int = 7
    seed: int = 0
    search_radius: int = 9
    patch_residual_max: float = 400.0  # mean squared intensity difference
    min_init_matches: int = 30
    init_min_flow_px: float = 2.0  # hard floor for the two-view solve
    init_target_flow_px: float = 6.0  # session waits for this much flow
    min_init_points: int = 20
    parallax_gate_deg: float = 1.0
    huber_px: float = 2.0
    min_inliers: int = 15
    max_mean_inlier_err_px: float = 3.0
    inlier_px: float = 4.0
    ransac_threshold_px: float = 1.5
    ransac_iterations: int = 500
    min_point_spacing_px: int = 10

    def __post_init__(self):
        if self.window_size < 2:
            raise InvalidArgumentError("window_size must be >= 2")
        if self.search_radius < 1:
            raise InvalidArgumentError("search_radius must be >= 1")
