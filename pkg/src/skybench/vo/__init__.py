"""Reference monocular visual-odometry pipeline with pluggable detection
and keyframe policies."""

from .params import DetectorParams, KeyframePolicy, MapPoint, TrackState, VOConfig
from .detect import detect_corners, select_candidate_pixels
from .patches import PatchTrack, track_patches
from .two_view import (
    TwoViewInit,
    decompose_homography,
    initialize_from_matches,
    initialize_two_view,
    ransac_homography,
    triangulate,
)
from .session import FrameStats, Keyframe, SessionResult, keyframe_decision, run_session
from .solvers import refine_pose, refine_window

__all__ = [
    "DetectorParams", "KeyframePolicy", "MapPoint", "TrackState", "VOConfig",
    "detect_corners", "select_candidate_pixels",
    "PatchTrack", "track_patches",
    "TwoViewInit", "decompose_homography", "initialize_from_matches",
    "initialize_two_view", "ransac_homography", "triangulate",
    "FrameStats", "Keyframe", "SessionResult", "keyframe_decision", "run_session",
    "refine_pose", "refine_window",
]
