"""Patch correspondence by integer SSD search with parabolic sub-pixel
refinement. Patches are 8x8, anchored so pixel (x, y) covers rows
y-3..y+4 and columns x-3..x+4.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import _kernels

PATCH = 8
_LO = 3  # patch extends -3..+4 around the anchor


@dataclass
class PatchTrack:
    index: int  # position in the input point list
    point: np.ndarray  # (2,) anchor in the previous image
    displacement: np.ndarray  # (2,) sub-pixel motion to the current image
    residual: float  # mean squared intensity difference at the match


def _parabolic_offset(sm: float, s0: float, sp: float) -> float:
    denom = sm - 2.0 * s0 + sp
    if denom <= 0:
        return 0.0
    d = 0.5 * (sm - sp) / denom
    return float(np.clip(d, -0.5, 0.5))


def track_patches(prev: np.ndarray, cur: np.ndarray, points, search_radius: int,
                  predicted=None, max_residual: float | None = None) -> list[PatchTrack]:
    """Match 8x8 patches from prev into cur around predicted locations.

    points: (N, 2) integer anchors with full patch support in prev.
    predicted: (N, 2) search centers in cur (defaults to the points).
    Matches with mean squared difference above max_residual are dropped.
    """
    prev = np.asarray(prev, dtype=np.uint8)
    cur = np.asarray(cur, dtype=np.uint8)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        return []
    centers = pts if predicted is None else np.atleast_2d(np.asarray(predicted, dtype=float))
    px = np.round(pts[:, 0]).astype(np.int64)
    py = np.round(pts[:, 1]).astype(np.int64)
    cx = np.round(centers[:, 0]).astype(np.int64)
    cy = np.round(centers[:, 1]).astype(np.int64)

    if _kernels.HAVE_NUMBA:
        raw = _kernels.ssd_search(prev, cur, px, py, cx, cy, int(search_radius))
    else:
        raw = _ssd_search_numpy(prev, cur, px, py, cx, cy, int(search_radius))

    out: list[PatchTrack] = []
    for i in range(len(pts)):
        ssd = raw[i, 2]
        if ssd < 0:
            continue
        residual = ssd / (PATCH * PATCH)
        if max_residual is not None and residual > max_residual:
            continue
        ddx = _parabolic_offset(raw[i, 3], ssd, raw[i, 4]) if raw[i, 3] >= 0 and raw[i, 4] >= 0 else 0.0
        ddy = _parabolic_offset(raw[i, 5], ssd, raw[i, 6]) if raw[i, 5] >= 0 and raw[i, 6] >= 0 else 0.0
        match = np.array([cx[i] + raw[i, 0] + ddx, cy[i] + raw[i, 1] + ddy])
        # displacement is the measured image shift of the patch content,
        # relative to the rounded anchor, so fractional motion accumulates
        # when callers advance float positions by it
        out.append(
            PatchTrack(
                index=i,
                point=pts[i].copy(),
                displacement=match - np.array([px[i], py[i]], dtype=float),
                residual=float(residual),
            )
        )
    return out


def _ssd_search_numpy(prev, cur, px, py, cx, cy, radius):
    """Reference implementation of the jitted SSD search."""
    n = len(px)
    h, w = cur.shape
    out = np.full((n, 7), -1.0)
    prev_f = prev.astype(float)
    cur_f = cur.astype(float)
    for i in range(n):
        x0, y0 = px[i] - _LO, py[i] - _LO
        if x0 < 0 or y0 < 0 or x0 + PATCH > prev.shape[1] or y0 + PATCH > prev.shape[0]:
            continue
        ref = prev_f[y0:y0 + PATCH, x0:x0 + PATCH]
        best, bdx, bdy = np.inf, 0, 0
        for dy in range(-radius, radius + 1):
            for dx in range(-radius, radius + 1):
                sx, sy = cx[i] + dx - _LO, cy[i] + dy - _LO
                if sx < 0 or sy < 0 or sx + PATCH > w or sy + PATCH > h:
                    continue
                d = ref - cur_f[sy:sy + PATCH, sx:sx + PATCH]
                ssd = float((d * d).sum())
                if ssd < best:
                    best, bdx, bdy = ssd, dx, dy
        if not np.isfinite(best):
            continue
        out[i, :3] = (bdx, bdy, best)
        for k, (ddx, ddy) in enumerate(((-1, 0), (1, 0), (0, -1), (0, 1))):
            sx, sy = cx[i] + bdx + ddx - _LO, cy[i] + bdy + ddy - _LO
            if sx < 0 or sy < 0 or sx + PATCH > w or sy + PATCH > h:
                continue
            d = ref - cur_f[sy:sy + PATCH, sx:sx + PATCH]
            out[i, 3 + k] = float((d * d).sum())
    return out
