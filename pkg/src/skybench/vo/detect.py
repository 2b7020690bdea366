"""Feature detection front-ends.

select_candidate_pixels: region-adaptive gradient thresholding over
d-blocks (median gradient + additive margin), with 2d and 4d retry
passes at halved/quartered margins for blocks left empty.

detect_corners: FAST segment-test corners, keeping the single corner
with the best Shi-Tomasi min-eigenvalue score per grid cell.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import InvalidArgumentError

# 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
FAST_CIRCLE = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]
FAST_ARC = 9
_MARGIN = 4  # circle radius 3 plus one for the score window gradients


def gradient_magnitude(image: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude; zero on the 1 px border."""
    img = np.asarray(image, dtype=float)
    g = np.zeros_like(img)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) / 2.0
    gy[1:-1, :] = (img[2:, :] - img[:-2, :]) / 2.0
    # sqrt of exact dyadic sums: bit-reproducible across implementations
    g[1:-1, 1:-1] = np.sqrt(gx[1:-1, 1:-1] ** 2 + gy[1:-1, 1:-1] ** 2)
    return g


def select_candidate_pixels(image: np.ndarray, block_size_d: int,
                            grad_add: float) -> list[tuple[int, int]]:
    """Per-block max-gradient pixels above a median-adaptive threshold.

    Returns (x, y) tuples in pass order (d blocks row-major, then 2d,
    then 4d retries over still-empty regions).
    """
    img = np.asarray(image)
    h, w = img.shape
    if h < 4 * block_size_d or w < 4 * block_size_d:
        raise InvalidArgumentError("image smaller than 4x the block size")
    grad = gradient_magnitude(img)
    occupied = np.zeros((h, w), dtype=bool)
    selected: list[tuple[int, int]] = []

    for block, add in (
        (block_size_d, grad_add),
        (2 * block_size_d, math.floor(grad_add / 2)),
        (4 * block_size_d, math.floor(grad_add / 4)),
    ):
        for by in range(0, h, block):
            for bx in range(0, w, block):
                tile_occ = occupied[by:by + block, bx:bx + block]
                if tile_occ.any():
                    continue
                tile = grad[by:by + block, bx:bx + block]
                thresh = np.median(tile) + add
                flat = int(np.argmax(tile))
                yy, xx = divmod(flat, tile.shape[1])
                if tile[yy, xx] > thresh:
                    occupied[by + yy, bx + xx] = True
                    selected.append((bx + xx, by + yy))
    return selected


def shi_tomasi_scores(image: np.ndarray) -> np.ndarray:
    """Min-eigenvalue corner response over a 3x3 gradient window."""
    img = np.asarray(image, dtype=float)
    gx = np.zeros_like(img)
    gy = np.zeros_like(img)
    gx[:, 1:-1] = (img[:, 2:] - img[:, :-2]) / 2.0
    gy[1:-1, :] = (img[2:, :] - img[:-2, :]) / 2.0
    a = _box3(gx * gx)
    b = _box3(gx * gy)
    c = _box3(gy * gy)
    return (a + c) / 2.0 - np.sqrt(((a - c) / 2.0) ** 2 + b * b)


def _box3(m: np.ndarray) -> np.ndarray:
    out = np.zeros_like(m)
    acc = np.zeros_like(m)
    acc[1:-1, :] = m[:-2, :] + m[1:-1, :] + m[2:, :]
    out[:, 1:-1] = acc[:, :-2] + acc[:, 1:-1] + acc[:, 2:]
    return out


def fast_corner_mask(image: np.ndarray, threshold: float) -> np.ndarray:
    """Segment-test mask: >= 9 contiguous circle pixels brighter or
    darker than center +/- threshold. False inside the 4 px margin."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape
    m = _MARGIN
    c = img[m:h - m, m:w - m]
    bright = np.zeros((16,) + c.shape, dtype=bool)
    dark = np.zeros_like(bright)
    for k, (dx, dy) in enumerate(FAST_CIRCLE):
        p = img[m + dy:h - m + dy, m + dx:w - m + dx]
        bright[k] = p > c + threshold
        dark[k] = p < c - threshold
    mask_inner = _circular_run(bright) | _circular_run(dark)
    mask = np.zeros((h, w), dtype=bool)
    mask[m:h - m, m:w - m] = mask_inner
    return mask


def _circular_run(flags: np.ndarray) -> np.ndarray:
    """True where a circular sequence of 16 booleans has a run >= FAST_ARC."""
    run = np.zeros(flags.shape[1:], dtype=np.int32)
    best = np.zeros_like(run)
    for k in list(range(16)) + list(range(16)):
        run = np.where(flags[k], run + 1, 0)
        best = np.maximum(best, run)
    return best >= FAST_ARC


def detect_corners(image: np.ndarray, cell_size: int,
                   fast_threshold: float) -> list[tuple[tuple[int, int], float]]:
    """Best FAST corner per cell by Shi-Tomasi score.

    Returns ((x, y), score) tuples; at most one corner per cell.
    """
    img = np.asarray(image)
    h, w = img.shape
    if h <= cell_size and w <= cell_size:
        raise InvalidArgumentError("image must be larger than one cell")
    mask = fast_corner_mask(img, fast_threshold)
    if not mask.any():
        return []
    scores = shi_tomasi_scores(img)
    ys, xs = np.nonzero(mask)  # row-major order matches first-wins ties
    winners: dict[tuple[int, int], tuple[tuple[int, int], float]] = {}
    for x, y in zip(xs, ys):
        s = scores[y, x]
        cell = (int(x) // cell_size, int(y) // cell_size)
        if cell not in winners or s > winners[cell][1]:
            winners[cell] = ((int(x), int(y)), float(s))
    return list(winners.values())
