"""Deliberately naive reference implementations used to verify the package.

Everything here trades speed for obviousness: exhaustive scans, literal
rule transcriptions, closed-form hand formulas. Nothing imports from
skybench's optimized code paths.
"""

import math
import statistics

import numpy as np


def oracle_candidate_pixels(image, d, grad_add):
    """Literal per-block median/argmax gradient selection rule.

    Pass 1 over d-blocks with threshold median+add, empty blocks retried
    at 2d with add//2, then 4d with add//4. Gradient is the central
    difference magnitude, zero on the one-pixel border.
    """
    img = np.asarray(image, dtype=float)
    h, w = img.shape
    grad = np.zeros((h, w))
    for y in range(1, h - 1):
        for x in range(1, w - 1):
            gx = (img[y, x + 1] - img[y, x - 1]) / 2.0
            gy = (img[y + 1, x] - img[y - 1, x]) / 2.0
            grad[y, x] = math.sqrt(gx * gx + gy * gy)

    selected = []
    selected_set = set()

    def covered(bx0, by0, bs):
        for (sx, sy) in selected_set:
            if bx0 <= sx < bx0 + bs and by0 <= sy < by0 + bs:
                return True
        return False

    for block, add in ((d, grad_add), (2 * d, grad_add // 2), (4 * d, grad_add // 4)):
        for by in range(0, h, block):
            for bx in range(0, w, block):
                if covered(bx, by, block):
                    continue
                vals = []
                best = None
                for y in range(by, min(by + block, h)):
                    for x in range(bx, min(bx + block, w)):
                        vals.append(grad[y, x])
                        if best is None or grad[y, x] > grad[best[1], best[0]]:
                            best = (x, y)
                thresh = statistics.median(vals) + add
                if best is not None and grad[best[1], best[0]] > thresh:
                    if best not in selected_set:
                        selected.append(best)
                        selected_set.add(best)
    return selected


_FAST_CIRCLE = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]


def oracle_fast_segment(image, x, y, threshold, arc=9):
    """FAST segment test at one pixel: 16-point circle, contiguous arc."""
    img = np.asarray(image, dtype=float)
    c = img[y, x]
    flags = []
    for dx, dy in _FAST_CIRCLE:
        p = img[y + dy, x + dx]
        if p > c + threshold:
            flags.append(1)
        elif p < c - threshold:
            flags.append(-1)
        else:
            flags.append(0)
    doubled = flags + flags
    for kind in (1, -1):
        run = 0
        for f in doubled:
            run = run + 1 if f == kind else 0
            if run >= arc:
                return True
    return False


def oracle_shi_tomasi(image, x, y):
    """Min-eigenvalue corner score over a 3x3 window of central gradients."""
    img = np.asarray(image, dtype=float)
    a = b = c = 0.0
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            gx = (img[y + dy, x + dx + 1] - img[y + dy, x + dx - 1]) / 2.0
            gy = (img[y + dy + 1, x + dx] - img[y + dy - 1, x + dx]) / 2.0
            a += gx * gx
            b += gx * gy
            c += gy * gy
    return (a + c) / 2.0 - math.sqrt(((a - c) / 2.0) ** 2 + b * b)


def oracle_corners(image, cell_size, fast_threshold):
    """Per-cell best FAST corner by Shi-Tomasi score, brute force."""
    img = np.asarray(image, dtype=float)
    h, w = img.shape
    winners = {}
    for y in range(4, h - 4):
        for x in range(4, w - 4):
            if not oracle_fast_segment(img, x, y, fast_threshold):
                continue
            score = oracle_shi_tomasi(img, x, y)
            cell = (x // cell_size, y // cell_size)
            if cell not in winners or score > winners[cell][1]:
                winners[cell] = ((x, y), score)
    return {cell: pix for cell, (pix, _) in winners.items()}


def oracle_rmse(pos_errors, rot_errors_deg):
    """Two-pass naive accumulation of position/rotation RMSE."""
    n = len(pos_errors)
    acc = 0.0
    for e in pos_errors:
        acc += float(np.dot(e, e))
    pos = math.sqrt(acc / n)
    acc = 0.0
    for a in rot_errors_deg:
        acc += a * a
    rot = math.sqrt(acc / n)
    return pos, rot


def oracle_triangulate(origin_a, dir_a, origin_b, dir_b):
    """Midpoint of the common perpendicular between two rays.

    Returns (point, parallax_deg) or None for (near-)parallel rays.
    """
    da = np.asarray(dir_a, dtype=float)
    db = np.asarray(dir_b, dtype=float)
    da = da / np.linalg.norm(da)
    db = db / np.linalg.norm(db)
    oa = np.asarray(origin_a, dtype=float)
    ob = np.asarray(origin_b, dtype=float)
    cross = np.cross(da, db)
    denom = float(np.dot(cross, cross))
    if denom < 1e-16:
        return None
    w = ob - oa
    s = float(np.dot(np.cross(w, db), cross)) / denom
    t = float(np.dot(np.cross(w, da), cross)) / denom
    pa = oa + s * da
    pb = ob + t * db
    cosang = max(-1.0, min(1.0, float(np.dot(da, db))))
    return 0.5 * (pa + pb), math.degrees(math.acos(cosang))


def oracle_rotation_angle_deg(Ra, Rb):
    """Axis-angle extraction from the relative rotation matrix."""
    R = np.asarray(Ra, dtype=float).T @ np.asarray(Rb, dtype=float)
    cosang = (np.trace(R) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, cosang))))


def oracle_distort(k1, k2, p1, p2, xn, yn):
    """Direct evaluation of the radial-tangential polynomial."""
    r2 = xn * xn + yn * yn
    radial = 1 + k1 * r2 + k2 * r2 * r2
    xd = xn * radial + 2 * p1 * xn * yn + p2 * (r2 + 2 * xn * xn)
    yd = yn * radial + p1 * (r2 + 2 * yn * yn) + 2 * p2 * xn * yn
    return xd, yd


def oracle_meridian_arc_per_degree(lat_deg):
    """WGS-84 meridian arc length of one degree at a latitude."""
    a = 6378137.0
    f = 1.0 / 298.257223563
    e2 = f * (2 - f)
    s = math.sin(math.radians(lat_deg))
    rm = a * (1 - e2) / (1 - e2 * s * s) ** 1.5
    return rm * math.pi / 180.0


def oracle_bilinear(v00, v10, v01, v11, tx, ty):
    return (
        v00 * (1 - tx) * (1 - ty)
        + v10 * tx * (1 - ty)
        + v01 * (1 - tx) * ty
        + v11 * tx * ty
    )


def oracle_path_length(points):
    """Sum of consecutive 3-D distances."""
    pts = np.asarray(points, dtype=float)
    total = 0.0
    for i in range(1, len(pts)):
        total += float(np.linalg.norm(pts[i] - pts[i - 1]))
    return total


def oracle_homography_apply(H, pts):
    """Apply a homography to Nx2 points the long way."""
    out = []
    for x, y in np.asarray(pts, dtype=float):
        w = H[2, 0] * x + H[2, 1] * y + H[2, 2]
        out.append(
            [
                (H[0, 0] * x + H[0, 1] * y + H[0, 2]) / w,
                (H[1, 0] * x + H[1, 1] * y + H[1, 2]) / w,
            ]
        )
    return np.array(out)


def oracle_fd_jacobian(fn, x0, eps=1e-6):
    """Central finite-difference Jacobian of fn at x0."""
    x0 = np.asarray(x0, dtype=float)
    r0 = np.asarray(fn(x0))
    J = np.zeros((r0.size, x0.size))
    for j in range(x0.size):
        xp = x0.copy()
        xm = x0.copy()
        xp[j] += eps
        xm[j] -= eps
        J[:, j] = (np.asarray(fn(xp)) - np.asarray(fn(xm))) / (2 * eps)
    return J


def oracle_footprint_width(altitude, hfov_deg):
    """Horizontal ground footprint of a nadir camera."""
    return 2.0 * altitude * math.tan(math.radians(hfov_deg) / 2.0)
