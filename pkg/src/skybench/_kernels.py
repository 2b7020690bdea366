"""Numba-accelerated inner loops.

Optional: every kernel has a numpy reference implementation next to its
call site, and the jitted versions reproduce them bit-for-bit (same
per-element operation order, float64, no fastmath). Import failures
leave HAVE_NUMBA False and the package falls back to numpy.
"""

from __future__ import annotations

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


if HAVE_NUMBA:

    @numba.njit(cache=True, fastmath=False)
    def _mix64(h):
        h = (h ^ (h >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        h = (h ^ (h >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return h ^ (h >> np.uint64(31))

    @numba.njit(cache=True, fastmath=False)
    def value_noise(gx, gy, salts, wavelengths, amps, contrast):
        """Smoothed lattice value noise; mirrors TextureField._noise."""
        n = gx.shape[0]
        out = np.empty(n, dtype=np.float64)
        amp_sum = 0.0
        for o in range(len(amps)):
            amp_sum += amps[o]
        m1 = np.uint64(0x9E3779B97F4A7C15)
        m2 = np.uint64(0xC2B2AE3D27D4EB4F)
        inv = 2.0 ** -64
        for i in range(n):
            total = 0.0
            for o in range(len(amps)):
                x = gx[i] / wavelengths[o]
                y = gy[i] / wavelengths[o]
                x0 = np.floor(x)
                y0 = np.floor(y)
                tx = x - x0
                ty = y - y0
                sx = tx * tx * (3.0 - 2.0 * tx)
                sy = ty * ty * (3.0 - 2.0 * ty)
                ix = np.uint64(np.int64(x0))
                iy = np.uint64(np.int64(y0))
                salt = salts[o]
                mx0 = ix * m1
                mx1 = mx0 + m1
                my0 = iy * m2
                my1 = my0 + m2
                v00 = np.float64(_mix64(mx0 ^ my0 ^ salt)) * inv
                v10 = np.float64(_mix64(mx1 ^ my0 ^ salt)) * inv
                v01 = np.float64(_mix64(mx0 ^ my1 ^ salt)) * inv
                v11 = np.float64(_mix64(mx1 ^ my1 ^ salt)) * inv
                top = v00 + (v10 - v00) * sx
                bot = v01 + (v11 - v01) * sx
                total += amps[o] * (top + (bot - top) * sy)
            out[i] = 0.5 + (total / amp_sum - 0.5) * contrast
        return out

    @numba.njit(cache=True, fastmath=False)
    def raster_bilinear(gx, gy, raster, meters_per_texel, contrast):
        """Bilinear raster sampling; mirrors TextureField._sample_raster."""
        rows, cols = raster.shape
        n = gx.shape[0]
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            fx = gx[i] / meters_per_texel
            fy = gy[i] / meters_per_texel
            if fx < 0.0:
                fx = 0.0
            elif fx > cols - 1.0:
                fx = cols - 1.0
            if fy < 0.0:
                fy = 0.0
            elif fy > rows - 1.0:
                fy = rows - 1.0
            x0 = int(np.floor(fx))
            y0 = int(np.floor(fy))
            if x0 > cols - 2:
                x0 = max(cols - 2, 0)
            if y0 > rows - 2:
                y0 = max(rows - 2, 0)
            tx = fx - x0
            ty = fy - y0
            x1 = min(x0 + 1, cols - 1)
            y1 = min(y0 + 1, rows - 1)
            v = (
                raster[y0, x0] / 255.0 * (1 - tx) * (1 - ty)
                + raster[y0, x1] / 255.0 * tx * (1 - ty)
                + raster[y1, x0] / 255.0 * (1 - tx) * ty
                + raster[y1, x1] / 255.0 * tx * ty
            )
            out[i] = 0.5 + (v - 0.5) * contrast
        return out

    @numba.njit(cache=True, fastmath=False)
    def ssd_search(prev, cur, px, py, cx, cy, radius):
        """Integer SSD patch search.

        8x8 patches anchored at (px, py) in prev, searched around
        (cx, cy) in cur. Returns (best_dx, best_dy, best_ssd, s_xm,
        s_xp, s_ym, s_yp) per point for sub-pixel refinement; ssd is -1
        when the search window leaves the image.
        """
        n = px.shape[0]
        h, w = cur.shape
        out = np.full((n, 7), -1.0)
        for i in range(n):
            x0 = px[i] - 3
            y0 = py[i] - 3
            if x0 < 0 or y0 < 0 or x0 + 8 > prev.shape[1] or y0 + 8 > prev.shape[0]:
                continue
            best = np.inf
            bdx = 0
            bdy = 0
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    sx = cx[i] + dx - 3
                    sy = cy[i] + dy - 3
                    if sx < 0 or sy < 0 or sx + 8 > w or sy + 8 > h:
                        continue
                    acc = 0.0
                    for r in range(8):
                        for c in range(8):
                            d = np.float64(prev[y0 + r, x0 + c]) - np.float64(cur[sy + r, sx + c])
                            acc += d * d
                    if acc < best:
                        best = acc
                        bdx = dx
                        bdy = dy
            if best == np.inf:
                continue
            out[i, 0] = bdx
            out[i, 1] = bdy
            out[i, 2] = best
            # neighbors for parabolic refinement
            ddxs = (-1, 1, 0, 0)
            ddys = (0, 0, -1, 1)
            for k in range(4):
                sx = cx[i] + bdx + ddxs[k] - 3
                sy = cy[i] + bdy + ddys[k] - 3
                if sx < 0 or sy < 0 or sx + 8 > w or sy + 8 > h:
                    out[i, 3 + k] = -1.0
                    continue
                acc = 0.0
                for r in range(8):
                    for c in range(8):
                        d = np.float64(prev[y0 + r, x0 + c]) - np.float64(cur[sy + r, sx + c])
                        acc += d * d
                out[i, 3 + k] = acc
        return out
