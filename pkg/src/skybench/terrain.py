"""Ground model: heightfield elevation, texture intensity, sensor exposure.

The texture is either a procedural value-noise field or a raster grid.
Procedural noise is lattice hash noise: every octave draws pseudo-random
lattice values from a splitmix64-style integer hash of (seed, octave,
cell), smoothstep-blended bilinearly, so the field is an exact
deterministic function of (seed, x, y) on every platform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, ParseError

# ---------------------------------------------------------------------------
# Heightfield
# ---------------------------------------------------------------------------


@dataclass
class Heightfield:
    """Row-major elevation grid; queries clamp to the boundary."""

    elevations: np.ndarray  # (rows, cols) meters
    spacing: float  # meters between grid nodes
    origin: np.ndarray = None  # (2,) world position of node (0, 0)

    def __post_init__(self):
        self.elevations = np.asarray(self.elevations, dtype=float)
        if self.elevations.ndim != 2 or self.elevations.size == 0:
            raise InvalidArgumentError("elevation grid must be a non-empty 2-D array")
        if self.spacing <= 0:
            raise InvalidArgumentError("grid spacing must be positive")
        self.origin = np.zeros(2) if self.origin is None else np.asarray(self.origin, dtype=float)

    @classmethod
    def flat(cls, elevation: float = 0.0, spacing: float = 30.0) -> "Heightfield":
        return cls(elevations=np.full((2, 2), float(elevation)), spacing=spacing)

    def is_flat(self) -> bool:
        return bool(np.ptp(self.elevations) == 0.0)

    def height_at(self, x, y):
        """Bilinear elevation sample at world (x, y); scalar or arrays."""
        gx = (np.asarray(x, dtype=float) - self.origin[0]) / self.spacing
        gy = (np.asarray(y, dtype=float) - self.origin[1]) / self.spacing
        rows, cols = self.elevations.shape
        gx = np.clip(gx, 0.0, cols - 1.0)
        gy = np.clip(gy, 0.0, rows - 1.0)
        x0 = np.clip(np.floor(gx).astype(int), 0, cols - 2) if cols > 1 else np.zeros_like(gx, int)
        y0 = np.clip(np.floor(gy).astype(int), 0, rows - 2) if rows > 1 else np.zeros_like(gy, int)
        tx = gx - x0
        ty = gy - y0
        e = self.elevations
        x1 = np.minimum(x0 + 1, cols - 1)
        y1 = np.minimum(y0 + 1, rows - 1)
        v = (
            e[y0, x0] * (1 - tx) * (1 - ty)
            + e[y0, x1] * tx * (1 - ty)
            + e[y1, x0] * (1 - tx) * ty
            + e[y1, x1] * tx * ty
        )
        return float(v) if np.isscalar(x) or np.asarray(x).ndim == 0 else v

    def min_elevation(self) -> float:
        return float(self.elevations.min())

    def max_elevation(self) -> float:
        return float(self.elevations.max())


def height_at(h: Heightfield, x, y):
    return h.height_at(x, y)


# ---------------------------------------------------------------------------
# Deterministic lattice noise
# ---------------------------------------------------------------------------

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xC2B2AE3D27D4EB4F)
_F1 = np.uint64(0xBF58476D1CE4E5B9)
_F2 = np.uint64(0x94D049BB133111EB)


def _mix64(h):
    """splitmix64 finalizer over uint64 arrays; wraparound is intended."""
    h = np.asarray(h, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = (h ^ (h >> np.uint64(30))) * _F1
        h = (h ^ (h >> np.uint64(27))) * _F2
    return h ^ (h >> np.uint64(31))


def lattice_hash01(ix, iy, salt: int):
    """Hash integer lattice coordinates to floats in [0, 1)."""
    ix = np.asarray(ix, dtype=np.int64).astype(np.uint64)
    iy = np.asarray(iy, dtype=np.int64).astype(np.uint64)
    with np.errstate(over="ignore"):
        h = _mix64(ix * _M1 ^ iy * _M2 ^ np.uint64(salt & 0xFFFFFFFFFFFFFFFF))
    return h.astype(np.float64) * 2.0 ** -64


def _octave_salt(seed: int, octave: int) -> int:
    raw = ((seed & 0xFFFFFFFF) * 0x100000001 + octave + 1) & 0xFFFFFFFFFFFFFFFF
    return int(_mix64(np.uint64(raw)))


# ---------------------------------------------------------------------------
# Texture
# ---------------------------------------------------------------------------


@dataclass
class TextureField:
    """Ground intensity in [0, 1]: procedural value noise or a raster grid."""

    mode: str = "procedural"  # "procedural" | "raster"
    seed: int = 0
    octaves: int = 4
    base_wavelength: float = 60.0  # meters; halves per octave
    contrast: float = 1.0  # 0 = uniform 0.5, 1 = full range
    raster: np.ndarray = None  # (rows, cols) uint8 for raster mode
    meters_per_texel: float = 1.0

    def __post_init__(self):
        if self.mode not in ("procedural", "raster"):
            raise InvalidArgumentError(f"unknown texture mode '{self.mode}'")
        if not (0.0 <= self.contrast <= 1.0):
            raise InvalidArgumentError("contrast must be in [0, 1]")
        if self.mode == "procedural":
            if self.octaves < 1 or self.base_wavelength <= 0:
                raise InvalidArgumentError("procedural texture needs octaves >= 1, wavelength > 0")
        else:
            self.raster = np.asarray(self.raster)
            if self.raster is None or self.raster.ndim != 2 or self.raster.size == 0:
                raise InvalidArgumentError("raster texture needs a non-empty 2-D grid")
            if self.meters_per_texel <= 0:
                raise InvalidArgumentError("meters_per_texel must be positive")

    def intensity_at(self, x, y):
        """Intensity in [0, 1] at world (x, y); scalar or arrays."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        fast = self._fast_path(x, y)
        if fast is not None:
            return fast
        if self.mode == "procedural":
            v = self._noise(x, y)
        else:
            v = self._sample_raster(x, y)
        v = 0.5 + (v - 0.5) * self.contrast
        return float(v) if v.ndim == 0 else v

    def _fast_path(self, x, y):
        """Jitted sampler for large batches; bit-identical to the numpy path."""
        from . import _kernels

        if not _kernels.HAVE_NUMBA or x.ndim == 0 or x.size < 1024 or x.shape != y.shape:
            return None
        shape = x.shape
        xf = np.ascontiguousarray(x.reshape(-1))
        yf = np.ascontiguousarray(y.reshape(-1))
        if self.mode == "procedural":
            salts = np.array(
                [_octave_salt(self.seed, o) for o in range(self.octaves)], dtype=np.uint64
            )
            wavelengths = self.base_wavelength * 0.5 ** np.arange(self.octaves, dtype=float)
            amps = 0.5 ** np.arange(self.octaves, dtype=float)
            out = _kernels.value_noise(xf, yf, salts, wavelengths, amps, self.contrast)
        else:
            out = _kernels.raster_bilinear(
                xf, yf, self.raster, float(self.meters_per_texel), self.contrast
            )
        return out.reshape(shape)

    def _noise(self, x, y):
        total = np.zeros(np.broadcast(x, y).shape)
        amp_sum = 0.0
        amp = 1.0
        wavelength = self.base_wavelength
        for octave in range(self.octaves):
            salt = _octave_salt(self.seed, octave)
            gx = x / wavelength
            gy = y / wavelength
            x0 = np.floor(gx)
            y0 = np.floor(gy)
            tx = gx - x0
            ty = gy - y0
            # smoothstep weights keep the field C1 across cell boundaries
            sx = tx * tx * (3.0 - 2.0 * tx)
            sy = ty * ty * (3.0 - 2.0 * ty)
            ix = x0.astype(np.int64)
            iy = y0.astype(np.int64)
            v00 = lattice_hash01(ix, iy, salt)
            v10 = lattice_hash01(ix + 1, iy, salt)
            v01 = lattice_hash01(ix, iy + 1, salt)
            v11 = lattice_hash01(ix + 1, iy + 1, salt)
            top = v00 + (v10 - v00) * sx
            bot = v01 + (v11 - v01) * sx
            total = total + amp * (top + (bot - top) * sy)
            amp_sum += amp
            amp *= 0.5
            wavelength *= 0.5
        return total / amp_sum

    def _sample_raster(self, x, y):
        rows, cols = self.raster.shape
        gx = np.clip(x / self.meters_per_texel, 0.0, cols - 1.0)
        gy = np.clip(y / self.meters_per_texel, 0.0, rows - 1.0)
        x0 = np.clip(np.floor(gx).astype(int), 0, max(cols - 2, 0))
        y0 = np.clip(np.floor(gy).astype(int), 0, max(rows - 2, 0))
        tx = gx - x0
        ty = gy - y0
        r = self.raster.astype(float) / 255.0
        x1 = np.minimum(x0 + 1, cols - 1)
        y1 = np.minimum(y0 + 1, rows - 1)
        return (
            r[y0, x0] * (1 - tx) * (1 - ty)
            + r[y0, x1] * tx * (1 - ty)
            + r[y1, x0] * (1 - tx) * ty
            + r[y1, x1] * tx * ty
        )

    def lipschitz_bound(self) -> float:
        """Upper bound on |d intensity / d position| for procedural mode."""
        if self.mode != "procedural":
            raise InvalidArgumentError("lipschitz bound defined for procedural mode only")
        amp, amp_sum, wavelength, total = 1.0, 0.0, self.base_wavelength, 0.0
        for _ in range(self.octaves):
            total += amp * 1.5 / wavelength  # max smoothstep slope 1.5, value range 1
            amp_sum += amp
            amp *= 0.5
            wavelength *= 0.5
        return self.contrast * total / amp_sum


def intensity_at(t: TextureField, x, y):
    return t.intensity_at(x, y)


# ---------------------------------------------------------------------------
# Exposure
# ---------------------------------------------------------------------------


@dataclass
class ExposureModel:
    """Linear sensor response with an 8-bit full-well clamp."""

    gain: float = 1.0
    offset: float = 0.0

    def apply(self, intensity):
        v = np.floor(self.gain * np.asarray(intensity, dtype=float) * 255.0 + self.offset + 0.5)
        out = np.clip(v, 0.0, 255.0).astype(np.uint8)
        return int(out) if out.ndim == 0 else out


def apply_exposure(e: ExposureModel, intensity):
    return e.apply(intensity)


@dataclass
class Terrain:
    """Heightfield + texture bundle consumed by the renderer."""

    heightfield: Heightfield
    texture: TextureField

    @classmethod
    def flat_procedural(cls, elevation: float = 0.0, seed: int = 0,
                        contrast: float = 1.0, base_wavelength: float = 60.0,
                        octaves: int = 4) -> "Terrain":
        return cls(
            heightfield=Heightfield.flat(elevation),
            texture=TextureField(
                seed=seed, contrast=contrast,
                base_wavelength=base_wavelength, octaves=octaves,
            ),
        )


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------
#
# Heightfield: text, line 1 'HGT <cols> <rows> <spacing_m>', then row-major
# whitespace-separated float elevations.
# Texture raster: binary PGM (P5, maxval 255) with a sidecar text file
# '<path>.meta' containing 'meters_per_texel=<float>'.


def load_heightfield(path) -> Heightfield:
    with open(path, "rb") as f:
        data = f.read()
    try:
        newline = data.index(b"\n")
    except ValueError:
        raise ParseError("heightfield missing header line", offset=0)
    header = data[:newline].split()
    if len(header) != 4 or header[0] != b"HGT":
        raise ParseError("heightfield header must be 'HGT <cols> <rows> <spacing_m>'", offset=0)
    try:
        cols, rows = int(header[1]), int(header[2])
        spacing = float(header[3])
    except ValueError:
        raise ParseError("malformed heightfield header fields", offset=4)
    body = data[newline + 1:]
    values = body.split()
    if len(values) < rows * cols:
        raise ParseError(
            f"expected {rows * cols} elevations, found {len(values)}", offset=newline + 1
        )
    try:
        grid = np.array([float(v) for v in values[: rows * cols]]).reshape(rows, cols)
    except ValueError:
        raise ParseError("non-numeric elevation value", offset=newline + 1)
    return Heightfield(elevations=grid, spacing=spacing)


def save_heightfield(h: Heightfield, path) -> None:
    rows, cols = h.elevations.shape
    with open(path, "w") as f:
        f.write(f"HGT {cols} {rows} {h.spacing!r}\n")
        for row in h.elevations:
            f.write(" ".join(repr(float(v)) for v in row) + "\n")


def _read_pgm_token(data: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(data) and data[pos:pos + 1].isspace():
        pos += 1
    if pos < len(data) and data[pos:pos + 1] == b"#":  # comment to end of line
        while pos < len(data) and data[pos] != 0x0A:
            pos += 1
        return _read_pgm_token(data, pos)
    start = pos
    while pos < len(data) and not data[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of PGM header", offset=start)
    return data[start:pos], pos


def load_pgm(path) -> np.ndarray:
    """Binary PGM (P5, maxval 255) to a (rows, cols) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    magic, pos = _read_pgm_token(data, 0)
    if magic != b"P5":
        raise ParseError(f"not a binary PGM (magic {magic!r})", offset=0)
    fields = []
    for _ in range(3):
        tok, pos = _read_pgm_token(data, pos)
        fields.append(tok)
    try:
        width, height, maxval = (int(t) for t in fields)
    except ValueError:
        raise ParseError("non-numeric PGM header field", offset=pos)
    if maxval != 255:
        raise ParseError(f"unsupported PGM maxval {maxval}", offset=pos)
    pos += 1  # single whitespace byte after maxval
    expected = width * height
    if len(data) - pos < expected:
        raise ParseError(
            f"PGM payload truncated: need {expected} bytes, have {len(data) - pos}",
            offset=pos,
        )
    return np.frombuffer(data[pos:pos + expected], dtype=np.uint8).reshape(height, width)


def save_pgm(pixels: np.ndarray, path) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    rows, cols = pixels.shape
    with open(path, "wb") as f:
        f.write(f"P5 {cols} {rows} 255\n".encode())
        f.write(pixels.tobytes())


def load_texture(path) -> TextureField:
    """Raster texture from a PGM plus its '<path>.meta' sidecar."""
    raster = load_pgm(path)
    meta_path = str(path) + ".meta"
    meters_per_texel = 1.0
    try:
        with open(meta_path) as f:
            for line in f:
                line = line.strip()
                if line.startswith("meters_per_texel="):
                    meters_per_texel = float(line.split("=", 1)[1])
    except FileNotFoundError:
        pass
    return TextureField(mode="raster", raster=raster, meters_per_texel=meters_per_texel)


def save_texture(t: TextureField, path) -> None:
    if t.mode != "raster":
        raise InvalidArgumentError("only raster textures can be saved")
    save_pgm(t.raster, path)
    with open(str(path) + ".meta", "w") as f:
        f.write(f"meters_per_texel={t.meters_per_texel!r}\n")
