import numpy as np
import pytest

from skybench.errors import InvalidArgumentError, ParseError
from skybench.terrain import (
    ExposureModel,
    Heightfield,
    TextureField,
    apply_exposure,
    height_at,
    intensity_at,
    load_heightfield,
    load_pgm,
    load_texture,
    save_heightfield,
    save_pgm,
    save_texture,
)

from oracles import oracle_bilinear


# ---------------------------------------------------------------------------
# heightfield
# ---------------------------------------------------------------------------


def test_flat_grid_everywhere_zero():
    h = Heightfield.flat(0.0)
    for x, y in [(0, 0), (5, -3), (1e4, 1e4)]:
        assert height_at(h, x, y) == 0.0


def test_bilinear_cell_center():
    h = Heightfield(elevations=np.array([[0.0, 0.0], [0.0, 4.0]]), spacing=1.0)
    assert height_at(h, 0.5, 0.5) == pytest.approx(1.0)
    assert height_at(h, 0.5, 0.5) == pytest.approx(oracle_bilinear(0, 0, 0, 4, 0.5, 0.5))


def test_bilinear_matches_oracle_random():
    rng = np.random.default_rng(0)
    grid = rng.uniform(0, 100, (6, 7))
    h = Heightfield(elevations=grid, spacing=2.5)
    for _ in range(200):
        x = rng.uniform(0, 6 * 2.5)
        y = rng.uniform(0, 5 * 2.5)
        gx, gy = x / 2.5, y / 2.5
        x0, y0 = min(int(gx), 5), min(int(gy), 4)
        want = oracle_bilinear(
            grid[y0, x0], grid[y0, x0 + 1], grid[y0 + 1, x0], grid[y0 + 1, x0 + 1],
            gx - x0, gy - y0,
        )
        assert height_at(h, x, y) == pytest.approx(want, rel=1e-12)


def test_out_of_grid_clamps_to_boundary():
    grid = np.array([[1.0, 2.0], [3.0, 4.0]])
    h = Heightfield(elevations=grid, spacing=10.0)
    assert height_at(h, -100, -100) == 1.0
    assert height_at(h, 1e5, -50) == 2.0
    assert height_at(h, 1e5, 1e5) == 4.0


def test_heightfield_validation():
    with pytest.raises(InvalidArgumentError):
        Heightfield(elevations=np.zeros((0, 2)), spacing=1.0)
    with pytest.raises(InvalidArgumentError):
        Heightfield(elevations=np.zeros((2, 2)), spacing=0.0)


# ---------------------------------------------------------------------------
# texture
# ---------------------------------------------------------------------------


def test_zero_contrast_is_uniform_half():
    t = TextureField(seed=4, contrast=0.0)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-1000, 1000, (100, 2))
    vals = intensity_at(t, pts[:, 0], pts[:, 1])
    np.testing.assert_allclose(vals, 0.5, atol=1e-12)


def test_procedural_determinism():
    t = TextureField(seed=99, contrast=0.8)
    assert intensity_at(t, 12.34, -56.7) == intensity_at(t, 12.34, -56.7)
    t2 = TextureField(seed=99, contrast=0.8)
    assert intensity_at(t, 12.34, -56.7) == intensity_at(t2, 12.34, -56.7)
    assert intensity_at(t, 12.34, -56.7) != intensity_at(TextureField(seed=100, contrast=0.8), 12.34, -56.7)


def test_procedural_codomain():
    t = TextureField(seed=5, contrast=1.0)
    rng = np.random.default_rng(2)
    v = intensity_at(t, rng.uniform(-1e5, 1e5, 100_000), rng.uniform(-1e5, 1e5, 100_000))
    assert v.min() >= 0.0 and v.max() <= 1.0


def test_raster_codomain():
    rng = np.random.default_rng(3)
    t = TextureField(mode="raster", raster=rng.integers(0, 256, (64, 64), dtype=np.uint8),
                     meters_per_texel=2.0)
    v = intensity_at(t, rng.uniform(-50, 200, 100_000), rng.uniform(-50, 200, 100_000))
    assert v.min() >= 0.0 and v.max() <= 1.0


def test_raster_texel_center_passthrough():
    raster = np.arange(16, dtype=np.uint8).reshape(4, 4) * 16
    t = TextureField(mode="raster", raster=raster, meters_per_texel=3.0)
    for ty in range(4):
        for tx in range(4):
            assert intensity_at(t, tx * 3.0, ty * 3.0) == pytest.approx(raster[ty, tx] / 255.0)


def test_procedural_lipschitz_continuity():
    t = TextureField(seed=17, contrast=0.9)
    bound = t.lipschitz_bound()
    rng = np.random.default_rng(6)
    eps = 0.01
    x = rng.uniform(-500, 500, 2000)
    y = rng.uniform(-500, 500, 2000)
    dx = np.abs(intensity_at(t, x + eps, y) - intensity_at(t, x, y))
    dy = np.abs(intensity_at(t, x, y + eps) - intensity_at(t, x, y))
    assert dx.max() <= bound * eps * (1 + 1e-9)
    assert dy.max() <= bound * eps * (1 + 1e-9)


def test_kernel_matches_numpy_reference():
    t = TextureField(seed=31, contrast=0.6)
    rng = np.random.default_rng(7)
    x = rng.uniform(-300, 300, 4096)
    y = rng.uniform(-300, 300, 4096)
    fast = intensity_at(t, x, y)  # large batch: jitted path when available
    slow = 0.5 + (t._noise(x, y) - 0.5) * t.contrast
    np.testing.assert_array_equal(fast, slow)


# ---------------------------------------------------------------------------
# exposure
# ---------------------------------------------------------------------------


def test_exposure_saturates_at_high_gain():
    assert apply_exposure(ExposureModel(gain=4.0), 0.5) == 255


def test_exposure_round_half_up():
    assert apply_exposure(ExposureModel(gain=1.0, offset=0.0), 0.5) == 128


def test_exposure_offset_floor():
    assert apply_exposure(ExposureModel(gain=1.0, offset=7.2), 0.0) == 7
    assert apply_exposure(ExposureModel(gain=1.0, offset=-5.0), 0.0) == 0


def test_exposure_monotone_exhaustive():
    e = ExposureModel(gain=1.7, offset=-12.0)
    levels = np.arange(256) / 255.0
    out = apply_exposure(e, levels)
    assert np.all(np.diff(out.astype(int)) >= 0)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def test_heightfield_roundtrip(tmp_path):
    grid = np.array([[0.0, 1.5], [2.25, -3.0]])
    h = Heightfield(elevations=grid, spacing=30.0)
    p = tmp_path / "test.hgt"
    save_heightfield(h, p)
    h2 = load_heightfield(p)
    assert h2.spacing == 30.0
    np.testing.assert_array_equal(h2.elevations, grid)


def test_heightfield_truncated_rejected(tmp_path):
    p = tmp_path / "bad.hgt"
    p.write_text("HGT 3 3 10.0\n1 2 3 4\n")
    with pytest.raises(ParseError):
        load_heightfield(p)


def test_heightfield_bad_header_rejected(tmp_path):
    p = tmp_path / "bad.hgt"
    p.write_text("HEIGHTS 2 2\n0 0 0 0\n")
    with pytest.raises(ParseError):
        load_heightfield(p)


def test_pgm_roundtrip_minimal(tmp_path):
    img = np.array([[0, 128], [255, 7]], dtype=np.uint8)
    p = tmp_path / "t.pgm"
    save_pgm(img, p)
    np.testing.assert_array_equal(load_pgm(p), img)


def test_pgm_truncated_reports_offset(tmp_path):
    p = tmp_path / "short.pgm"
    p.write_bytes(b"P5 4 4 255\nabc")
    with pytest.raises(ParseError) as ei:
        load_pgm(p)
    assert ei.value.offset is not None


def test_texture_sidecar_spacing(tmp_path):
    t = TextureField(mode="raster",
                     raster=np.zeros((2, 2), dtype=np.uint8), meters_per_texel=30.0)
    p = tmp_path / "tex.pgm"
    save_texture(t, p)
    t2 = load_texture(p)
    assert t2.meters_per_texel == 30.0
    assert t2.raster.shape == (2, 2)
