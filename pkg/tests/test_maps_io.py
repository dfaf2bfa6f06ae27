"""Normal/height conversion and raster file round-trips."""

from __future__ import annotations

import json

import numpy as np
import pytest
from scipy import ndimage

from matproc.maps_io import (
    decode_normal_map,
    divergence,
    encode_normal_map,
    height_from_normal,
    laplacian,
    load_material,
    load_material_ex,
    normal_from_height,
    poisson_residual,
    resample_channel,
    save_material,
    solve_poisson_neumann,
)
from matproc.model import MaterialMaps


def analytic_normals(hx, hy):
    n = np.dstack([-hx, -hy, np.ones_like(hx)])
    return n / np.linalg.norm(n, axis=2, keepdims=True)


def test_flat_normals_give_half_height():
    n = np.zeros((32, 32, 3))
    n[:, :, 2] = 1.0
    h = height_from_normal(n)
    assert np.allclose(h, 0.5)


def test_ramp_reconstructed_to_machine_precision():
    W = 64
    x = np.arange(W, dtype=float)[None, :].repeat(W, axis=0)
    slope = 0.03
    n = analytic_normals(np.full((W, W), slope), np.zeros((W, W)))
    h = height_from_normal(n)
    # affine fit against the true ramp, then compare
    A = np.stack([x.ravel(), np.ones(x.size)], axis=1)
    coef, *_ = np.linalg.lstsq(A, h.ravel(), rcond=None)
    fit = (A @ coef).reshape(W, W)
    assert np.abs(h - fit).max() < 1e-3


def test_sinusoid_reconstruction_correlates():
    W = 128
    x = np.arange(W, dtype=float)[None, :].repeat(W, axis=0)
    h_true = np.sin(2 * np.pi * x / W)
    hx = (2 * np.pi / W) * np.cos(2 * np.pi * x / W)
    h = height_from_normal(analytic_normals(hx, np.zeros_like(hx)))
    r = np.corrcoef(h.ravel(), h_true.ravel())[0, 1]
    assert r > 0.999


def test_poisson_residual_tiny_for_arbitrary_field():
    rng = np.random.default_rng(3)
    gx = rng.normal(size=(96, 80))
    gy = rng.normal(size=(96, 80))
    h = solve_poisson_neumann(gx, gy)
    # the solver satisfies its own normal equations to machine precision
    assert poisson_residual(h, gx, gy) < 1e-6
    assert abs(h.mean()) < 1e-9


def test_laplacian_is_divergence_of_gradient():
    rng = np.random.default_rng(4)
    h = rng.normal(size=(17, 23))
    gx = np.zeros_like(h)
    gx[:, :-1] = h[:, 1:] - h[:, :-1]
    gy = np.zeros_like(h)
    gy[:-1, :] = h[1:, :] - h[:-1, :]
    assert np.allclose(laplacian(h), divergence(gx, gy))


def test_flat_height_gives_up_normals():
    n = normal_from_height(np.full((16, 16), 0.37), amplitude=5.0)
    assert np.allclose(n[:, :, 2], 1.0)
    n = normal_from_height(np.random.default_rng(0).uniform(size=(16, 16)),
                           amplitude=0.0)
    assert np.allclose(n[:, :, 2], 1.0)


def test_height_normal_height_round_trip():
    rng = np.random.default_rng(7)
    h = ndimage.gaussian_filter(rng.normal(size=(128, 128)), 6.0)
    h = (h - h.min()) / (h.max() - h.min())
    n = normal_from_height(h, amplitude=20.0)
    h2 = height_from_normal(n)
    r = np.corrcoef(h.ravel(), h2.ravel())[0, 1]
    assert r > 0.99


def test_normal_decode_encode_round_trip_and_clamp():
    rng = np.random.default_rng(1)
    v = rng.normal(size=(24, 24, 3))
    v[:, :, 2] = np.abs(v[:, :, 2]) + 0.3
    v /= np.linalg.norm(v, axis=2, keepdims=True)
    for y_down in (False, True):
        dec = decode_normal_map(encode_normal_map(v, y_down), y_down)
        assert np.abs(np.linalg.norm(dec, axis=2) - 1).max() < 1e-3
        assert np.abs(dec - v).max() < 0.01
    # downward-facing normals get clamped, stay unit
    flipped = v.copy()
    flipped[:, :, 2] = -0.5
    flipped /= np.linalg.norm(flipped, axis=2, keepdims=True)
    dec = decode_normal_map(encode_normal_map(flipped))
    assert dec[:, :, 2].min() >= 0.05 - 1e-9
    assert np.abs(np.linalg.norm(dec, axis=2) - 1).max() < 1e-3


def random_maps(rng, shape=(24, 20)):
    return MaterialMaps(
        albedo=rng.uniform(size=(*shape, 3)),
        heightmap=rng.uniform(size=shape),
        roughness=rng.uniform(size=shape),
        extra_channels={"metallic": rng.uniform(size=shape)},
    )


def test_save_load_round_trip(tmp_path):
    maps = random_maps(np.random.default_rng(5))
    save_material(maps, tmp_path)
    back = load_material(tmp_path)
    assert np.abs(back.albedo - maps.albedo).max() < 1 / 255
    assert np.abs(back.heightmap - maps.heightmap).max() < 1 / 255
    assert np.abs(back.roughness - maps.roughness).max() < 1 / 255
    assert np.abs(back.extra_channels["metallic"]
                  - maps.extra_channels["metallic"]).max() < 1 / 255
    manifest = json.loads((tmp_path / "maps.json").read_text())
    assert manifest["channels"] == ["albedo", "height", "roughness", "metallic"]


def test_missing_roughness_filled_and_flagged(tmp_path):
    maps = random_maps(np.random.default_rng(6))
    save_material(maps, tmp_path)
    (tmp_path / "roughness.png").unlink()
    loaded = load_material_ex(tmp_path)
    assert "roughness" in loaded.filled_defaults
    assert np.allclose(loaded.maps.roughness, 0.5)


def test_size_mismatch_names_both_channels(tmp_path):
    maps = random_maps(np.random.default_rng(8))
    save_material(maps, tmp_path)
    save_material(random_maps(np.random.default_rng(8), shape=(12, 12)),
                  tmp_path / "small")
    (tmp_path / "roughness.png").unlink()
    (tmp_path / "small" / "roughness.png").rename(tmp_path / "roughness.png")
    with pytest.raises(IOError, match="roughness.*albedo"):
        load_material(tmp_path)


def test_normal_png_auto_converted(tmp_path):
    rng = np.random.default_rng(9)
    h = ndimage.gaussian_filter(rng.normal(size=(48, 48)), 4.0)
    h = (h - h.min()) / (h.max() - h.min())
    maps = MaterialMaps(albedo=rng.uniform(size=(48, 48, 3)), heightmap=h,
                        roughness=rng.uniform(size=(48, 48)))
    save_material(maps, tmp_path, height_amplitude=12.0, write_normal=True)
    (tmp_path / "height.png").unlink()
    loaded = load_material_ex(tmp_path)
    r = np.corrcoef(loaded.maps.heightmap.ravel(), h.ravel())[0, 1]
    assert r > 0.99
    assert loaded.height_amplitude > 0


def test_raw_float32_with_sidecar(tmp_path):
    rng = np.random.default_rng(10)
    alb = rng.uniform(size=(10, 14, 3)).astype(np.float32)
    alb.tofile(tmp_path / "albedo.raw")
    (tmp_path / "albedo.raw.json").write_text(
        json.dumps({"width": 14, "height": 10, "channels": 3}))
    loaded = load_material_ex(tmp_path)
    assert np.allclose(loaded.maps.albedo, alb, atol=1e-7)
    assert set(loaded.filled_defaults) == {"height", "roughness"}


def test_resample_channel_shapes_and_range():
    rng = np.random.default_rng(11)
    a = rng.uniform(size=(30, 20, 3))
    out = resample_channel(a, (64, 64))
    assert out.shape == (64, 64, 3)
    assert out.min() >= 0 and out.max() <= 1
    same = resample_channel(a, (30, 20))
    assert np.array_equal(same, a)
