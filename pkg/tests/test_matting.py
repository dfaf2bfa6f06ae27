"""Alpha matting: solver behavior, partition properties, spectrum ablation."""

from __future__ import annotations

import numpy as np
import pytest

from matproc.matting import (
    MattingConfig,
    PixelFeatures,
    UNLABELED,
    binarize_alphas,
    build_features,
    knn_matting,
    load_scribbles,
    rematte_subregion,
    save_scribbles,
)
from matproc.model import MaterialMaps


def flat_maps(albedo, shape=(64, 64)):
    a = np.zeros((*shape, 3))
    a[:] = albedo
    return MaterialMaps(albedo=a, heightmap=np.full(shape, 0.5),
                        roughness=np.full(shape, 0.5))


def two_color_maps(shape=(64, 64), noise=0.01, seed=0):
    rng = np.random.default_rng(seed)
    maps = flat_maps((0.0, 0.0, 0.0), shape)
    half = shape[1] // 2
    maps.albedo[:, :half] = (0.85, 0.15, 0.15)
    maps.albedo[:, half:] = (0.15, 0.15, 0.85)
    maps.albedo[:] = np.clip(
        maps.albedo + rng.normal(scale=noise, size=maps.albedo.shape), 0, 1)
    scrib = np.full(shape, UNLABELED, dtype=np.int32)
    scrib[30:34, 12:16] = 0
    scrib[30:34, 48:52] = 1
    truth = np.zeros(shape, dtype=int)
    truth[:, half:] = 1
    return maps, scrib, truth


def stripe_maps(shape=(128, 128), f_hi=32, f_lo=4):
    """Equal-mean gray stripes; quadrants differ only in frequency.

    Diagonal quadrants share a class, so position cannot separate them.
    """
    hgt, wid = shape
    y = np.arange(hgt)[:, None].repeat(wid, axis=1)
    hi = 0.5 + 0.25 * np.sin(2 * np.pi * f_hi * y / hgt)
    lo = 0.5 + 0.25 * np.sin(2 * np.pi * f_lo * y / hgt)
    img = np.zeros(shape)
    h2, w2 = hgt // 2, wid // 2
    img[:h2, :w2] = hi[:h2, :w2]
    img[h2:, w2:] = hi[h2:, w2:]
    img[:h2, w2:] = lo[:h2, w2:]
    img[h2:, :w2] = lo[h2:, :w2]
    maps = flat_maps((0, 0, 0), shape)
    maps.albedo[:] = img[:, :, None]
    # stroke-style scribbles inside the top two quadrants
    scrib = np.full(shape, UNLABELED, dtype=np.int32)
    scrib[h2 // 2 - 1 : h2 // 2 + 2, w2 // 5 : w2 - w2 // 5] = 0
    scrib[h2 // 2 - 1 : h2 // 2 + 2, w2 + w2 // 5 : wid - w2 // 5] = 1
    truth = np.zeros(shape, dtype=int)
    truth[:h2, w2:] = 1
    truth[h2:, :w2] = 1
    return maps, scrib, truth


def test_two_separated_colors_give_indicator_alphas():
    maps, scrib, truth = two_color_maps()
    feats = build_features(maps, None)
    alphas = knn_matting(feats, scrib)
    near_binary = np.minimum(np.abs(alphas[0] - 0), np.abs(alphas[0] - 1)) < 0.05
    assert near_binary.mean() >= 0.99
    masks = binarize_alphas(alphas)
    acc = (masks[1] == (truth == 1)).mean()
    assert acc >= 0.99
    # scribbled pixels are pinned hard by the constraint term
    assert alphas[0][scrib == 0].min() >= 0.99
    assert alphas[1][scrib == 1].min() >= 0.99


def test_alphas_partition_of_unity_and_outside_zero():
    maps, scrib, _ = two_color_maps()
    parent = np.zeros((64, 64), bool)
    parent[:, 8:56] = True
    feats = build_features(maps, None)
    alphas = knn_matting(feats, scrib, parent)
    total = alphas.sum(axis=0)
    assert np.abs(total[parent] - 1).max() < 1e-6
    assert np.abs(alphas[:, ~parent]).max() == 0
    assert alphas.min() >= 0 and alphas.max() <= 1 + 1e-12


def test_identical_features_give_uniform_alphas():
    maps = flat_maps((0.5, 0.5, 0.5))
    scrib = np.full((64, 64), UNLABELED, dtype=np.int32)
    scrib[2, 2] = 0
    scrib[60, 60] = 1
    cfg = MattingConfig(w_xy=(0.0, 0.0))  # no positional variation either
    feats = build_features(maps, None, cfg)
    alphas = knn_matting(feats, scrib)
    far = np.full((64, 64), True)
    far[:6, :6] = far[-6:, -6:] = False
    assert np.abs(alphas[0][far] - 0.5).max() < 0.05


def test_missing_layer_scribbles_raises():
    maps, scrib, _ = two_color_maps()
    scrib[scrib == 1] = UNLABELED
    scrib[0, 0] = 2  # layer 1 now empty
    feats = build_features(maps, None)
    with pytest.raises(ValueError, match="layer 1"):
        knn_matting(feats, scrib)


def test_binarize_argmax_tiebreak_and_partition():
    alphas = np.stack([np.full((8, 8), 0.5), np.full((8, 8), 0.5)])
    masks = binarize_alphas(alphas)
    assert masks[0].all() and not masks[1].any()
    rng = np.random.default_rng(0)
    a = rng.uniform(size=(4, 16, 16))
    a /= a.sum(axis=0)
    parent = rng.uniform(size=(16, 16)) > 0.3
    masks = binarize_alphas(a, parent)
    stack = np.stack(masks)
    assert (stack.sum(axis=0) == parent).all()


def test_rematte_excluded_pixels_zero_and_scribble_guard():
    maps, scrib, _ = two_color_maps()
    parent = np.zeros((64, 64), bool)
    parent[:, :56] = True
    scrib2 = scrib.copy()
    scrib2[:, 56:] = UNLABELED
    alphas, masks = rematte_subregion(maps, parent, scrib2,
                                      MattingConfig(use_spectrum=False))
    assert np.abs(alphas[:, ~parent]).max() == 0
    assert (np.stack(masks).sum(axis=0) == parent).all()
    with pytest.raises(ValueError, match="outside"):
        rematte_subregion(maps, ~parent, scrib2)


def test_spectrum_features_separate_equal_color_stripes():
    maps, scrib, truth = stripe_maps()
    with_cfg = MattingConfig(use_spectrum=True)
    without_cfg = MattingConfig(use_spectrum=False)
    accs = {}
    for name, cfg in [("with", with_cfg), ("without", without_cfg)]:
        _, masks = rematte_subregion(maps, None, scrib, cfg)
        accs[name] = (masks[1] == (truth == 1)).mean()
    assert accs["with"] - accs["without"] >= 0.20
    assert accs["with"] > 0.8


def test_build_features_weighting_and_translation():
    maps, _, _ = two_color_maps(noise=0.0)
    cfg = MattingConfig(w_color=2.0, w_height=0.0, w_roughness=0.0,
                        w_xy=(0.0,), use_spectrum=False)
    feats = build_features(maps, None, cfg)
    arr = feats.variants[0]
    assert np.allclose(arr[:, :, :3], 2.0 * maps.albedo)
    assert np.abs(arr[:, :, 3:]).max() == 0
    # zero spatial weight -> translation invariant features
    rolled = MaterialMaps(albedo=np.roll(maps.albedo, 7, axis=1),
                          heightmap=maps.heightmap, roughness=maps.roughness)
    feats2 = build_features(rolled, None, cfg)
    assert np.allclose(np.roll(arr, 7, axis=1), feats2.variants[0])


def test_scribble_png_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    labels = rng.integers(-1, 3, size=(32, 32)).astype(np.int32)
    save_scribbles(labels, tmp_path / "s.png")
    back = load_scribbles(tmp_path / "s.png")
    assert np.array_equal(back, labels)
