"""Feature bank: frozen filters, Gram statistics, LBP, binned spectrum."""

import numpy as np

from matproc.featurebank import (
    LBP_BINS,
    activations,
    bank_filters,
    gram_vector,
    lbp_histogram,
    spectrum_bins,
    _uniform_code_map,
)
from matproc.utils import rng_for


def test_filters_frozen_and_deterministic():
    s1a, s2a = bank_filters()
    bank_filters.cache_clear()
    s1b, s2b = bank_filters()
    np.testing.assert_array_equal(s1a, s1b)
    np.testing.assert_array_equal(s2a, s2b)
    assert s1a.shape == (16, 1, 5, 5)
    assert s2a.shape == (16, 16, 5, 5)


def test_activation_shapes():
    img = np.zeros((128, 128))
    a1, a2 = activations(img)
    assert a1.shape == (64, 64, 16)
    assert a2.shape == (32, 32, 16)
    assert (a1 >= 0).all() and (a2 >= 0).all()  # rectified


def test_gram_separates_flat_levels():
    g0 = gram_vector(np.zeros((64, 64)))
    g1 = gram_vector(np.ones((64, 64)))
    assert np.linalg.norm(g1 - g0) > 1e-3


def test_gram_translation_insensitive():
    rng = rng_for(5, "fb-shift")
    base = rng.random((64, 64))
    # wrap-periodic texture: tile it, crop the same size at two offsets
    big = np.tile(base, (2, 2))
    a = big[:64, :64]
    b = big[8:72, 12:76]
    ga, gb = gram_vector(a), gram_vector(b)
    rel = np.linalg.norm(ga - gb) / np.linalg.norm(ga)
    assert rel < 0.05


def test_lbp_uniform_code_count():
    table = _uniform_code_map()
    assert table.max() == 58
    assert (np.bincount(table, minlength=59) > 0).all()


def test_lbp_flat_image_single_bin():
    hist = lbp_histogram(np.full((32, 32), 0.5))
    assert hist.shape == (LBP_BINS,)
    assert abs(hist.sum() - 1.0) < 1e-12
    assert hist.max() == 1.0  # every pixel produces the all-ones code


def test_lbp_checkerboard_two_bins():
    yy, xx = np.mgrid[:32, :32]
    board = ((yy + xx) % 2).astype(float)
    hist = lbp_histogram(board)
    top2 = np.sort(hist)[-2:]
    assert top2.sum() > 0.99
    assert abs(top2[0] - 0.5) < 0.02


def test_spectrum_sinusoid_concentrates():
    x = np.arange(128)
    img = np.tile(np.sin(2 * np.pi * 16 * x / 128), (128, 1))
    v = spectrum_bins(img)
    radial, angular = v[:32], v[32:]
    # f = 0.125 c/px -> radial bin 8; horizontal frequency axis -> angular bin 0
    assert radial.argmax() == 8
    assert radial[8] > 0.95
    assert angular.argmax() == 0
    assert angular[0] > 0.95


def test_spectrum_flat_is_zero():
    v = spectrum_bins(np.full((64, 64), 0.3))
    assert np.allclose(v, 0.0)
