"""Small shared helpers: tagged deterministic RNG streams and mask blurs."""

from __future__ import annotations

import zlib

import numpy as np
from scipy import ndimage


def rng_for(seed: int, *tags) -> np.random.Generator:
    """Independent generator for one (seed, tags...) slot.

    Tags (strings or ints) are hashed so streams for different tree nodes,
    channels, and layers never collide or depend on call order.
    """
    hashed = [zlib.crc32(str(t).encode("utf-8")) for t in tags]
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *hashed])
    return np.random.default_rng(ss)


def soften_mask(mask: np.ndarray, sigma: float) -> np.ndarray:
    """Binary mask -> [0, 1] coverage field via Gaussian blur; sigma<=0 is
    a float cast. Used wherever a stored or generated mask feeds blending."""
    m = mask.astype(np.float64)
    if sigma <= 0:
        return m
    return ndimage.gaussian_filter(m, sigma=float(sigma), mode="nearest")


def normalized_blur(image: np.ndarray, mask: np.ndarray, sigma: float) -> np.ndarray:
    """Gaussian blur of ``image`` restricted to ``mask`` (normalized
    convolution): pixels outside the mask contribute nothing, and the
    result divides out the local mask coverage. Undefined (zero-coverage)
    pixels come back as 0."""
    m = mask.astype(np.float64)
    num = ndimage.gaussian_filter(image * m, sigma=float(sigma), mode="nearest")
    den = ndimage.gaussian_filter(m, sigma=float(sigma), mode="nearest")
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 1e-12)
    return out
