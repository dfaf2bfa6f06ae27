"""Fixed seeded convolutional feature bank and texture statistics.

The bank replaces a pretrained network as the source of translation
insensitive texture features: two stages of 16 frozen 5x5 filters with
half-wave rectification and 2x average pooling. Gram matrices of the
stage activations, a uniform LBP histogram, and a binned Fourier power
spectrum are the building blocks of the mask descriptor and the style
loss. Filter weights are generated once from a fixed seed and never
change; regenerating them would silently invalidate every stored
descriptor, so the seed is module-level and not configurable.
"""

from __future__ import annotations

import functools

import numpy as np

from .utils import rng_for

N_FILTERS = 16
KERNEL = 5
_BANK_SEED = 271828  # frozen: stored descriptors depend on these weights


@functools.lru_cache(maxsize=1)
def bank_filters() -> tuple[np.ndarray, np.ndarray]:
    """The two frozen filter stages: (16, 1, 5, 5) and (16, 16, 5, 5).

    Plain Gaussian draws, scaled so unit-variance input keeps unit-order
    activations. Deliberately not zero-meaned: the DC response is what
    separates flat masks of different levels.
    """
    rng = rng_for(_BANK_SEED, "featurebank")
    s1 = rng.normal(size=(N_FILTERS, 1, KERNEL, KERNEL)) / KERNEL
    s2 = rng.normal(size=(N_FILTERS, N_FILTERS, KERNEL, KERNEL))
    s2 /= KERNEL * np.sqrt(N_FILTERS)
    return s1, s2


def _conv_bank(stack: np.ndarray, filters: np.ndarray) -> np.ndarray:
    """Correlate (H, W, Cin) with (Cout, Cin, k, k) via im2col + BLAS."""
    cout, cin, k, _ = filters.shape
    h, w = stack.shape[:2]
    pad = k // 2
    padded = np.pad(stack, ((pad, pad), (pad, pad), (0, 0)), mode="reflect")
    win = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(0, 1))
    cols = win.reshape(h * w, cin * k * k)
    mat = filters.transpose(1, 2, 3, 0).reshape(cin * k * k, cout)
    return (cols @ mat).reshape(h, w, cout)


def _pool2(a: np.ndarray) -> np.ndarray:
    h, w = a.shape[:2]
    h2, w2 = h // 2 * 2, w // 2 * 2
    a = a[:h2, :w2]
    return 0.25 * (a[0::2, 0::2] + a[1::2, 0::2] + a[0::2, 1::2] + a[1::2, 1::2])


def activations(img: np.ndarray) -> list[np.ndarray]:
    """Stage outputs for a scalar image: two (H', W', 16) stacks.

    Each stage is conv, half-wave rectification, then 2x average pool.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("feature bank operates on scalar images")
    s1, s2 = bank_filters()
    a1 = _pool2(np.maximum(_conv_bank(img[:, :, None], s1), 0.0))
    a2 = _pool2(np.maximum(_conv_bank(a1, s2), 0.0))
    return [a1, a2]


_TRI = np.triu_indices(N_FILTERS)


def gram_vector(img: np.ndarray) -> np.ndarray:
    """Upper-triangle Gram entries of both stage activations (272 values).

    Grams are averaged over pixels so the statistic is resolution
    independent; they are NOT normalized by brightness.
    """
    parts = []
    for act in activations(img):
        flat = act.reshape(-1, N_FILTERS)
        gram = flat.T @ flat / flat.shape[0]
        parts.append(gram[_TRI])
    return np.concatenate(parts)


# ---------------------------------------------------------------------------
# Uniform LBP
# ---------------------------------------------------------------------------

# clockwise 8-neighborhood starting at the top-left
_OFFSETS = [(-1, -1), (-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1)]


@functools.lru_cache(maxsize=1)
def _uniform_code_map() -> np.ndarray:
    """Map each 8-bit LBP code to its bin: 58 uniform codes + 1 catch-all."""
    table = np.zeros(256, dtype=np.int64)
    nxt = 0
    for code in range(256):
        bits = [(code >> i) & 1 for i in range(8)]
        transitions = sum(bits[i] != bits[(i + 1) % 8] for i in range(8))
        if transitions <= 2:
            table[code] = nxt
            nxt += 1
        else:
            table[code] = 58
    assert nxt == 58
    return table


LBP_BINS = 59


def lbp_histogram(img: np.ndarray) -> np.ndarray:
    """Normalized uniform LBP-8,1 histogram, 59 bins summing to 1."""
    img = np.asarray(img, dtype=np.float64)
    padded = np.pad(img, 1, mode="reflect")
    center = padded[1:-1, 1:-1]
    code = np.zeros(img.shape, dtype=np.int64)
    for bit, (dy, dx) in enumerate(_OFFSETS):
        nb = padded[1 + dy : 1 + dy + img.shape[0], 1 + dx : 1 + dx + img.shape[1]]
        code |= (nb >= center).astype(np.int64) << bit
    bins = _uniform_code_map()[code]
    hist = np.bincount(bins.ravel(), minlength=LBP_BINS).astype(np.float64)
    return hist / hist.sum()


# ---------------------------------------------------------------------------
# Binned Fourier power spectrum
# ---------------------------------------------------------------------------

RADIAL_BINS = 32
ANGULAR_BINS = 16


def spectrum_bins(img: np.ndarray) -> np.ndarray:
    """Radially (32) and angularly (16) binned power spectrum, each part
    normalized by total power. Mean is removed so flat images give zeros."""
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    power = np.abs(np.fft.fft2(img - img.mean())) ** 2
    power[0, 0] = 0.0
    fy = np.fft.fftfreq(h)[:, None]
    fx = np.fft.fftfreq(w)[None, :]
    r = np.hypot(fy, fx)
    r_idx = np.minimum((r / 0.5 * RADIAL_BINS).astype(np.int64), RADIAL_BINS - 1)
    theta = np.mod(np.arctan2(fy, fx), np.pi)
    t_idx = np.minimum((theta / np.pi * ANGULAR_BINS).astype(np.int64),
                       ANGULAR_BINS - 1)
    radial = np.bincount(r_idx.ravel(), weights=power.ravel(),
                         minlength=RADIAL_BINS)[:RADIAL_BINS]
    angular = np.bincount(t_idx.ravel(), weights=power.ravel(),
                          minlength=ANGULAR_BINS)[:ANGULAR_BINS]
    total = power.sum()
    if total <= 0:
        return np.zeros(RADIAL_BINS + ANGULAR_BINS)
    return np.concatenate([radial, angular]) / total
