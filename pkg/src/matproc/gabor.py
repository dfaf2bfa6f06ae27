"""Sparse Gabor noise approximation of a power spectrum.

A fixed dictionary of oriented band-pass atoms (16 orientations x 12
log-spaced frequencies x 3 bandwidths) is fit to a target power spectrum by
greedy non-negative matching pursuit; synthesis scatters seeded impulses and
convolves them with each selected kernel, giving an unbounded-domain noise
whose expected spectrum follows the fitted mixture.
"""

from __future__ import annotations

import numpy as np

from matproc.model import GaborKernel, GaborModel
from matproc.utils import rng_for

N_ORIENTATIONS = 16
N_FREQUENCIES = 12
BANDWIDTHS = (2.0, 4.0, 8.0)  # spatial envelope sigma, px
G_MAX = 64
BASE_RESOLUTION = 128

_dictionary_cache: dict = {}


def _freq_grid(n: int) -> tuple[np.ndarray, np.ndarray]:
    f = np.fft.fftfreq(n)  # cycles per pixel
    return np.meshgrid(f, f, indexing="ij")


def dictionary_params() -> list[tuple[float, float, float]]:
    """(freq, orientation, bandwidth) triples of the fixed atom grid."""
    freqs = np.geomspace(2.0 / BASE_RESOLUTION, 48.0 / BASE_RESOLUTION,
                         N_FREQUENCIES)
    orients = np.arange(N_ORIENTATIONS) * np.pi / N_ORIENTATIONS
    return [(float(f), float(o), float(b))
            for b in BANDWIDTHS for f in freqs for o in orients]


def atom_spectrum(freq: float, orientation: float, bandwidth: float,
                  n: int = BASE_RESOLUTION) -> np.ndarray:
    """Unit-L1 power spectrum of one Gabor kernel on an n x n grid.

    A Gaussian envelope of spatial sigma b modulated at (freq, orientation)
    has a power spectrum of two Gaussian bumps at +-freq with frequency-
    domain sigma 1/(2 pi b).
    """
    fy, fx = _freq_grid(n)
    cy, cx = freq * np.sin(orientation), freq * np.cos(orientation)
    sig = 1.0 / (2.0 * np.pi * bandwidth)
    bump = np.exp(-((fx - cx) ** 2 + (fy - cy) ** 2) / (2 * sig**2)) \
         + np.exp(-((fx + cx) ** 2 + (fy + cy) ** 2) / (2 * sig**2))
    bump[0, 0] = 0.0
    total = bump.sum()
    return bump / total if total > 0 else bump


def _dictionary(n: int = BASE_RESOLUTION) -> tuple[np.ndarray, list]:
    if n not in _dictionary_cache:
        params = dictionary_params()
        atoms = np.stack([atom_spectrum(f, o, b, n).ravel()
                          for f, o, b in params]).astype(np.float64)
        _dictionary_cache[n] = (atoms, params)
    return _dictionary_cache[n]


def target_spectrum(img: np.ndarray, n: int = BASE_RESOLUTION) -> np.ndarray:
    """Mean-removed periodogram of ``img`` resampled to the atom grid."""
    from matproc.maps_io import resample_channel

    arr = np.asarray(img, dtype=np.float64)
    if arr.shape != (n, n):
        lo, hi = float(arr.min()), float(arr.max())
        span = hi - lo
        if span > 1e-12:  # resample_channel clips to [0,1]
            arr = resample_channel((arr - lo) / span, (n, n)) * span + lo
        else:
            arr = np.full((n, n), lo)
    arr = arr - arr.mean()
    p = np.abs(np.fft.fft2(arr)) ** 2
    p[0, 0] = 0.0
    return p


def fit_gabor_basis(img: np.ndarray, g_max: int = G_MAX,
                    tol: float = 1e-8) -> GaborModel:
    """Greedy matching pursuit of the atom dictionary against the image's
    power spectrum; weights are non-negative, residual never increases."""
    tgt = target_spectrum(img)
    total = float(tgt.sum())
    model = GaborModel(kernels=[], base_resolution=BASE_RESOLUTION,
                       target_std=float(np.std(img)), residual_rel_l2=1.0)
    if total <= tol:
        model.residual_rel_l2 = 0.0
        return model
    atoms, params = _dictionary(BASE_RESOLUTION)
    norms_sq = (atoms**2).sum(axis=1)
    residual = tgt.ravel().copy()  # signed: tracks target - mixture exactly
    tgt_norm = np.linalg.norm(residual)
    weights: dict[int, float] = {}
    for _ in range(g_max):
        scores = atoms @ residual
        j = int(np.argmax(scores / np.sqrt(norms_sq)))
        if scores[j] <= 0:  # no atom can reduce the residual further
            break
        w = scores[j] / norms_sq[j]
        if w <= tol:
            break
        weights[j] = weights.get(j, 0.0) + float(w)
        residual -= w * atoms[j]
    # the fit ran on the image resampled to the dictionary grid; kernel
    # frequency and envelope are stored in input-pixel units so synthesis
    # at the input's own resolution reproduces features at their true scale
    scale = BASE_RESOLUTION / float(np.sqrt(img.shape[0] * img.shape[1]))
    for j, w in sorted(weights.items()):
        f, o, b = params[j]
        model.kernels.append(GaborKernel(freq=f * scale, orientation=o,
                                         bandwidth=b / scale, weight=w))
    model.residual_rel_l2 = float(np.linalg.norm(residual)
                                  / max(tgt_norm, 1e-12))
    return model


def model_spectrum(model: GaborModel, n: int = BASE_RESOLUTION) -> np.ndarray:
    """Fitted Sum_j w_j * atom_j power spectrum on an n x n grid."""
    out = np.zeros((n, n))
    for k in model.kernels:
        out += k.weight * atom_spectrum(k.freq, k.orientation, k.bandwidth, n)
    return out


def synth_gabor(model: GaborModel, size: int, seed: int, tags: tuple = (),
                upscale: int = 1, impulse_density: float = 0.03) -> np.ndarray:
    """Seeded sparse Gabor noise with the model's spectrum at ``size``^2.

    ``upscale`` > 1 renders the same features on a finer pixel grid (each
    kernel's frequency and bandwidth scale so cycles per texture-unit are
    preserved). Output is zero-mean with std equal to the fitted target.
    """
    if not model.kernels:
        return np.zeros((size, size))
    rng = rng_for(seed, "gabor", *tags)
    field = np.zeros((size, size))
    total_w = sum(k.weight for k in model.kernels)
    y, x = np.mgrid[0:size, 0:size]
    for ki, k in enumerate(model.kernels):
        freq = k.freq / upscale
        bw = k.bandwidth * upscale
        n_imp = max(int(impulse_density * size * size / (bw * bw)), 8)
        # per-kernel impulse field convolved with the kernel via FFT
        imp = np.zeros((size, size))
        pos = rng.integers(0, size, size=(n_imp, 2))
        amp = rng.normal(size=n_imp)
        np.add.at(imp, (pos[:, 0], pos[:, 1]), amp)
        ang = k.orientation
        u = np.cos(ang) * (x - size // 2) + np.sin(ang) * (y - size // 2)
        r2 = (x - size // 2) ** 2 + (y - size // 2) ** 2
        kern = np.exp(-r2 / (2 * bw**2)) * np.cos(2 * np.pi * freq * u)
        kern -= kern.mean()
        conv = np.real(np.fft.ifft2(np.fft.fft2(imp)
                                    * np.fft.fft2(np.fft.ifftshift(kern))))
        var = n_imp * (kern**2).sum() / (size * size)
        field += np.sqrt(k.weight / total_w / max(var, 1e-12)) * conv
    field -= field.mean()
    std = field.std()
    if std > 1e-12:
        field *= model.target_std / std
    return field
