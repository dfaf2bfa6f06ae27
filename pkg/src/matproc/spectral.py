"""Local power-spectrum estimation and PCA reduction.

Overlapping Hann windows give per-window periodograms (Welch estimation);
averaging their PCA projections over window footprints gives a smooth
per-pixel spectrum feature field. Shared by segmentation features, instance
features, noise-model fitting, and mask descriptors.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 32
DEFAULT_STEP = 8
VALID_FRACTION = 0.95


@dataclass
class PcaModel:
    basis: np.ndarray               # (out_dim, d), rows orthonormal
    mean: np.ndarray                # (d,)
    explained_variance: np.ndarray  # (out_dim,)

    def project(self, vectors: np.ndarray) -> np.ndarray:
        return (np.asarray(vectors) - self.mean) @ self.basis.T

    def reconstruct(self, reduced: np.ndarray) -> np.ndarray:
        return reduced @ self.basis + self.mean


@dataclass
class LocalSpectrumField:
    """Per-pixel spectrum estimate reduced to ``d`` components."""

    field: np.ndarray  # (H, W, d)
    window: int
    step: int
    pca: PcaModel


def pca_reduce(vectors: np.ndarray, out_dim: int) -> tuple[np.ndarray, PcaModel]:
    """Project row vectors onto their top-variance orthonormal directions.

    Parameters
    ----------
    vectors : (n, d) array
    out_dim : requested component count; shrunk (with a warning) when the
        data rank cannot support it.

    Returns
    -------
    (reduced, model) where ``reduced`` is (n, k) with k <= out_dim and
    ``model`` carries the basis rows, mean, and per-component variance.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("pca_reduce needs a non-empty (n, d) array")
    mean = x.mean(axis=0)
    centered = x - mean
    # economy SVD: rows of vt are principal directions
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    var = s**2 / max(x.shape[0] - 1, 1)
    tol = max(var[0], 1.0) * 1e-12 if var.size else 0.0
    rank = int((var > tol).sum())
    k = min(out_dim, rank) if rank > 0 else 1
    if k < out_dim:
        log.warning("pca_reduce: out_dim %d reduced to data rank %d", out_dim, k)
    model = PcaModel(basis=vt[:k], mean=mean, explained_variance=var[:k])
    return centered @ vt[:k].T, model


def _window_positions(size: int, window: int, step: int) -> np.ndarray:
    if size < window:
        return np.array([], dtype=int)
    pos = np.arange(0, size - window + 1, step)
    # keep the trailing edge covered even when step does not divide evenly
    if pos[-1] != size - window:
        pos = np.append(pos, size - window)
    return pos


def welch_local_spectrum(
    img: np.ndarray,
    mask: np.ndarray | None = None,
    window: int = DEFAULT_WINDOW,
    step: int = DEFAULT_STEP,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-window power spectra of a scalar raster.

    Each window w fully inside the mask (>= 95% valid pixels) contributes
    |FFT(hann * (w - mean(w)))|^2. Windows straddling the mask boundary are
    dropped; the few masked pixels inside an accepted window are replaced by
    the window mean so they vanish after mean removal.

    Returns
    -------
    (spectra, positions): spectra is (n, T, T) non-negative with zero DC,
    positions is (n, 2) top-left (row, col) per window.
    Raises ValueError when no window qualifies ("region too small").
    """
    img = np.asarray(img, dtype=np.float64)
    hgt, wid = img.shape
    if window > min(hgt, wid):
        raise ValueError(f"window {window} exceeds raster {img.shape}: region too small")
    if step < 1:
        raise ValueError("step must be >= 1")
    valid = np.ones_like(img, bool) if mask is None else mask.astype(bool)
    taper = np.hanning(window)[:, None] * np.hanning(window)[None, :]
    min_valid = VALID_FRACTION * window * window

    rows = _window_positions(hgt, window, step)
    cols = _window_positions(wid, window, step)
    spectra, positions = [], []
    for r in rows:
        for c in cols:
            vm = valid[r : r + window, c : c + window]
            nv = int(vm.sum())
            if nv < min_valid:
                continue
            w = img[r : r + window, c : c + window]
            m = float(w[vm].mean())
            w = np.where(vm, w, m) - m
            f = np.fft.fft2(w * taper)
            spectra.append(np.abs(f) ** 2)
            positions.append((r, c))
    if not spectra:
        raise ValueError("no fully-valid window: region too small")
    out = np.stack(spectra)
    out[:, 0, 0] = 0.0
    return out, np.array(positions, dtype=int)


def welch_field(
    img: np.ndarray,
    mask: np.ndarray | None = None,
    window: int = DEFAULT_WINDOW,
    step: int = DEFAULT_STEP,
    out_dim: int = 3,
) -> LocalSpectrumField:
    """Per-pixel spectrum features: window periodograms, PCA to ``out_dim``
    components, then footprint-averaged onto pixels.

    Averaging the projections instead of the raw spectra is equivalent
    (projection is affine) and keeps memory at O(H * W * out_dim). Pixels no
    valid window covers inherit the value of their nearest covered pixel.
    """
    spectra, positions = welch_local_spectrum(img, mask, window, step)
    flat = spectra.reshape(len(spectra), -1)
    reduced, model = pca_reduce(flat, out_dim)
    d = reduced.shape[1]

    hgt, wid = img.shape
    acc = np.zeros((hgt, wid, d))
    cnt = np.zeros((hgt, wid))
    for (r, c), vec in zip(positions, reduced):
        acc[r : r + window, c : c + window] += vec
        cnt[r : r + window, c : c + window] += 1.0
    covered = cnt > 0
    acc[covered] /= cnt[covered][:, None]
    if not covered.all():
        idx = ndimage.distance_transform_edt(
            ~covered, return_distances=False, return_indices=True
        )
        acc = acc[idx[0], idx[1]]
    return LocalSpectrumField(field=acc, window=window, step=step, pca=model)
