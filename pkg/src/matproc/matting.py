"""Scribble-driven soft segmentation of material maps.

Builds per-pixel feature vectors (color, height, roughness, position, and a
3-component local-spectrum estimate), links each pixel to its nearest
neighbors in feature space under two position weightings, and solves the
resulting graph Laplacian system for one alpha map per scribble layer. The
spectrum components let layers with equal mean color but different pattern
scale separate cleanly.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from PIL import Image
from scipy import ndimage, sparse
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from matproc.model import MaterialMaps
from matproc.spectral import welch_field

log = logging.getLogger(__name__)

UNLABELED = -1


@dataclass
class MattingConfig:
    k: int = 10
    lam: float = 100.0          # scribble constraint strength
    w_color: float = 1.0
    w_height: float = 0.5
    w_roughness: float = 0.5
    w_spectrum: float = 3.0
    w_xy: tuple = (0.1, 1.0)    # one kNN graph per spatial weight
    window: int = 32
    step: int = 8
    spectrum_smooth: float = 8.0  # sigma of spatial blur on the spectrum
                                  # field; footprint jitter otherwise shatters
                                  # the kNN graph on periodic textures
    use_spectrum: bool = True
    ridge: float = 1e-4         # keeps the system well-conditioned; pulls
                                # scribble-free components to uniform alpha
    cg_tol: float = 1e-8
    cg_maxiter: int = 20000


@dataclass
class PixelFeatures:
    """Stacked per-pixel feature planes, one array per spatial-weight variant."""

    variants: list = field(default_factory=list)  # each (H, W, F)

    @property
    def shape(self):
        return self.variants[0].shape[:2]


def build_features(maps: MaterialMaps, spec_field=None,
                   cfg: MattingConfig | None = None) -> PixelFeatures:
    """Assemble weighted feature planes from the maps and a spectrum field.

    ``spec_field`` is a LocalSpectrumField (or None to skip spectrum
    features); its components are min-max normalized over the frame so their
    scale is commensurate with the [0,1] map channels.
    """
    cfg = cfg or MattingConfig()
    hgt, wid = maps.heightmap.shape
    ys, xs = np.mgrid[0:hgt, 0:wid]
    planes = [
        cfg.w_color * maps.albedo[:, :, 0],
        cfg.w_color * maps.albedo[:, :, 1],
        cfg.w_color * maps.albedo[:, :, 2],
        cfg.w_height * maps.heightmap,
        cfg.w_roughness * maps.roughness,
    ]
    spec_planes = []
    if spec_field is not None and cfg.use_spectrum:
        f = spec_field.field
        for d in range(f.shape[2]):
            comp = f[:, :, d]
            if cfg.spectrum_smooth > 0:
                comp = ndimage.gaussian_filter(comp, cfg.spectrum_smooth,
                                               mode="nearest")
            lo, hi = comp.min(), comp.max()
            comp = (comp - lo) / (hi - lo) if hi - lo > 1e-12 else np.zeros_like(comp)
            spec_planes.append(cfg.w_spectrum * comp)
    xn = xs / max(wid - 1, 1)
    yn = ys / max(hgt - 1, 1)
    variants = []
    for wxy in cfg.w_xy:
        arr = np.stack(planes + [wxy * xn, wxy * yn] + spec_planes, axis=2)
        variants.append(arr.astype(np.float64))
    return PixelFeatures(variants=variants)


def _knn_edges(feats: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rows, cols, distances) of directed kNN edges, self excluded."""
    tree = cKDTree(feats)
    dist, idx = tree.query(feats, k=k + 1, workers=1)
    rows = np.repeat(np.arange(len(feats)), k)
    # drop the self column; ties may put self later, mask it explicitly
    cols = idx[:, 1:].ravel()
    dists = dist[:, 1:].ravel()
    keep = cols != rows
    return rows[keep], cols[keep], dists[keep]


def _diameter_estimate(feats: np.ndarray) -> float:
    """Feature-space diameter from a deterministic 1% pixel sample."""
    n = len(feats)
    m = max(min(n, 2), n // 100)
    sample = feats[np.linspace(0, n - 1, m).astype(int)]
    d2 = ((sample[:, None, :] - sample[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.max()))


def knn_matting(features: PixelFeatures, scribbles: np.ndarray,
                parent_mask: np.ndarray | None = None,
                k: int = 10, lam: float = 100.0, ridge: float = 1e-4,
                cg_tol: float = 1e-8, cg_maxiter: int = 20000) -> np.ndarray:
    """Solve for one alpha map per scribble layer.

    ``scribbles`` holds -1 for unlabeled pixels and 0..L-1 for layer labels.
    The affinity of an edge is 1 - |Xi - Xj| / C with C the sampled feature
    diameter; the constrained Laplacian system (Lap + lam*D_s) a = lam*m is
    solved per layer by preconditioned conjugate gradient. Returned alphas
    have shape (L, H, W), are clamped to [0,1], sum to 1 on the parent mask,
    and are exactly 0 outside it.
    """
    hgt, wid = features.shape
    valid = np.ones((hgt, wid), bool) if parent_mask is None else parent_mask.astype(bool)
    labels = scribbles[valid]
    n_layers = int(scribbles.max()) + 1
    if n_layers < 2:
        raise ValueError("need at least 2 scribble layers")
    for layer in range(n_layers):
        if not (labels == layer).any():
            raise ValueError(f"layer {layer} has no scribbles inside the parent mask")

    n = int(valid.sum())
    per_variant = max(k // len(features.variants), 1)
    rows_all, cols_all, affs = [], [], []
    for arr in features.variants:
        feats = arr[valid]
        c = max(_diameter_estimate(feats), 1e-9)
        r, cidx, d = _knn_edges(feats, per_variant)
        rows_all.append(r)
        cols_all.append(cidx)
        affs.append(np.clip(1.0 - d / c, 0.0, 1.0))
    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    aff = np.concatenate(affs)
    a_mat = sparse.coo_matrix((aff, (rows, cols)), shape=(n, n)).tocsr()
    a_mat = a_mat.maximum(a_mat.T)  # union of directed edges, symmetric
    deg = np.asarray(a_mat.sum(axis=1)).ravel()
    lap = sparse.diags(deg) - a_mat

    scribbled = (labels >= 0).astype(np.float64)
    system = (lap + lam * sparse.diags(scribbled)
              + ridge * sparse.identity(n)).tocsr()
    precond = sparse.diags(1.0 / system.diagonal())

    alphas = np.zeros((n_layers, hgt, wid))
    for layer in range(n_layers):
        rhs = lam * (labels == layer).astype(np.float64)
        x, info = cg(system, rhs, rtol=cg_tol, maxiter=cg_maxiter, M=precond)
        if info != 0:
            res = np.linalg.norm(system @ x - rhs)
            raise RuntimeError(
                f"alpha solve for layer {layer} did not converge "
                f"(info={info}, residual={res:.3g})"
            )
        alphas[layer][valid] = np.clip(x, 0.0, 1.0)

    total = alphas.sum(axis=0)
    safe = valid & (total > 1e-9)
    alphas[:, safe] /= total[safe]
    alphas[:, valid & ~safe] = 1.0 / n_layers
    alphas[:, ~valid] = 0.0
    return alphas


def binarize_alphas(alphas: np.ndarray,
                    parent_mask: np.ndarray | None = None) -> list[np.ndarray]:
    """Per-pixel argmax of the alpha stack; ties go to the lowest layer.

    The returned masks are pairwise disjoint and union exactly to the
    parent mask.
    """
    win = np.argmax(alphas, axis=0)
    valid = (np.ones(win.shape, bool) if parent_mask is None
             else parent_mask.astype(bool))
    return [(win == layer) & valid for layer in range(alphas.shape[0])]


def rematte_subregion(maps: MaterialMaps, parent_mask: np.ndarray | None,
                      scribbles: np.ndarray,
                      cfg: MattingConfig | None = None
                      ) -> tuple[np.ndarray, list[np.ndarray]]:
    """End-to-end matte of one tree region: spectrum field restricted to the
    parent mask, features, alpha solve, binarization.

    Regions too small to hold one spectrum window fall back to map-only
    features. Returns (alphas, masks).
    """
    cfg = cfg or MattingConfig()
    hgt, wid = maps.heightmap.shape
    valid = np.ones((hgt, wid), bool) if parent_mask is None else parent_mask.astype(bool)
    if (scribbles[~valid] >= 0).any():
        raise ValueError("scribbles outside the parent mask")
    spec = None
    if cfg.use_spectrum:
        lum = maps.albedo.mean(axis=2)
        try:
            spec = welch_field(lum, valid, cfg.window, cfg.step, out_dim=3)
        except ValueError:
            log.warning("region too small for spectrum features; proceeding without")
    feats = build_features(maps, spec, cfg)
    alphas = knn_matting(feats, scribbles, valid, k=cfg.k, lam=cfg.lam,
                         ridge=cfg.ridge, cg_tol=cfg.cg_tol,
                         cg_maxiter=cfg.cg_maxiter)
    return alphas, binarize_alphas(alphas, valid)


# ---------------------------------------------------------------------------
# Scribble file format: indexed PNG, palette index 0 = unlabeled
# ---------------------------------------------------------------------------

_PALETTE = [
    (0, 0, 0), (230, 60, 60), (70, 140, 230), (90, 190, 90), (235, 200, 70),
    (190, 100, 220), (90, 210, 210), (240, 140, 60), (150, 150, 150),
]


def load_scribbles(path) -> np.ndarray:
    """Indexed PNG -> label array with -1 for unlabeled pixels."""
    img = Image.open(path)
    if img.mode != "P":
        raise IOError(f"scribble image {path} must be palette-indexed")
    return np.asarray(img).astype(np.int32) - 1


def save_scribbles(labels: np.ndarray, path) -> None:
    arr = (labels + 1).astype(np.uint8)
    img = Image.fromarray(arr, mode="P")
    pal = []
    for i in range(256):
        pal.extend(_PALETTE[i % len(_PALETTE)] if i < len(_PALETTE) else (0, 0, 0))
    img.putpalette(pal)
    img.save(path)
