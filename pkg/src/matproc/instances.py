"""Instance-based decomposition of structure masks.

Disconnected regions of a mask become instances; each is featurized by its
color histogram and the mean local spectrum of a scale-normalized patch,
grouped by average-linkage agglomerative clustering into sub-material types,
and the resulting occurrence statistics drive seeded label sampling when
masks are regenerated procedurally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.cluster.hierarchy import fcluster, linkage

from matproc.model import MaterialMaps
from matproc.spectral import welch_local_spectrum
from matproc.utils import rng_for

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class InstanceConfig:
    min_area: int = 16
    patch_size: int = 64      # normalized patch edge S
    hist_bins: int = 16       # histogram bins B per color channel
    spectrum_window: int = 32
    spectrum_step: int = 16
    w_hist: float = 1.0
    w_spectrum: float = 1.0


@dataclass
class Instance:
    bbox: tuple  # (r0, c0, r1, c1), end-exclusive
    mask: np.ndarray  # bbox-local boolean region
    area: int
    source_node: int | None = None

    def full_mask(self, shape) -> np.ndarray:
        out = np.zeros(shape, dtype=bool)
        r0, c0, r1, c1 = self.bbox
        out[r0:r1, c0:c1] = self.mask
        return out


def extract_instances(mask: np.ndarray, min_area: int = 16,
                      source_node: int | None = None) -> list[Instance]:
    """4-connected components of a binary mask in raster-scan order,
    dropping components smaller than ``min_area`` pixels."""
    labeled, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    out = []
    for sl, idx in zip(ndimage.find_objects(labeled), range(1, n + 1)):
        region = labeled[sl] == idx
        area = int(region.sum())
        if area < min_area:
            continue
        bbox = (sl[0].start, sl[1].start, sl[0].stop, sl[1].stop)
        out.append(Instance(bbox=bbox, mask=region, area=area,
                            source_node=source_node))
    return out


def color_histogram(maps: MaterialMaps, inst: Instance, bins: int = 16) -> np.ndarray:
    """(3, bins) histogram over the instance's own pixels, each channel
    normalized to sum 1. Bbox padding pixels are excluded."""
    r0, c0, r1, c1 = inst.bbox
    crop = maps.albedo[r0:r1, c0:c1]
    vals = crop[inst.mask]  # (area, 3)
    hist = np.zeros((3, bins))
    for ch in range(3):
        h, _ = np.histogram(vals[:, ch], bins=bins, range=(0.0, 1.0))
        hist[ch] = h / max(h.sum(), 1)
    return hist


def normalized_patch(maps: MaterialMaps, inst: Instance, size: int = 64) -> np.ndarray:
    """Instance region resampled to size x size from its bounding box
    (luminance); padding pixels take the region mean so they do not inject
    spurious edges into the spectrum."""
    r0, c0, r1, c1 = inst.bbox
    lum = maps.albedo[r0:r1, c0:c1].mean(axis=2)
    fill = float(lum[inst.mask].mean())
    filled = np.where(inst.mask, lum, fill)
    zoom = (size / filled.shape[0], size / filled.shape[1])
    out = ndimage.zoom(filled, zoom, order=1, mode="nearest", grid_mode=True)
    return out[:size, :size]


def instance_features(instances: list[Instance], maps: MaterialMaps,
                      cfg: InstanceConfig | None = None) -> np.ndarray:
    """(n, F) feature matrix: color histogram block + mean-spectrum block,
    each block unit-L2-normalized per instance, then weighted. The two
    blocks land on a common scale so neither dominates the L2 metric."""
    cfg = cfg or InstanceConfig()
    rows = []
    for inst in instances:
        hist = color_histogram(maps, inst, cfg.hist_bins).ravel()
        patch = normalized_patch(maps, inst, cfg.patch_size)
        spectra, _ = welch_local_spectrum(
            patch, window=cfg.spectrum_window, step=cfg.spectrum_step)
        spec = spectra.mean(axis=0).ravel()
        hist = hist / max(np.linalg.norm(hist), 1e-12)
        spec = spec / max(np.linalg.norm(spec), 1e-12)
        rows.append(np.concatenate([cfg.w_hist * hist, cfg.w_spectrum * spec]))
    return np.array(rows)


def cluster_instances(features: np.ndarray, n_clusters: int | None = None,
                      distance_threshold: float | None = None) -> np.ndarray:
    """Average-linkage agglomerative clustering on L2 distances.

    Cut either at a target cluster count or a linkage distance threshold.
    Labels are canonicalized to first-appearance order, so a permutation of
    the input rows permutes labels without changing the partition.
    """
    n = len(features)
    if n < 2:
        if n_clusters is not None and n_clusters > n:
            raise ValueError(f"n_clusters={n_clusters} exceeds {n} instances")
        return np.zeros(n, dtype=int)
    if n_clusters is not None and n_clusters > n:
        raise ValueError(f"n_clusters={n_clusters} exceeds {n} instances")
    z = linkage(features, method="average")
    if n_clusters is not None:
        raw = fcluster(z, t=n_clusters, criterion="maxclust")
    elif distance_threshold is not None:
        raw = fcluster(z, t=distance_threshold, criterion="distance")
    else:
        raise ValueError("need n_clusters or distance_threshold")
    remap: dict[int, int] = {}
    labels = np.empty(n, dtype=int)
    for i, r in enumerate(raw):
        if r not in remap:
            remap[r] = len(remap)
        labels[i] = remap[r]
    return labels


def occurrence_distribution(labels: np.ndarray) -> np.ndarray:
    """Empirical label frequencies over 0..max(label)."""
    labels = np.asarray(labels, dtype=int)
    if labels.size == 0:
        raise ValueError("no labels")
    counts = np.bincount(labels, minlength=labels.max() + 1)
    return counts / counts.sum()


def sample_labels(n: int, dist: np.ndarray, seed: int) -> np.ndarray:
    """Seeded i.i.d. label draw for ``n`` instances from ``dist``."""
    dist = np.asarray(dist, dtype=float)
    if abs(dist.sum() - 1.0) > 1e-6 or (dist < 0).any():
        raise ValueError("distribution must be non-negative and sum to 1")
    rng = rng_for(seed, "instances", "label-sampling")
    return rng.choice(len(dist), size=n, p=dist)


def split_mask_by_clusters(mask: np.ndarray, instances: list[Instance],
                           labels: np.ndarray) -> list[np.ndarray]:
    """Per-cluster child masks that exactly partition ``mask``.

    Mask pixels belonging to no instance (area-filtered crumbs) are assigned
    to the cluster of the spatially nearest instance pixel, keeping the tree
    partition invariant intact.
    """
    n_clusters = int(labels.max()) + 1 if len(labels) else 0
    if n_clusters == 0:
        raise ValueError("no instances to split by")
    owner = np.full(mask.shape, -1, dtype=int)
    for inst, lab in zip(instances, labels):
        r0, c0, r1, c1 = inst.bbox
        sub = owner[r0:r1, c0:c1]
        sub[inst.mask] = lab
    claimed = owner >= 0
    leftover = mask.astype(bool) & ~claimed
    if leftover.any():
        idx = ndimage.distance_transform_edt(
            ~claimed, return_distances=False, return_indices=True)
        owner[leftover] = owner[idx[0][leftover], idx[1][leftover]]
    return [(owner == lab) & mask.astype(bool) for lab in range(n_clusters)]


def save_label_map(instances: list[Instance], labels: np.ndarray,
                   shape: tuple[int, int], path) -> None:
    """Indexed PNG: palette index 0 = background, index l+1 = cluster l."""
    from matproc.matting import _PALETTE

    arr = np.zeros(shape, dtype=np.uint8)
    for inst, lab in zip(instances, labels):
        r0, c0, r1, c1 = inst.bbox
        sub = arr[r0:r1, c0:c1]
        sub[inst.mask] = lab + 1
    img = Image.fromarray(arr, mode="P")
    pal = []
    for i in range(256):
        pal.extend(_PALETTE[i % len(_PALETTE)] if i < len(_PALETTE) else (0, 0, 0))
    img.putpalette(pal)
    img.save(path)
