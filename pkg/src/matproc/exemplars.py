"""Bundled synthetic inputs used by the demos, the CLI smoke paths, and the
acceptance checks.

Everything is generated deterministically from fixed seeds instead of
shipping binary assets: the noisy-maps exemplar is a material whose
generative graph is known exactly (so optimization can be scored against
ground truth), and the two-texture exemplar is the classic
equal-color / different-frequency segmentation probe with canned
scribbles.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .model import (
    MaterialMaps,
    MaterialTree,
    NodeKind,
    flatten_params,
    unflatten_params,
)
from .noisefit import NoisefitConfig, proceduralize_submaterial
from .recompose import compose_tree
from .utils import rng_for

__all__ = [
    "noisy_maps_exemplar",
    "two_texture_exemplar",
    "two_texture_scribbles",
]

# ground-truth filter settings baked into the noisy-maps exemplar; the
# acceptance run starts from defaults and has to find its way back here
TRUE_FILTERS = {
    "height": [{"alpha": 1.3}, {"alpha": 0.7, "sigma": 1.5}],
    "roughness": [{"alpha": 1.25}, {"sigma": 1.0}],
}

EXEMPLAR_SEED = 5
EXEMPLAR_CFG = NoisefitConfig(n_max=2, kernel_sizes=(5, 33),
                              windows=(64,), steps=(32,), base_g_max=16)


def _two_scale_field(rng, size: int, w_fine: float, w_coarse: float,
                     s_fine: float = 1.0, s_coarse: float = 6.0) -> np.ndarray:
    fine = ndimage.gaussian_filter(rng.standard_normal((size, size)), s_fine)
    coarse = ndimage.gaussian_filter(rng.standard_normal((size, size)), s_coarse)
    out = 0.5 + w_fine * fine / fine.std() + w_coarse * coarse / coarse.std()
    return np.clip(out, 0.0, 1.0)


def noisy_maps_exemplar(size: int = 256, seed: int = EXEMPLAR_SEED
                        ) -> tuple[MaterialMaps, MaterialTree]:
    """The bundled noisy-maps exemplar: (input maps, ground-truth tree).

    A two-scale noise material is fitted into a single-leaf tree, the
    tree's filter parameters are set to the non-default values in
    ``TRUE_FILTERS``, and the input maps are composed from that graph.
    Albedo is a flat color so the optimizable surface stays small: the
    structure lives in height and roughness.
    """
    rng = rng_for(seed, "exemplar-noisy")
    height = _two_scale_field(rng, size, 0.12, 0.10)
    rough = _two_scale_field(rng, size, 0.08, 0.10)
    albedo = np.empty((size, size, 3))
    albedo[:, :] = (0.55, 0.50, 0.45)
    source = MaterialMaps(albedo=albedo, heightmap=height, roughness=rough)

    tree = MaterialTree.single_root((size, size))
    tree.nodes[0].kind = NodeKind.LEAF
    mask = np.ones((size, size), bool)
    tree.nodes[0].payload = proceduralize_submaterial(source, mask,
                                                      EXEMPLAR_CFG, seed=seed)
    for channel, specs in TRUE_FILTERS.items():
        fps = tree.nodes[0].payload.channels[channel].filter_params
        for fp, values in zip(fps, specs):
            for key, v in values.items():
                setattr(fp, key, v)
    input_maps = compose_tree(tree, size, seed=0)
    return input_maps, tree


def reset_filters(tree: MaterialTree) -> MaterialTree:
    """Copy of ``tree`` with every optimizable parameter at its default
    (gain 1, bias 0, blur 0, hard masks): the un-optimized starting graph."""
    out = tree.copy()
    for node in out.nodes.values():
        if node.payload is not None:
            for cp in node.payload.channels.values():
                for fp in cp.filter_params:
                    fp.alpha, fp.delta, fp.sigma = 1.0, 0.0, 0.0
        for proc in node.mask_procs.values():
            proc.softness_sigma = 0.0
    return out


def two_texture_exemplar(size: int = 128, seed: int = 7
                         ) -> tuple[MaterialMaps, np.ndarray]:
    """Equal-color, different-frequency half-and-half material.

    Left half carries fine-grained height noise, right half coarse, with
    matching means and contrasts in every channel, so nothing but local
    spectrum distinguishes the two regions. Returns (maps, left_mask).
    """
    rng = rng_for(seed, "exemplar-two-texture")
    fine = ndimage.gaussian_filter(rng.standard_normal((size, size)), 0.8)
    coarse = ndimage.gaussian_filter(rng.standard_normal((size, size)), 4.0)
    left = np.zeros((size, size), bool)
    left[:, : size // 2] = True
    # standardize each texture inside its own half so first-order stats
    # match exactly and only the local spectrum separates the regions
    fine = (fine - fine[left].mean()) / fine[left].std()
    coarse = (coarse - coarse[~left].mean()) / coarse[~left].std()
    height = np.clip(0.5 + 0.16 * np.where(left, fine, coarse), 0, 1)
    albedo = np.empty((size, size, 3))
    albedo[:, :] = 0.5
    rough = np.full((size, size), 0.5)
    maps = MaterialMaps(albedo=albedo, heightmap=height, roughness=rough)
    return maps, left


def two_texture_scribbles(size: int = 128) -> np.ndarray:
    """Sparse two-label scribbles for the two-texture exemplar: one short
    vertical stroke per half, -1 everywhere else."""
    labels = np.full((size, size), -1, dtype=np.int32)
    q = size // 4
    labels[size // 4: 3 * size // 4, q - 1: q + 1] = 0
    labels[size // 4: 3 * size // 4, 3 * q - 1: 3 * q + 1] = 1
    return labels
