"""Repeated-element discovery: extract, cluster, resample.

A mask full of disconnected blobs is broken into instances, each
instance is described by shape moments, color histograms, and a
normalized patch, and agglomerative clustering groups the four tile
types without supervision. The occurrence distribution then drives a
sampler that reproduces the observed mix.
"""

import pathlib

import numpy as np

from matproc.instances import (
    cluster_instances,
    extract_instances,
    instance_features,
    occurrence_distribution,
    sample_labels,
    save_label_map,
)
from matproc.model import MaterialMaps

OUT = pathlib.Path(__file__).parent / "out" / "instances"
OUT.mkdir(parents=True, exist_ok=True)

rng = np.random.default_rng(0)
kinds = [[0, 1, 2, 3], [3, 2, 1, 0], [1, 0, 3, 2], [2, 3, 0, 1]]
tile = 32
size = 4 * tile
albedo = np.zeros((size, size, 3))
mask = np.zeros((size, size), bool)
_, x = np.mgrid[0:tile, 0:tile]
palette = [(0.8, 0.2, 0.2), (0.2, 0.8, 0.2), (0.2, 0.2, 0.8), (0.7, 0.7, 0.2)]
for i, row in enumerate(kinds):
    for j, k in enumerate(row):
        pat = 0.1 * np.sin(2 * np.pi * (k + 1) * x / tile)
        block = np.dstack([pat + c for c in palette[k]])
        block += rng.normal(scale=0.01, size=block.shape)
        albedo[i*tile:(i+1)*tile, j*tile:(j+1)*tile] = np.clip(block, 0, 1)
        mask[i*tile+2:(i+1)*tile-2, j*tile+2:(j+1)*tile-2] = True
maps = MaterialMaps(albedo=albedo, heightmap=np.full((size, size), 0.5),
                    roughness=np.full((size, size), 0.5))

instances = extract_instances(mask)
print(f"extracted {len(instances)} instances")
features = instance_features(instances, maps)
labels = cluster_instances(features, n_clusters=4)
truth = np.array([k for row in kinds for k in row])
purity = sum(np.bincount(truth[labels == lab]).max()
             for lab in range(4) if (labels == lab).any()) / len(truth)
print(f"4-way clustering purity: {purity:.3f}")

save_label_map(instances, labels, mask.shape, OUT / "labels.png")

dist = occurrence_distribution(labels)
draws = sample_labels(10_000, dist, seed=1)
emp = np.bincount(draws, minlength=len(dist)) / len(draws)
for lab, (p, q) in enumerate(zip(dist, emp)):
    print(f"  type {lab}: observed {p:.3f}, resampled {q:.3f}")
print(f"wrote {OUT}")
