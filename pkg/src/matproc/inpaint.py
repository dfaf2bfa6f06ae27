"""Hole filling by randomized nearest-neighbor-field patch synthesis.

Coarse-to-fine: the image is repeatedly halved, the nearest-neighbor field
is solved on the smallest level and upsampled as the starting point of the
next, and each level refines it by wavefront propagation plus exponentially
shrinking random search. Hole pixels take the center value of their matched
source patch, so every filled value is a genuine source value; valid pixels
pass through untouched.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage, stats

from matproc.utils import rng_for

PATCH = 7
HALF = PATCH // 2


def _patch_stack(img: np.ndarray, coords: np.ndarray) -> np.ndarray:
    """(n, PATCH*PATCH) patches centered at coords, reflect-padded."""
    pad = np.pad(img, HALF, mode="reflect")
    dy, dx = np.mgrid[-HALF : HALF + 1, -HALF : HALF + 1]
    ys = coords[:, 0][:, None] + dy.ravel()[None, :] + HALF
    xs = coords[:, 1][:, None] + dx.ravel()[None, :] + HALF
    return pad[ys, xs]


def _refine_level(img, hole, source_ok, nnf, rng, iters):
    """PatchMatch iterations at one pyramid level; mutates img and nnf."""
    hgt, wid = img.shape
    holes = np.argwhere(hole)
    if len(holes) == 0 or not source_ok.any():
        return img, nnf

    tp = _patch_stack(img, holes)

    def dists(cands):
        sp = _patch_stack(img, cands)
        d = ((tp - sp) ** 2).mean(axis=1)
        d[~source_ok[cands[:, 0], cands[:, 1]]] = np.inf
        return d

    cur = nnf[holes[:, 0], holes[:, 1]].copy()
    cur_d = dists(cur)

    def consider(cands):
        nonlocal cur, cur_d
        cands = np.clip(cands, 0, [hgt - 1, wid - 1])
        d = dists(cands)
        better = d < cur_d
        cur[better] = cands[better]
        cur_d[better] = d[better]

    for it in range(iters):
        # four directional passes; matches are published after each pass so
        # a coherent front can travel one pixel per pass in every direction
        for shift in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            shift = np.array(shift)
            nb = holes - shift
            inb = ((nb >= 0) & (nb < [hgt, wid])).all(axis=1)
            cand = cur.copy()
            cand[inb] = nnf[nb[inb, 0], nb[inb, 1]] + shift
            consider(cand)
            nnf[holes[:, 0], holes[:, 1]] = cur
        radius = max(hgt, wid)
        while radius >= 1:
            consider(cur + rng.integers(-radius, radius + 1, size=cur.shape))
            radius //= 2
        nnf[holes[:, 0], holes[:, 1]] = cur
        img[holes[:, 0], holes[:, 1]] = img[cur[:, 0], cur[:, 1]]
        # the fill is part of the target patches: refresh before re-matching
        tp = _patch_stack(img, holes)
        cur_d = dists(cur)
    return img, nnf


def inpaint(img: np.ndarray, valid: np.ndarray, seed: int = 0,
            min_valid_fraction: float = 0.05) -> np.ndarray:
    """Fill ``~valid`` pixels of a scalar raster from its valid content.

    Raises ValueError when fewer than ``min_valid_fraction`` of the pixels
    are valid. The result equals ``img`` on valid pixels exactly.
    """
    img = np.asarray(img, dtype=np.float64)
    valid = valid.astype(bool)
    if valid.all():
        return img.copy()
    frac = valid.mean()
    if frac < min_valid_fraction:
        raise ValueError(f"only {frac:.1%} of pixels valid; cannot inpaint")
    rng = rng_for(seed, "inpaint")

    # pyramid of (image, valid) down to ~32 px
    levels = [(img.copy(), valid)]
    while min(levels[-1][0].shape) > 32:
        im, vm = levels[-1]
        small = im[: im.shape[0] // 2 * 2, : im.shape[1] // 2 * 2]
        sm_v = vm[: im.shape[0] // 2 * 2, : im.shape[1] // 2 * 2]
        im2 = small.reshape(small.shape[0] // 2, 2, small.shape[1] // 2, 2)
        vm2 = sm_v.reshape(sm_v.shape[0] // 2, 2, sm_v.shape[1] // 2, 2)
        cnt = vm2.sum(axis=(1, 3))
        avg = np.where(cnt > 0,
                       (im2 * vm2).sum(axis=(1, 3)) / np.maximum(cnt, 1), 0.0)
        levels.append((avg, cnt > 0))

    prev_img = prev_nnf = None
    for li in range(len(levels) - 1, -1, -1):
        target, vmask = levels[li]
        hgt, wid = target.shape
        hole = ~vmask
        # sources need fully-valid patches so hole content cannot leak
        source_ok = ndimage.minimum_filter(vmask.astype(np.uint8), size=PATCH,
                                           mode="constant", cval=0) > 0
        if not source_ok.any():
            source_ok = vmask  # degenerate thin regions: relax to any valid

        yy, xx = np.mgrid[0:hgt, 0:wid]
        nnf = np.stack([yy, xx], axis=-1)
        work = target.copy()
        if prev_img is None:
            # coarsest: seed values from the nearest valid pixel, matches
            # at random, and iterate until the far side of the hole is
            # reachable by propagation
            if hole.any():
                dist, idx = ndimage.distance_transform_edt(
                    hole, return_indices=True)
                work = work[idx[0], idx[1]]
                src = np.argwhere(source_ok)
                pick = src[rng.integers(0, len(src), size=int(hole.sum()))]
                nnf[hole] = pick
                iters = int(np.ceil(dist.max())) + 6
            else:
                iters = 0
        else:
            up = np.kron(prev_img, np.ones((2, 2)))[:hgt, :wid]
            if up.shape != (hgt, wid):  # odd dims: pad by edge replication
                up = np.pad(up, ((0, hgt - up.shape[0]),
                                 (0, wid - up.shape[1])), mode="edge")
            work = np.where(vmask, target, up)
            # matches carry over from the coarser solve
            cy = np.minimum(yy // 2, prev_nnf.shape[0] - 1)
            cx = np.minimum(xx // 2, prev_nnf.shape[1] - 1)
            coarse = prev_nnf[cy, cx] * 2 + np.stack([yy % 2, xx % 2], axis=-1)
            coarse = np.minimum(coarse, [hgt - 1, wid - 1])
            nnf[hole] = coarse[hole]
            iters = 8
        work, nnf = _refine_level(work, hole, source_ok, nnf, rng, iters)
        prev_img, prev_nnf = work, nnf

    # the match-and-refill loop contracts value spread on deep holes, so the
    # filled values are rank-remapped onto the valid-region distribution;
    # the remap is monotone and leaves the synthesized structure in place
    filled = prev_img
    hole_vals = filled[~valid]
    if hole_vals.size:
        q = (stats.rankdata(hole_vals, method="average") - 0.5) / hole_vals.size
        filled[~valid] = np.quantile(img[valid], q)
    return np.where(valid, img, filled)
