"""Point-process tiling blending functions: procedural binary masks.

A mask generator drops a seeded point set on the unit torus (regular,
jittered, hex, or stratified tiling), optionally warps the evaluation
coordinates with two octaves of value noise, applies an anisotropic
rotated metric, and accumulates feature-times-window contributions of
the k nearest points per pixel. Thresholding the min/max-normalized
field yields the mask. The inverse path is retrieval (descriptor
nearest-neighbor against a pre-built parameter database) followed by
coordinate descent over continuous and discrete parameters.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from . import featurebank
from .model import (
    PPTBF_CONTINUOUS_BOUNDS,
    FeatureKind,
    PptbfParams,
    Tiling,
    WindowShape,
)
from .utils import rng_for

CANONICAL_RES = 128
DB_THRESHOLDS = (0.35, 0.5, 0.65)


# ---------------------------------------------------------------------------
# Forward evaluation
# ---------------------------------------------------------------------------

def _lattice_points(p: PptbfParams, seed: int) -> np.ndarray:
    """Seeded point set on the unit torus, shape (N, 2) in [0, 1)."""
    n = max(2, int(round(p.cells_per_axis)))
    if p.tiling is Tiling.HEX:
        # rows squeezed toward sqrt(3)/2 spacing, phase-shifted alternately
        m = max(2, int(round(n * 2 / np.sqrt(3))))
        jj, ii = np.meshgrid(np.arange(n), np.arange(m))
        x = (jj + 0.5 + 0.5 * (ii % 2)) / n
        y = (ii + 0.5) / m
        pts = np.stack([x.ravel(), y.ravel()], axis=1)
        cell = np.array([1.0 / n, 1.0 / m])
    else:
        jj, ii = np.meshgrid(np.arange(n), np.arange(n))
        x = (jj + 0.5) / n
        y = (ii + 0.5) / n
        pts = np.stack([x.ravel(), y.ravel()], axis=1)
        cell = np.array([1.0 / n, 1.0 / n])
    if p.tiling is Tiling.STRATIFIED:
        rng = rng_for(seed, "pptbf-points", n)
        pts = pts + (rng.random(pts.shape) - 0.5) * cell
    elif p.tiling in (Tiling.JITTERED, Tiling.HEX) and p.jitter > 0:
        rng = rng_for(seed, "pptbf-points", n)
        pts = pts + p.jitter * (rng.random(pts.shape) - 0.5) * cell
    elif p.tiling is Tiling.JITTERED or p.tiling is Tiling.HEX:
        # consume nothing: jitter=0 must equal the regular lattice exactly
        pass
    return np.mod(pts, 1.0)


def _value_noise(coords: np.ndarray, freq: float, seed: int, tag: str) -> np.ndarray:
    """Toroidal 2-octave value noise in [-1, 1] at unit-square coords."""
    out = np.zeros(coords.shape[:-1])
    amp_total = 0.0
    lat = max(1, int(round(freq)))
    for octave, (l, amp) in enumerate([(lat, 1.0), (2 * lat, 0.5)]):
        rng = rng_for(seed, "pptbf-warp", tag, octave)
        grid = rng.uniform(-1.0, 1.0, size=(l, l))
        u = coords[..., 0] * l
        v = coords[..., 1] * l
        i0 = np.floor(u).astype(int)
        j0 = np.floor(v).astype(int)
        fu = u - i0
        fv = v - j0
        fu = fu * fu * (3 - 2 * fu)  # smoothstep: C1 across cell edges
        fv = fv * fv * (3 - 2 * fv)
        i0m, i1m = i0 % l, (i0 + 1) % l
        j0m, j1m = j0 % l, (j0 + 1) % l
        val = (grid[j0m, i0m] * (1 - fu) * (1 - fv)
               + grid[j0m, i1m] * fu * (1 - fv)
               + grid[j1m, i0m] * (1 - fu) * fv
               + grid[j1m, i1m] * fu * fv)
        out += amp * val
        amp_total += amp
    return out / amp_total


def _metric_transform(p: PptbfParams) -> np.ndarray:
    c, s = np.cos(p.rotation), np.sin(p.rotation)
    rot = np.array([[c, s], [-s, c]])
    return np.diag([p.anisotropy, 1.0]) @ rot


def eval_pptbf(p: PptbfParams, resolution, seed: int | None = None) -> np.ndarray:
    """Evaluate the scalar field in [0, 1] at the given resolution.

    Pure in (params, resolution, seed); ``seed`` defaults to ``p.seed``.
    Coordinates live on the unit torus, so the field tiles seamlessly and
    is resolution independent (pixel centers sample one continuous field).
    """
    p.validate()
    if seed is None:
        seed = p.seed
    if np.isscalar(resolution):
        h = w = int(resolution)
    else:
        h, w = (int(v) for v in resolution)

    # corner sampling: the 2r grid contains every r grid point, so halving
    # the render resolution is an exact subsample of the same field
    ys = np.arange(h) / h
    xs = np.arange(w) / w
    coords = np.stack(np.meshgrid(xs, ys), axis=-1)  # (h, w, 2) as (x, y)

    if p.warp_amp > 0:
        dx = _value_noise(coords, p.warp_freq, seed, "x")
        dy = _value_noise(coords, p.warp_freq, seed, "y")
        coords = coords + p.warp_amp * np.stack([dx, dy], axis=-1)

    pts = _lattice_points(p, seed)
    # 3x3 torus tiling so nearest-neighbor search wraps
    shifts = np.array([(sx, sy) for sx in (-1, 0, 1) for sy in (-1, 0, 1)])
    tiled = (pts[None, :, :] + shifts[:, None, :]).reshape(-1, 2)

    m = _metric_transform(p)
    tree = cKDTree(tiled @ m.T)
    q = coords.reshape(-1, 2) @ m.T

    n_cells = max(2, int(round(p.cells_per_axis)))
    k = p.k_nearest
    k_query = min(k + 1, len(tiled))  # extra neighbor feeds the cellular window
    dist, idx = tree.query(q, k=k_query)
    dist = dist.reshape(-1, k_query)
    idx = idx.reshape(-1, k_query)

    d_hat = dist * n_cells  # distances in cell units
    field = np.zeros(q.shape[0])
    for j in range(min(k, k_query)):
        offs = q - tree.data[idx[:, j]]
        f = _feature(p, d_hat[:, j], offs * n_cells)
        w_j = _window(p, d_hat[:, j], d_hat[:, min(j + 1, k_query - 1)])
        field += f * w_j
    field = field.reshape(h, w)

    lo, hi = field.min(), field.max()
    if hi - lo < 1e-12:
        return np.full((h, w), 0.5)
    return (field - lo) / (hi - lo)


def _feature(p: PptbfParams, d_hat: np.ndarray, offs: np.ndarray) -> np.ndarray:
    if p.feature_kind is FeatureKind.CONSTANT:
        return np.ones_like(d_hat)
    if p.feature_kind is FeatureKind.RADIAL:
        return 0.5 + 0.5 * np.cos(2 * np.pi * p.feature_freq * d_hat + p.feature_phase)
    # stripes: oscillation along the metric x axis of the local offset
    return 0.5 + 0.5 * np.cos(2 * np.pi * p.feature_freq * offs[:, 0] + p.feature_phase)


def _window(p: PptbfParams, d: np.ndarray, d_next: np.ndarray) -> np.ndarray:
    if p.window_shape is WindowShape.GAUSSIAN:
        sigma = 0.5 * p.window_falloff
        return np.exp(-(d / sigma) ** 2)
    if p.window_shape is WindowShape.TENT:
        return np.maximum(0.0, 1.0 - d / p.window_falloff)
    # cellular: Worley-style edge distance against the next neighbor out
    ratio = 1.0 - d / np.maximum(d_next, 1e-12)
    return np.maximum(0.0, ratio) ** (1.0 / p.window_falloff)


def threshold_field(field: np.ndarray, t: float) -> np.ndarray:
    return field >= t


# ---------------------------------------------------------------------------
# Mask descriptor
# ---------------------------------------------------------------------------

@dataclass
class DescriptorWeights:
    lbp: float = 1.0
    gram: float = 0.3   # dominates realization noise at 1.0; retrieval of a
                        # re-seeded render degrades when it outweighs the rest
    spectrum: float = 1.0


@dataclass
class MaskDescriptor:
    vector: np.ndarray
    weights: DescriptorWeights = field(default_factory=DescriptorWeights)


def mask_descriptor(mask: np.ndarray,
                    weights: DescriptorWeights | None = None) -> MaskDescriptor:
    """Deterministic descriptor of a binary mask at the canonical 128 res."""
    weights = weights or DescriptorWeights()
    m = np.asarray(mask, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError("mask must be 2D")
    if m.shape != (CANONICAL_RES, CANONICAL_RES):
        zoom = (CANONICAL_RES / m.shape[0], CANONICAL_RES / m.shape[1])
        m = (ndimage.zoom(m, zoom, order=1) >= 0.5).astype(np.float64)
    vec = np.concatenate([
        weights.lbp * featurebank.lbp_histogram(m),
        weights.gram * featurebank.gram_vector(m),
        weights.spectrum * featurebank.spectrum_bins(m),
    ])
    if not np.isfinite(vec).all():
        raise ValueError("descriptor contains non-finite values")
    return MaskDescriptor(vector=vec, weights=weights)


# ---------------------------------------------------------------------------
# Database
# ---------------------------------------------------------------------------

@dataclass
class PptbfDatabase:
    records: list[PptbfParams]
    entry_record: np.ndarray    # (M,) record index per mask entry
    entry_threshold: np.ndarray  # (M,) binarization threshold per entry
    descriptors: np.ndarray     # (M, d) PCA-projected
    pca_mean: np.ndarray
    pca_basis: np.ndarray       # (d, D) rows are components
    weights: DescriptorWeights = field(default_factory=DescriptorWeights)

    def __len__(self) -> int:
        return len(self.records)


_DISCRETE_COMBOS = [
    (t, k, w, f)
    for t in Tiling for k in (1, 2, 3, 4) for w in WindowShape for f in FeatureKind
]


def _sample_record(rng: np.random.Generator, combo, seed: int) -> PptbfParams:
    t, k, w, f = combo
    vals = {name: rng.uniform(lo, hi)
            for name, (lo, hi) in PPTBF_CONTINUOUS_BOUNDS.items()}
    vals["threshold"] = 0.5
    return PptbfParams(tiling=t, k_nearest=k, window_shape=w, feature_kind=f,
                       seed=seed, **vals)


def build_database(n: int, seed: int = 0,
                   weights: DescriptorWeights | None = None,
                   progress=None) -> PptbfDatabase:
    """Render n records at 128 resolution, binarize at three thresholds,
    and index the 3n descriptors with a PCA basis fit on the set."""
    weights = weights or DescriptorWeights()
    rng = rng_for(seed, "pptbf-db")
    order = rng.permutation(len(_DISCRETE_COMBOS))
    records = [
        _sample_record(rng, _DISCRETE_COMBOS[order[i % len(_DISCRETE_COMBOS)]],
                       seed=int(rng.integers(0, 2**31)))
        for i in range(n)
    ]
    raw = []
    entry_record = []
    entry_threshold = []
    for i, rec in enumerate(records):
        fld = eval_pptbf(rec, CANONICAL_RES)
        for t in DB_THRESHOLDS:
            mask = threshold_field(fld, t)
            raw.append(mask_descriptor(mask, weights).vector)
            entry_record.append(i)
            entry_threshold.append(t)
        if progress is not None and (i + 1) % 100 == 0:
            progress(i + 1, n)
    raw = np.asarray(raw)
    mean = raw.mean(axis=0)
    centered = raw - mean
    # PCA by SVD; keep at most 512 components and drop null directions
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int((s > s[0] * 1e-10).sum()) if s.size else 0
    d = min(512, max(rank, 1))
    basis = vt[:d]
    return PptbfDatabase(
        records=records,
        entry_record=np.asarray(entry_record),
        entry_threshold=np.asarray(entry_threshold),
        descriptors=centered @ basis.T,
        pca_mean=mean,
        pca_basis=basis,
        weights=weights,
    )


def query_database(mask: np.ndarray, db: PptbfDatabase,
                   top_k: int = 10) -> list[tuple[PptbfParams, float]]:
    """Ranked (params, distance) by exact L2 in the database's PCA space.

    Returned params carry the matched entry's binarization threshold so
    they regenerate the matched mask directly.
    """
    v = mask_descriptor(mask, db.weights).vector
    proj = (v - db.pca_mean) @ db.pca_basis.T
    dists = np.linalg.norm(db.descriptors - proj, axis=1)
    order = np.argsort(dists, kind="stable")[:top_k]
    out = []
    for j in order:
        rec = db.records[int(db.entry_record[j])]
        out.append((replace(rec, threshold=float(db.entry_threshold[j])),
                    float(dists[j])))
    return out


def save_database(db: PptbfDatabase, path) -> None:
    """Directory layout: params.json + descriptors.npy + pca.npz."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    recs = []
    for r in db.records:
        d = {k: getattr(r, k) for k in PPTBF_CONTINUOUS_BOUNDS}
        d.update(tiling=r.tiling.value, k_nearest=r.k_nearest,
                 window_shape=r.window_shape.value,
                 feature_kind=r.feature_kind.value, seed=r.seed)
        recs.append(d)
    table = {
        "records": recs,
        "entry_record": db.entry_record.tolist(),
        "entry_threshold": db.entry_threshold.tolist(),
        "weights": {"lbp": db.weights.lbp, "gram": db.weights.gram,
                    "spectrum": db.weights.spectrum},
    }
    (path / "params.json").write_text(json.dumps(table))
    np.save(path / "descriptors.npy", db.descriptors)
    np.savez(path / "pca.npz", mean=db.pca_mean, basis=db.pca_basis)


def load_database(path) -> PptbfDatabase:
    path = Path(path)
    table = json.loads((path / "params.json").read_text())
    records = []
    for d in table["records"]:
        records.append(PptbfParams(
            tiling=Tiling(d["tiling"]), k_nearest=int(d["k_nearest"]),
            window_shape=WindowShape(d["window_shape"]),
            feature_kind=FeatureKind(d["feature_kind"]), seed=int(d["seed"]),
            **{k: float(d[k]) for k in PPTBF_CONTINUOUS_BOUNDS}))
    pca = np.load(path / "pca.npz")
    w = table["weights"]
    return PptbfDatabase(
        records=records,
        entry_record=np.asarray(table["entry_record"], dtype=np.int64),
        entry_threshold=np.asarray(table["entry_threshold"]),
        descriptors=np.load(path / "descriptors.npy"),
        pca_mean=pca["mean"],
        pca_basis=pca["basis"],
        weights=DescriptorWeights(lbp=w["lbp"], gram=w["gram"],
                                  spectrum=w["spectrum"]),
    )


# ---------------------------------------------------------------------------
# Inverse optimization
# ---------------------------------------------------------------------------

@dataclass
class OptimizeOptions:
    rounds: int = 3
    coverage_gamma: float = 1.0
    discrete_budget: int | None = None  # None: exhaustive over the combo grid
    rel_tol: float = 1e-3
    line_points: int = 7


def _masked_objective(p: PptbfParams, target_vec: np.ndarray,
                      target_cov: float, valid: np.ndarray | None,
                      gamma: float, weights: DescriptorWeights) -> float:
    fld = eval_pptbf(p, CANONICAL_RES)
    cand = threshold_field(fld, p.threshold).astype(np.float64)
    if valid is not None:
        cand = cand * valid
        cov = cand.sum() / max(valid.sum(), 1)
    else:
        cov = cand.mean()
    v = mask_descriptor(cand, weights).vector
    return float(np.linalg.norm(v - target_vec) + gamma * (cov - target_cov) ** 2)


def optimize_pptbf(init: PptbfParams, target_mask: np.ndarray,
                   valid_mask: np.ndarray | None = None,
                   opts: OptimizeOptions | None = None
                   ) -> tuple[PptbfParams, list[float]]:
    """Coordinate descent: per-parameter line searches alternating with a
    discrete-combination search. Accepted steps never increase the
    objective; returns (best params, objective history)."""
    opts = opts or OptimizeOptions()
    target = np.asarray(target_mask, dtype=np.float64)
    if target.shape != (CANONICAL_RES, CANONICAL_RES):
        zoom = (CANONICAL_RES / target.shape[0], CANONICAL_RES / target.shape[1])
        target = (ndimage.zoom(target, zoom, order=1) >= 0.5).astype(np.float64)
    valid = None
    if valid_mask is not None:
        valid = np.asarray(valid_mask, dtype=np.float64)
        if valid.shape != target.shape:
            zoom = (CANONICAL_RES / valid.shape[0], CANONICAL_RES / valid.shape[1])
            valid = (ndimage.zoom(valid, zoom, order=1) >= 0.5).astype(np.float64)
        target = target * valid
        target_cov = target.sum() / max(valid.sum(), 1)
    else:
        target_cov = target.mean()
    weights = DescriptorWeights()
    target_vec = mask_descriptor(target, weights).vector

    def objective(p: PptbfParams) -> float:
        return _masked_objective(p, target_vec, target_cov, valid,
                                 opts.coverage_gamma, weights)

    best = init
    best_obj = objective(best)
    history = [best_obj]

    for _ in range(opts.rounds):
        round_start = best_obj
        # (a) sequential line searches over each continuous parameter
        for name, (lo, hi) in PPTBF_CONTINUOUS_BOUNDS.items():
            span = hi - lo
            cur = getattr(best, name)
            for radius in (span / 4, span / 16):
                cands = np.clip(
                    cur + np.linspace(-radius, radius, opts.line_points), lo, hi)
                for v in cands:
                    if abs(v - cur) < 1e-12:
                        continue
                    trial = replace(best, **{name: float(v)})
                    obj = objective(trial)
                    if obj < best_obj:
                        best, best_obj = trial, obj
                        history.append(best_obj)
                        cur = float(v)
        # (b) discrete search
        combos = _DISCRETE_COMBOS
        if opts.discrete_budget is not None:
            if opts.discrete_budget <= 0:
                combos = []
            else:
                rng = rng_for(init.seed, "pptbf-opt-discrete")
                pick = rng.choice(len(_DISCRETE_COMBOS),
                                  size=min(opts.discrete_budget,
                                           len(_DISCRETE_COMBOS)),
                                  replace=False)
                combos = [_DISCRETE_COMBOS[i] for i in pick]
        for t, k, w, f in combos:
            if (t, k, w, f) == (best.tiling, best.k_nearest,
                                best.window_shape, best.feature_kind):
                continue
            trial = replace(best, tiling=t, k_nearest=k, window_shape=w,
                            feature_kind=f)
            obj = objective(trial)
            if obj < best_obj:
                best, best_obj = trial, obj
                history.append(best_obj)
        if round_start - best_obj < opts.rel_tol * max(abs(round_start), 1e-12):
            break
    return best, history


def query_latency(db: PptbfDatabase, mask: np.ndarray) -> float:
    t0 = time.perf_counter()
    query_database(mask, db, top_k=1)
    return time.perf_counter() - t0
