"""Multi-layer procedural noise models for sub-material channels.

A masked channel is peeled into band-passed layers by progressively wider
masked Gaussian blurs; each layer becomes a sliding-window random-phase
model, and the blurred-out remainder becomes a mean value plus a Gabor-basis
base layer fitted to the inpainted residual. The per-channel models, the
albedo PCA color basis, and reference histograms together form the
sub-material's procedural payload; synthesis runs the models forward at any
resolution and re-imposes the reference histograms.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage, stats

from matproc.gabor import fit_gabor_basis, synth_gabor
from matproc.inpaint import inpaint
from matproc.model import (
    ChannelProc,
    ColorBasis,
    FilterParams,
    MaterialMaps,
    NoiseLayerModel,
    SubMaterialProc,
)
from matproc.utils import normalized_blur, rng_for

log = logging.getLogger(__name__)

HIST_BINS = 256


@dataclass
class NoisefitConfig:
    n_max: int = 4
    eps: float = 1e-4                        # variance floor on [0,1] data
    kernel_sizes: tuple = (5, 13, 33, 65)    # blur kernel K_i per iteration
    windows: tuple = (32, 32, 64, 64)        # analysis window T_i
    steps: tuple = (8, 8, 16, 16)            # analysis stride S_i = T_i/4
    base_g_max: int = 64


# ---------------------------------------------------------------------------
# Band decomposition
# ---------------------------------------------------------------------------

def multilayer_decompose(img: np.ndarray, mask: np.ndarray,
                         cfg: NoisefitConfig | None = None):
    """Peel band-passed noise layers off a masked channel.

    Each iteration blurs the current image over the mask (normalized
    convolution with sigma K_i/6, so the kernel's 3-sigma support is K_i)
    and keeps the difference as layer N_i. Iteration stops at ``n_max``
    layers or once the masked variance drops to ``eps``. Returns
    (layers, residual, base_color, final_noise) with the exact telescoping
    identity sum(layers) + final_noise + base_color == img on the mask.
    """
    cfg = cfg or NoisefitConfig()
    mask = mask.astype(bool)
    if not mask.any():
        raise ValueError("empty mask")
    cur = np.where(mask, np.asarray(img, dtype=np.float64), 0.0)
    layers = []
    for i in range(cfg.n_max):
        if cur[mask].var() <= cfg.eps:
            break
        sigma = cfg.kernel_sizes[min(i, len(cfg.kernel_sizes) - 1)] / 6.0
        blurred = normalized_blur(cur, mask, sigma)
        blurred[~mask] = 0.0
        layer = np.where(mask, cur - blurred, 0.0)
        layers.append(layer)
        cur = blurred
    base_color = float(cur[mask].mean())
    final_noise = np.where(mask, cur - base_color, 0.0)
    return layers, cur, base_color, final_noise


# ---------------------------------------------------------------------------
# Random-phase layer models
# ---------------------------------------------------------------------------

def fit_random_phase(noise: np.ndarray, mask: np.ndarray, window: int,
                     step: int, kernel_size: int = 0,
                     layer_index: int = 0) -> NoiseLayerModel:
    """Sliding-window amplitude spectra of a band-passed noise layer.

    Only windows lying fully inside the mask are estimated; grid slots
    without a valid window inherit the spectrum of the nearest valid slot.
    Raises ValueError when no window fits ("sub-material too fragmented").
    """
    noise = np.asarray(noise, dtype=np.float64)
    mask = mask.astype(bool)
    hgt, wid = noise.shape
    if window > min(hgt, wid):
        raise ValueError("sub-material too fragmented for window "
                         f"{window} on raster {noise.shape}")
    rows = np.arange(0, hgt - window + 1, step)
    cols = np.arange(0, wid - window + 1, step)
    taper = np.hanning(window)[:, None] * np.hanning(window)[None, :]
    # unit-RMS taper: the stored spectra then carry the window's true power,
    # so resynthesized patches come back at the source variance
    taper = taper / np.sqrt((taper**2).mean())
    amps = np.zeros((len(rows), len(cols), window, window), dtype=np.float32)
    valid = np.zeros((len(rows), len(cols)), dtype=bool)
    for ri, r in enumerate(rows):
        for ci, c in enumerate(cols):
            vm = mask[r : r + window, c : c + window]
            if not vm.all():
                continue
            w = noise[r : r + window, c : c + window]
            w = w - w.mean()
            f = np.fft.fft2(w * taper)
            a = np.abs(f)
            a[0, 0] = 0.0
            amps[ri, ci] = a.astype(np.float32)
            valid[ri, ci] = True
    if not valid.any():
        raise ValueError("sub-material too fragmented: no fully-valid window")
    if not valid.all():
        idx = ndimage.distance_transform_edt(~valid, return_distances=False,
                                             return_indices=True)
        amps = amps[idx[0], idx[1]]
    return NoiseLayerModel(window=window, step=step, amplitudes=amps,
                           valid=valid, source_shape=(hgt, wid),
                           kernel_size=kernel_size, layer_index=layer_index)


def synth_random_phase(model: NoiseLayerModel, out_size: tuple[int, int],
                       seed: int, tags: tuple = (),
                       upscale: int = 1) -> np.ndarray:
    """Random-phase synthesis from a window-spectrum grid.

    Windows are placed on a toroidal canvas at half-window hop; each draws
    the amplitude of the spatially nearest model slot (tiling the source
    frame) and fresh unit-modulus Hermitian phases from its own tagged
    stream. Blending normalizes by the accumulated squared Hann weight, a
    power partition of unity, so the blend preserves the per-window spectra
    instead of attenuating them. ``upscale`` embeds the amplitudes in a
    larger spectral grid (zero-padding), reproducing the same features on a
    finer pixel grid. Output is zero-mean; identical seeds give identical
    rasters.
    """
    hgt, wid = out_size
    t_eff = model.window * upscale
    hop = t_eff // 2
    src_h = model.source_shape[0] * upscale
    src_w = model.source_shape[1] * upscale

    # canvas is a hop multiple no smaller than one window so wrapped
    # indices never repeat inside a single placement
    ch = hop * max(-(-hgt // hop), 2)
    cw = hop * max(-(-wid // hop), 2)
    acc = np.zeros((ch, cw))
    wacc = np.zeros((ch, cw))
    taper = np.hanning(t_eff)[:, None] * np.hanning(t_eff)[None, :]

    gh, gw = model.amplitudes.shape[:2]
    n = model.window
    if upscale > 1:
        # zero-pad spectra around the Nyquist split; x upscale^2 keeps the
        # per-pixel variance of the upsampled field
        amps = np.zeros((gh, gw, t_eff, t_eff), dtype=np.float32)
        half = n // 2
        lo = slice(0, half)
        hi = slice(-(n - half), None)
        for part_r, src_r in ((lo, lo), (hi, hi)):
            for part_c, src_c in ((lo, lo), (hi, hi)):
                amps[:, :, part_r, part_c] = model.amplitudes[:, :, src_r, src_c]
        amps = amps * (upscale**2)
    else:
        amps = model.amplitudes

    for r in range(0, ch, hop):
        for c in range(0, cw, hop):
            # nearest model slot for this window's source-frame position
            sr = (r % src_h) / upscale
            sc = (c % src_w) / upscale
            gi = min(int(round(sr / model.step)), gh - 1)
            gj = min(int(round(sc / model.step)), gw - 1)
            # layer index is deliberately not part of the stream identity:
            # layers sharing a window grid draw the same phases, so their
            # sum recombines coherently into the full-band spectrum
            rng = rng_for(seed, "rpn", model.window, *tags, r, c)
            white = np.fft.fft2(rng.standard_normal((t_eff, t_eff)))
            mag = np.abs(white)
            phase = np.where(mag > 1e-12, white / np.maximum(mag, 1e-12), 1.0)
            patch = np.real(np.fft.ifft2(amps[gi, gj] * phase))
            rr = (np.arange(r, r + t_eff)) % ch
            cc = (np.arange(c, c + t_eff)) % cw
            acc[np.ix_(rr, cc)] += taper * patch
            wacc[np.ix_(rr, cc)] += taper**2
    out = acc / np.sqrt(np.maximum(wacc, 1e-12))
    out = out[:hgt, :wid]
    return out - out.mean()


# ---------------------------------------------------------------------------
# PCA color space
# ---------------------------------------------------------------------------

def to_pca_color(albedo: np.ndarray, mask: np.ndarray | None = None
                 ) -> tuple[list[np.ndarray], ColorBasis]:
    """Decorrelate RGB into three scalar rasters via an orthonormal basis
    fitted on the masked pixels (sign-fixed for determinism)."""
    if mask is None:
        mask = np.ones(albedo.shape[:2], bool)
    vals = albedo[mask.astype(bool)].reshape(-1, 3)
    mean = vals.mean(axis=0)
    cov = np.cov(vals - mean, rowvar=False) if len(vals) > 1 else np.zeros((3, 3))
    eigval, eigvec = np.linalg.eigh(np.atleast_2d(cov))
    order = np.argsort(eigval)[::-1]
    basis = eigvec[:, order].T  # rows are components, descending variance
    for i in range(3):
        j = int(np.argmax(np.abs(basis[i])))
        if basis[i, j] < 0:
            basis[i] = -basis[i]
    cb = ColorBasis(basis=basis, mean=mean)
    flat = (albedo.reshape(-1, 3) - mean) @ basis.T
    rasters = [flat[:, i].reshape(albedo.shape[:2]) for i in range(3)]
    return rasters, cb


def from_pca_color(rasters: list[np.ndarray], basis: ColorBasis) -> np.ndarray:
    stack = np.stack([r.ravel() for r in rasters], axis=1)
    rgb = stack @ basis.basis + basis.mean
    return rgb.reshape(*rasters[0].shape, 3)


# ---------------------------------------------------------------------------
# Histogram matching
# ---------------------------------------------------------------------------

def value_histogram(values: np.ndarray, lo: float, hi: float,
                    bins: int = HIST_BINS) -> np.ndarray:
    h, _ = np.histogram(values, bins=bins, range=(lo, hi))
    return h.astype(np.float64)


def histogram_match(src: np.ndarray, ref_hist: np.ndarray,
                    lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    """Monotone remap of ``src`` so its value distribution follows the
    reference histogram over [lo, hi].

    Ranks use midpoints with ties averaged, so a constant input maps to the
    reference median rather than fanning out across the distribution.
    """
    ref = np.asarray(ref_hist, dtype=np.float64)
    total = ref.sum()
    if total <= 0:
        return src.copy()
    edges = np.linspace(lo, hi, len(ref) + 1)
    cdf = np.concatenate([[0.0], np.cumsum(ref) / total])
    # strictly increasing version so interpolation inverts plateaus stably
    ramp = np.linspace(0.0, 1.0, len(cdf))
    cdf = (cdf + 1e-9 * ramp) / (1.0 + 1e-9)
    flat = src.ravel()
    ranks = stats.rankdata(flat, method="average")
    q = (ranks - 0.5) / flat.size
    return np.interp(q, cdf, edges).reshape(src.shape)


# ---------------------------------------------------------------------------
# Whole sub-material fit and synthesis
# ---------------------------------------------------------------------------

def _channel_rasters(maps: MaterialMaps, mask: np.ndarray
                     ) -> tuple[dict[str, np.ndarray], ColorBasis]:
    pca, basis = to_pca_color(maps.albedo, mask)
    channels = {f"albedo_pca{i}": pca[i] for i in range(3)}
    channels.update(maps.scalar_channels())
    return channels, basis


def proceduralize_submaterial(maps: MaterialMaps, mask: np.ndarray,
                              cfg: NoisefitConfig | None = None,
                              seed: int = 0) -> SubMaterialProc:
    """Fit the full multi-channel procedural payload of one sub-material.

    Albedo is decorrelated into PCA channels first; each scalar channel is
    band-decomposed, every band gets a random-phase model, and the residual
    is inpainted and approximated by a Gabor basis. When a band's window no
    longer fits inside the mask the remaining bands collapse into the base
    (fragmented regions degrade gracefully to a base-only model).
    """
    cfg = cfg or NoisefitConfig()
    mask = mask.astype(bool)
    if not mask.any():
        raise ValueError("empty mask")
    channels, basis = _channel_rasters(maps, mask)
    proc = SubMaterialProc(channels={}, color_basis=basis)
    for name, raster in channels.items():
        layers, residual, base_color, final_noise = \
            multilayer_decompose(raster, mask, cfg)
        models = []
        leftover = np.zeros_like(raster)
        for i, layer in enumerate(layers):
            t = cfg.windows[min(i, len(cfg.windows) - 1)]
            s = cfg.steps[min(i, len(cfg.steps) - 1)]
            k = cfg.kernel_sizes[min(i, len(cfg.kernel_sizes) - 1)]
            try:
                models.append(fit_random_phase(layer, mask, t, s,
                                               kernel_size=k, layer_index=i))
            except ValueError:
                log.warning("channel %s: window %d no longer fits the mask; "
                            "folding layers %d.. into the base", name, t, i)
                for rest in layers[i:]:
                    leftover += rest
                break
        base_src = final_noise + leftover
        filled = inpaint(base_src, mask, seed=seed)
        base_model = fit_gabor_basis(filled, g_max=cfg.base_g_max)
        vals = raster[mask]
        lo, hi = float(vals.min()), float(vals.max())
        if hi - lo < 1e-9:  # constant channel: matching would only shift it
            ref, rng_pair = None, (lo, lo + 1.0)
        else:
            ref, rng_pair = value_histogram(vals, lo, hi), (lo, hi)
        proc.channels[name] = ChannelProc(
            layers=models,
            base_model=base_model,
            base_color=base_color,
            filter_params=[FilterParams() for _ in range(len(models))],
            reference_histogram=ref,
            hist_range=rng_pair,
        )
    return proc


def apply_filter(img: np.ndarray, alpha: float, delta: float,
                 sigma: float) -> np.ndarray:
    """Gain/bias then Gaussian blur; sigma = 0 leaves the values as-is."""
    out = img * alpha + delta
    if sigma > 0:
        out = ndimage.gaussian_filter(out, sigma=float(sigma), mode="nearest")
    return out


def synth_channel_parts(proc: ChannelProc, out_size: tuple[int, int],
                        seed: int, tags: tuple = (),
                        upscale: int = 1) -> list[np.ndarray]:
    """Raw, unfiltered rasters of every layer plus the Gabor base (last).

    These depend only on the fitted models and (out_size, seed, upscale),
    never on filter parameters, so an optimizer can synthesize them once
    and re-assemble cheaply while it searches filter space.
    """
    parts = [synth_random_phase(layer, out_size, seed, tags=tags,
                                upscale=upscale)
             for layer in proc.layers]
    base = synth_gabor(proc.base_model, max(out_size), seed,
                       tags=(*tags, "base"), upscale=upscale)
    parts.append(base[: out_size[0], : out_size[1]])
    return parts


def assemble_channel(proc: ChannelProc, parts: list[np.ndarray],
                     match_histogram: bool = True) -> np.ndarray:
    """Apply per-layer filters to pre-synthesized rasters, add the raw base
    and base color, and histogram-match against the stored reference."""
    acc = np.zeros_like(parts[0])
    for fp, field in zip(proc.filter_params, parts[: len(proc.layers)]):
        acc += apply_filter(field, fp.alpha, fp.delta, fp.sigma)
    acc += parts[-1]  # Gabor base stays unfiltered
    acc += proc.base_color
    if match_histogram and proc.reference_histogram is not None:
        lo, hi = proc.hist_range
        acc = histogram_match(acc, proc.reference_histogram, lo, hi)
    return acc


def synth_channel(proc: ChannelProc, out_size: tuple[int, int], seed: int,
                  tags: tuple = (), upscale: int = 1,
                  match_histogram: bool = True) -> np.ndarray:
    """Forward synthesis of one channel: filtered random-phase layers plus
    the Gabor base plus the base color, then histogram matching."""
    parts = synth_channel_parts(proc, out_size, seed, tags=tags,
                                upscale=upscale)
    return assemble_channel(proc, parts, match_histogram=match_histogram)


def synth_submaterial(proc: SubMaterialProc, out_size: tuple[int, int],
                      seed: int, tags: tuple = (),
                      upscale: int = 1) -> MaterialMaps:
    """Synthesize all channels of a sub-material into MaterialMaps."""
    fields = {name: synth_channel(cp, out_size, seed, tags=(*tags, name),
                                  upscale=upscale)
              for name, cp in proc.channels.items()}
    pca = [fields.pop(f"albedo_pca{i}") for i in range(3)]
    albedo = np.clip(from_pca_color(pca, proc.color_basis), 0.0, 1.0)
    height = np.clip(fields.pop("height"), 0.0, 1.0)
    rough = np.clip(fields.pop("roughness"), 0.0, 1.0)
    extras = {k: np.clip(v, 0.0, 1.0) for k, v in fields.items()}
    return MaterialMaps(albedo=albedo, heightmap=height, roughness=rough,
                        extra_channels=extras)
