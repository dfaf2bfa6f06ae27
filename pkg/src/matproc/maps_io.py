"""Raster ingestion and relief conversion.

Loads and saves SVBRDF map sets (PNG or raw float32 + JSON sidecar) and
converts between normal maps and height maps so everything downstream works
on scalar fields. Height reconstruction integrates the normal-derived
gradient field with a Poisson solve under Neumann boundary conditions,
diagonalized by the type-II cosine transform.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import fft as sfft
from scipy import ndimage

from matproc.model import MaterialMaps

log = logging.getLogger(__name__)

MIN_NZ = 0.05


# ---------------------------------------------------------------------------
# Normal map decode/encode
# ---------------------------------------------------------------------------

def decode_normal_map(rgb: np.ndarray, y_down: bool = False) -> np.ndarray:
    """RGB in [0,1] -> unit normal vectors (H, W, 3) in image frame.

    The image frame has x along columns and y along rows (downward), so for
    the default Y-up file convention the green channel is negated. Vectors
    are renormalized; nz is clamped to at least 0.05 with the tangential
    part rescaled so the result stays exactly unit length.
    """
    n = 2.0 * np.asarray(rgb, dtype=np.float64) - 1.0
    if not y_down:
        n[:, :, 1] = -n[:, :, 1]
    norm = np.linalg.norm(n, axis=2, keepdims=True)
    n = n / np.maximum(norm, 1e-9)
    bad = n[:, :, 2] < MIN_NZ
    if bad.any():
        log.warning("clamping %d normal pixels with nz < %.2f", bad.sum(), MIN_NZ)
        nz = np.maximum(n[:, :, 2], MIN_NZ)
        txy = np.linalg.norm(n[:, :, :2], axis=2)
        scale = np.sqrt(np.maximum(1.0 - nz**2, 0.0)) / np.maximum(txy, 1e-9)
        n[:, :, 0] *= scale
        n[:, :, 1] *= scale
        n[:, :, 2] = nz
    return n


def encode_normal_map(normal: np.ndarray, y_down: bool = False) -> np.ndarray:
    """Inverse of :func:`decode_normal_map`; returns RGB in [0,1]."""
    n = np.array(normal, dtype=np.float64)
    if not y_down:
        n[:, :, 1] = -n[:, :, 1]
    return np.clip(0.5 * (n + 1.0), 0.0, 1.0)


# ---------------------------------------------------------------------------
# Poisson integration (Neumann, DCT-II)
# ---------------------------------------------------------------------------

def _forward_diff_x(h):
    d = np.zeros_like(h)
    d[:, :-1] = h[:, 1:] - h[:, :-1]
    return d


def _forward_diff_y(h):
    d = np.zeros_like(h)
    d[:-1, :] = h[1:, :] - h[:-1, :]
    return d


def divergence(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Discrete divergence adjoint to the forward-difference gradient."""
    d = np.zeros_like(gx)
    d[:, 0] += gx[:, 0]
    d[:, 1:-1] += gx[:, 1:-1] - gx[:, :-2]
    d[:, -1] += -gx[:, -2]
    d[0, :] += gy[0, :]
    d[1:-1, :] += gy[1:-1, :] - gy[:-2, :]
    d[-1, :] += -gy[-2, :]
    return d


def laplacian(h: np.ndarray) -> np.ndarray:
    """Neumann 5-point Laplacian consistent with :func:`divergence`."""
    return divergence(_forward_diff_x(h), _forward_diff_y(h))


def solve_poisson_neumann(gx: np.ndarray, gy: np.ndarray) -> np.ndarray:
    """Mean-free h minimizing ||grad h - g||^2 on the full rectangle.

    The normal equations form the Neumann Laplacian, which the orthonormal
    DCT-II diagonalizes with eigenvalues 2cos(pi k / N) - 2 per axis, so the
    solve is two transforms and a pointwise division. The DC mode is set to
    zero, fixing the free constant of integration at mean zero.
    """
    hgt, wid = gx.shape
    rhs = divergence(gx, gy)
    coeff = sfft.dctn(rhs, type=2, norm="ortho")
    ky = 2.0 * np.cos(np.pi * np.arange(hgt) / hgt) - 2.0
    kx = 2.0 * np.cos(np.pi * np.arange(wid) / wid) - 2.0
    denom = ky[:, None] + kx[None, :]
    denom[0, 0] = 1.0  # DC handled separately
    coeff = coeff / denom
    coeff[0, 0] = 0.0
    return sfft.idctn(coeff, type=2, norm="ortho")


def poisson_residual(h: np.ndarray, gx: np.ndarray, gy: np.ndarray) -> float:
    """max |Lap(h) - div(g)| under the solver's own discrete operators."""
    return float(np.abs(laplacian(h) - divergence(gx, gy)).max())


def height_from_normal(normal: np.ndarray, with_scale: bool = False):
    """Integrate a normal map into a height map in [0,1].

    Parameters
    ----------
    normal : (H, W, 3) unit vectors with nz > 0 (see decode_normal_map)
    with_scale : also return the peak-to-peak amplitude of the raw
        reconstruction, which normal_from_height needs to invert the
        [0,1] rescale.

    Returns
    -------
    h : (H, W) float in [0,1], or (h, scale) when ``with_scale``.
    A flat normal field has no relief to recover; it maps to all 0.5.
    """
    nz = np.maximum(normal[:, :, 2], MIN_NZ)
    gx = -normal[:, :, 0] / nz
    gy = -normal[:, :, 1] / nz
    h = solve_poisson_neumann(gx, gy)
    lo, hi = float(h.min()), float(h.max())
    scale = hi - lo
    if scale < 1e-12:
        h01 = np.full_like(h, 0.5)
        scale = 0.0
    else:
        h01 = (h - lo) / scale
    return (h01, scale) if with_scale else h01


def normal_from_height(h: np.ndarray, amplitude: float = 1.0) -> np.ndarray:
    """Height map -> unit normals, the exact inverse of height_from_normal.

    Gradients use the same forward differences the Poisson solve adjoints,
    so the encoded slope field lies in the solver's range and a round trip
    reproduces the height up to an affine map and float rounding.
    ``amplitude`` converts the [0,1] height values back to physical relief;
    pass the scale stored at ingestion to invert height_from_normal.
    """
    hx = _forward_diff_x(h)
    hy = _forward_diff_y(h)
    n = np.dstack([-amplitude * hx, -amplitude * hy, np.ones_like(h)])
    n /= np.linalg.norm(n, axis=2, keepdims=True)
    return n


# ---------------------------------------------------------------------------
# File I/O
# ---------------------------------------------------------------------------

@dataclass
class LoadedMaterial:
    maps: MaterialMaps
    filled_defaults: list[str] = field(default_factory=list)
    height_amplitude: float = 1.0


def _read_raster(path: Path) -> np.ndarray:
    """One channel file -> float array in [0,1] (PNG 8/16-bit, or raw f32)."""
    if path.suffix == ".raw":
        meta = json.loads(path.with_suffix(".raw.json").read_text())
        arr = np.fromfile(path, dtype=np.float32)
        shape = (meta["height"], meta["width"], meta.get("channels", 1))
        arr = arr.reshape(shape)
        return arr[:, :, 0] if shape[2] == 1 else arr
    try:
        img = Image.open(path)
    except Exception as exc:
        raise IOError(f"cannot read raster {path}: {exc}") from exc
    arr = np.asarray(img)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    elif arr.dtype in (np.uint16, np.int32):
        arr = arr.astype(np.float64) / 65535.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3 and arr.shape[2] == 4:
        arr = arr[:, :, :3]
    return np.clip(arr, 0.0, 1.0)


def _write_png(path: Path, arr: np.ndarray, bits: int = 8) -> None:
    a = np.clip(arr, 0.0, 1.0)
    if bits == 16:
        img = Image.fromarray((a * 65535.0 + 0.5).astype(np.uint16))
    else:
        img = Image.fromarray((a * 255.0 + 0.5).astype(np.uint8))
    img.save(path)


def load_material_ex(directory, y_down: bool = False) -> LoadedMaterial:
    """Load a material map set from a directory.

    Expected files: ``albedo.png`` (or .raw), ``roughness.png``, and either
    ``height.png`` or ``normal.png`` (the latter is converted on the spot).
    Anything else with a known raster suffix becomes an extra channel.
    Missing roughness (or height with no normal) is filled with 0.5 and
    recorded in ``filled_defaults``.
    """
    directory = Path(directory)
    found: dict[str, Path] = {}
    for p in sorted(directory.iterdir()):
        if p.suffix in (".png", ".raw"):
            found.setdefault(p.stem, p)
    if "albedo" not in found:
        raise IOError(f"no albedo raster in {directory}")
    albedo = _read_raster(found["albedo"])
    if albedo.ndim != 3:
        albedo = np.dstack([albedo] * 3)
    shape = albedo.shape[:2]
    filled: list[str] = []
    amplitude = 1.0

    def check(name, arr):
        if arr.shape[:2] != shape:
            raise IOError(
                f"channel {name!r} is {arr.shape[1]}x{arr.shape[0]} but "
                f"'albedo' is {shape[1]}x{shape[0]}"
            )
        return arr

    if "height" in found:
        height = check("height", _read_raster(found["height"]))
        if height.ndim == 3:
            height = height.mean(axis=2)
    elif "normal" in found:
        rgb = check("normal", _read_raster(found["normal"]))
        height, amplitude = height_from_normal(
            decode_normal_map(rgb, y_down=y_down), with_scale=True
        )
    else:
        height = np.full(shape, 0.5)
        filled.append("height")
    if "roughness" in found:
        rough = check("roughness", _read_raster(found["roughness"]))
        if rough.ndim == 3:
            rough = rough.mean(axis=2)
    else:
        rough = np.full(shape, 0.5)
        filled.append("roughness")
        log.warning("no roughness raster in %s; using constant 0.5", directory)

    extras = {}
    for stem, p in found.items():
        if stem in ("albedo", "height", "normal", "roughness"):
            continue
        extras[stem] = check(stem, _read_raster(p))
    maps = MaterialMaps(albedo=albedo, heightmap=height, roughness=rough,
                        extra_channels=extras)
    maps.validate()
    return LoadedMaterial(maps=maps, filled_defaults=filled,
                          height_amplitude=amplitude)


def load_material(directory, y_down: bool = False) -> MaterialMaps:
    return load_material_ex(directory, y_down=y_down).maps


def save_material(maps: MaterialMaps, directory, height_amplitude: float = 1.0,
                  write_normal: bool = False, y_down: bool = False) -> None:
    """Write albedo (8-bit RGB), height (16-bit), roughness (8-bit) and any
    extra channels as PNGs, plus a small JSON manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_png(directory / "albedo.png", maps.albedo, bits=8)
    _write_png(directory / "height.png", maps.heightmap, bits=16)
    _write_png(directory / "roughness.png", maps.roughness, bits=8)
    for name, arr in maps.extra_channels.items():
        _write_png(directory / f"{name}.png", arr, bits=8)
    if write_normal:
        n = normal_from_height(maps.heightmap, amplitude=height_amplitude)
        _write_png(directory / "normal.png", encode_normal_map(n, y_down), bits=8)
    manifest = {
        "width": maps.width,
        "height": maps.height_px,
        "channels": ["albedo", "height", "roughness", *sorted(maps.extra_channels)],
        "height_amplitude": height_amplitude,
    }
    (directory / "maps.json").write_text(json.dumps(manifest, indent=2))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------

def resample_channel(arr: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Bilinear resample of one raster to (H, W), clipped to [0,1]."""
    if arr.shape[:2] == tuple(shape):
        return arr.copy()
    factors = [shape[0] / arr.shape[0], shape[1] / arr.shape[1]]
    if arr.ndim == 3:
        factors.append(1.0)
    out = ndimage.zoom(arr, factors, order=1, mode="nearest", grid_mode=True)
    # zoom can come back one pixel off for extreme ratios; pad/crop defensively
    out = out[: shape[0], : shape[1]]
    return np.clip(out, 0.0, 1.0)


def resample_maps(maps: MaterialMaps, shape: tuple[int, int]) -> MaterialMaps:
    return MaterialMaps(
        albedo=resample_channel(maps.albedo, shape),
        heightmap=resample_channel(maps.heightmap, shape),
        roughness=resample_channel(maps.roughness, shape),
        extra_channels={k: resample_channel(v, shape)
                        for k, v in maps.extra_channels.items()},
    )
