"""Directory-backed persistence of the full working state.

Layout: ``project.json`` carries structure and scalars, ``assets/*.png``
the input maps and scribbles, ``models/*.bin`` the fitted numpy blobs
(one file per tree node). The .bin container is a deterministic
concatenation of named arrays in npy format; np.savez is avoided because
zip archives embed timestamps and reruns must produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .maps_io import load_material, save_material
from .matting import load_scribbles, save_scribbles
from .model import (
    ChannelProc,
    ColorBasis,
    FilterParams,
    GaborKernel,
    GaborModel,
    MaskProc,
    MaterialMaps,
    MaterialTree,
    NodeKind,
    NoiseLayerModel,
    PptbfMask,
    PptbfParams,
    RandomSamplingMask,
    RasterMask,
    SubMaterialProc,
    TreeNode,
    validate_tree,
)

__all__ = [
    "PROJECT_VERSION", "Project", "ProjectError", "new_project",
    "save_project", "load_project", "snap_to_png_grid",
]

PROJECT_VERSION = 1


class ProjectError(Exception):
    """Unreadable, incomplete, or incompatible project directory."""


# ---------------------------------------------------------------------------
# Binary blob container
# ---------------------------------------------------------------------------

def _write_blob(path: Path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as fh:
        names = sorted(arrays)
        fh.write(struct.pack("<I", len(names)))
        for name in names:
            nb = name.encode()
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            np.lib.format.write_array(fh, np.ascontiguousarray(arrays[name]),
                                      version=(1, 0))


def _read_blob(path: Path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as fh:
        (count,) = struct.unpack("<I", fh.read(4))
        for _ in range(count):
            (n,) = struct.unpack("<I", fh.read(4))
            name = fh.read(n).decode()
            out[name] = np.lib.format.read_array(fh)
    return out


# ---------------------------------------------------------------------------
# Project value type
# ---------------------------------------------------------------------------

def snap_to_png_grid(maps: MaterialMaps) -> MaterialMaps:
    """Quantize maps onto the PNG storage grid (8-bit color/roughness,
    16-bit height) so a save/load round trip is the identity."""
    def q(a, levels):
        return np.round(np.clip(a, 0, 1) * levels) / levels

    return MaterialMaps(
        albedo=q(maps.albedo, 255),
        heightmap=q(maps.heightmap, 65535),
        roughness=q(maps.roughness, 255),
        extra_channels={k: q(v, 255) for k, v in maps.extra_channels.items()},
    )


def _deep_equal(a, b) -> bool:
    if type(a) is not type(b):
        return False
    if isinstance(a, np.ndarray):
        return a.shape == b.shape and a.dtype == b.dtype and np.array_equal(a, b)
    if isinstance(a, dict):
        return a.keys() == b.keys() and all(_deep_equal(a[k], b[k]) for k in a)
    if isinstance(a, (list, tuple)):
        return len(a) == len(b) and all(map(_deep_equal, a, b))
    if hasattr(a, "__dataclass_fields__"):
        return all(_deep_equal(getattr(a, f), getattr(b, f))
                   for f in a.__dataclass_fields__)
    return a == b


@dataclass
class Project:
    """Everything a session needs: input maps, the decomposition tree with
    fitted payloads, per-node scribbles, optimizer history, configuration
    snapshot, and the stage seeds."""

    maps: MaterialMaps
    tree: MaterialTree
    scribbles: dict[int, np.ndarray] = field(default_factory=dict)
    loss_history: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    version: int = PROJECT_VERSION

    def __eq__(self, other) -> bool:
        if not isinstance(other, Project):
            return NotImplemented
        return _deep_equal(self, other)

    def copy(self) -> "Project":
        return Project(
            maps=self.maps.copy(),
            tree=self.tree.copy(),
            scribbles={k: v.copy() for k, v in self.scribbles.items()},
            loss_history=list(self.loss_history),
            config=json.loads(json.dumps(self.config)),
            seeds=dict(self.seeds),
            version=self.version,
        )


def new_project(maps: MaterialMaps, seed: int = 0) -> Project:
    maps = snap_to_png_grid(maps)
    maps.validate()
    tree = MaterialTree.single_root(maps.heightmap.shape)
    return Project(maps=maps, tree=tree,
                   seeds={"matte": seed, "fit": seed, "synth": seed})


# ---------------------------------------------------------------------------
# JSON codecs for tree structure
# ---------------------------------------------------------------------------

def _mask_proc_to_json(proc: MaskProc, arrays: dict, prefix: str) -> dict:
    if isinstance(proc, PptbfMask):
        p = proc.params
        return {"type": "pptbf", "softness_sigma": proc.softness_sigma,
                "invert": proc.invert,
                "params": {
                    "tiling": p.tiling.value, "k_nearest": p.k_nearest,
                    "window_shape": p.window_shape.value,
                    "feature_kind": p.feature_kind.value,
                    "jitter": p.jitter, "cells_per_axis": p.cells_per_axis,
                    "window_falloff": p.window_falloff,
                    "feature_freq": p.feature_freq,
                    "feature_phase": p.feature_phase,
                    "anisotropy": p.anisotropy, "rotation": p.rotation,
                    "warp_amp": p.warp_amp, "warp_freq": p.warp_freq,
                    "threshold": p.threshold, "seed": p.seed,
                }}
    if isinstance(proc, RandomSamplingMask):
        return {"type": "random", "softness_sigma": proc.softness_sigma,
                "distribution": [float(v) for v in proc.distribution],
                "label": int(proc.label)}
    if isinstance(proc, RasterMask):
        arrays[f"{prefix}/raster"] = proc.raster
        return {"type": "raster", "softness_sigma": proc.softness_sigma}
    raise ProjectError(f"unknown mask proc type {type(proc).__name__}")


def _mask_proc_from_json(d: dict, arrays: dict, prefix: str) -> MaskProc:
    kind = d["type"]
    if kind == "pptbf":
        p = d["params"]
        from .model import FeatureKind, Tiling, WindowShape
        params = PptbfParams(
            tiling=Tiling(p["tiling"]), k_nearest=p["k_nearest"],
            window_shape=WindowShape(p["window_shape"]),
            feature_kind=FeatureKind(p["feature_kind"]),
            jitter=p["jitter"], cells_per_axis=p["cells_per_axis"],
            window_falloff=p["window_falloff"],
            feature_freq=p["feature_freq"], feature_phase=p["feature_phase"],
            anisotropy=p["anisotropy"], rotation=p["rotation"],
            warp_amp=p["warp_amp"], warp_freq=p["warp_freq"],
            threshold=p["threshold"], seed=p["seed"],
        )
        return PptbfMask(softness_sigma=d["softness_sigma"], params=params,
                         invert=d["invert"])
    if kind == "random":
        return RandomSamplingMask(
            softness_sigma=d["softness_sigma"],
            distribution=np.array(d["distribution"], dtype=float),
            label=d["label"])
    if kind == "raster":
        return RasterMask(softness_sigma=d["softness_sigma"],
                          raster=arrays[f"{prefix}/raster"])
    raise ProjectError(f"unknown mask proc type {kind!r}")


def _payload_to_json(payload: SubMaterialProc, arrays: dict) -> dict:
    channels = {}
    for name, cp in payload.channels.items():
        layers = []
        for j, lm in enumerate(cp.layers):
            arrays[f"ch/{name}/layer{j}/amplitudes"] = lm.amplitudes
            arrays[f"ch/{name}/layer{j}/valid"] = lm.valid
            layers.append({"window": lm.window, "step": lm.step,
                           "source_shape": list(lm.source_shape),
                           "kernel_size": lm.kernel_size,
                           "layer_index": lm.layer_index})
        if cp.reference_histogram is not None:
            arrays[f"ch/{name}/ref_hist"] = cp.reference_histogram
        bm = cp.base_model
        channels[name] = {
            "layers": layers,
            "base_color": cp.base_color,
            "filter_params": [[fp.alpha, fp.delta, fp.sigma]
                              for fp in cp.filter_params],
            "hist_range": [cp.hist_range[0], cp.hist_range[1]],
            "has_ref_hist": cp.reference_histogram is not None,
            "base_model": {
                "kernels": [[k.freq, k.orientation, k.bandwidth, k.weight]
                            for k in bm.kernels],
                "base_resolution": bm.base_resolution,
                "target_std": bm.target_std,
                "residual_rel_l2": bm.residual_rel_l2,
            },
        }
    out = {"channels": channels}
    if payload.color_basis is not None:
        arrays["color_basis/basis"] = payload.color_basis.basis
        arrays["color_basis/mean"] = payload.color_basis.mean
        out["has_color_basis"] = True
    else:
        out["has_color_basis"] = False
    return out


def _payload_from_json(d: dict, arrays: dict) -> SubMaterialProc:
    channels = {}
    for name, cd in d["channels"].items():
        layers = []
        for j, ld in enumerate(cd["layers"]):
            layers.append(NoiseLayerModel(
                window=ld["window"], step=ld["step"],
                amplitudes=arrays[f"ch/{name}/layer{j}/amplitudes"],
                valid=arrays[f"ch/{name}/layer{j}/valid"],
                source_shape=tuple(ld["source_shape"]),
                kernel_size=ld["kernel_size"],
                layer_index=ld["layer_index"]))
        bm = cd["base_model"]
        base_model = GaborModel(
            kernels=[GaborKernel(freq=k[0], orientation=k[1], bandwidth=k[2],
                                 weight=k[3]) for k in bm["kernels"]],
            base_resolution=bm["base_resolution"],
            target_std=bm["target_std"],
            residual_rel_l2=bm["residual_rel_l2"])
        channels[name] = ChannelProc(
            layers=layers,
            base_model=base_model,
            base_color=cd["base_color"],
            filter_params=[FilterParams(alpha=t[0], delta=t[1], sigma=t[2])
                           for t in cd["filter_params"]],
            reference_histogram=(arrays[f"ch/{name}/ref_hist"]
                                 if cd["has_ref_hist"] else None),
            hist_range=tuple(cd["hist_range"]))
    basis = None
    if d["has_color_basis"]:
        basis = ColorBasis(basis=arrays["color_basis/basis"],
                           mean=arrays["color_basis/mean"])
    return SubMaterialProc(channels=channels, color_basis=basis)


# ---------------------------------------------------------------------------
# Save / load
# ---------------------------------------------------------------------------

def save_project(project: Project, directory) -> None:
    directory = Path(directory)
    (directory / "assets").mkdir(parents=True, exist_ok=True)
    (directory / "models").mkdir(parents=True, exist_ok=True)
    save_material(project.maps, directory / "assets" / "input")
    for nid, labels in sorted(project.scribbles.items()):
        save_scribbles(labels, directory / "assets" / f"scribbles_{nid}.png")

    nodes_json = []
    for nid in sorted(project.tree.nodes):
        node = project.tree.nodes[nid]
        arrays: dict[str, np.ndarray] = {"mask": node.mask}
        procs = {}
        for cid in sorted(node.mask_procs):
            procs[str(cid)] = _mask_proc_to_json(node.mask_procs[cid], arrays,
                                                 f"maskproc/{cid}")
        entry = {"id": nid, "kind": node.kind.value,
                 "children": list(node.children), "mask_procs": procs,
                 "has_payload": node.payload is not None}
        if node.payload is not None:
            entry["payload"] = _payload_to_json(node.payload, arrays)
        nodes_json.append(entry)
        _write_blob(directory / "models" / f"node_{nid}.bin", arrays)

    doc = {
        "version": project.version,
        "seeds": project.seeds,
        "config": project.config,
        "loss_history": [float(v) for v in project.loss_history],
        "tree": {"root_id": project.tree.root_id,
                 "next_id": project.tree.next_id,
                 "nodes": nodes_json},
        "scribble_nodes": sorted(project.scribbles),
    }
    tmp = directory / "project.json.tmp"
    tmp.write_text(json.dumps(doc, indent=1, sort_keys=True))
    tmp.replace(directory / "project.json")


def load_project(directory) -> Project:
    directory = Path(directory)
    doc_path = directory / "project.json"
    if not doc_path.exists():
        raise ProjectError(f"missing project file {doc_path}")
    doc = json.loads(doc_path.read_text())
    if doc.get("version") != PROJECT_VERSION:
        raise ProjectError(
            f"project version {doc.get('version')} is not supported "
            f"(this build reads version {PROJECT_VERSION})")

    input_dir = directory / "assets" / "input"
    for fname in ("albedo.png", "height.png", "roughness.png"):
        if not (input_dir / fname).exists():
            raise ProjectError(f"missing asset file {input_dir / fname}")
    maps = load_material(input_dir)

    tree = MaterialTree(nodes={}, root_id=doc["tree"]["root_id"],
                        next_id=doc["tree"]["next_id"])
    for entry in doc["tree"]["nodes"]:
        nid = entry["id"]
        blob_path = directory / "models" / f"node_{nid}.bin"
        if not blob_path.exists():
            raise ProjectError(f"missing model file {blob_path}")
        arrays = _read_blob(blob_path)
        procs = {int(cid): _mask_proc_from_json(pd, arrays, f"maskproc/{cid}")
                 for cid, pd in entry["mask_procs"].items()}
        payload = None
        if entry["has_payload"]:
            payload = _payload_from_json(entry["payload"], arrays)
        tree.nodes[nid] = TreeNode(id=nid, kind=NodeKind(entry["kind"]),
                                   mask=arrays["mask"],
                                   children=list(entry["children"]),
                                   payload=payload, mask_procs=procs)
    validate_tree(tree)

    scribbles = {}
    for nid in doc["scribble_nodes"]:
        spath = directory / "assets" / f"scribbles_{nid}.png"
        if not spath.exists():
            raise ProjectError(f"missing asset file {spath}")
        scribbles[int(nid)] = load_scribbles(spath)

    return Project(maps=maps, tree=tree, scribbles=scribbles,
                   loss_history=list(doc["loss_history"]),
                   config=doc["config"],
                   seeds={k: int(v) for k, v in doc["seeds"].items()},
                   version=int(doc["version"]))
