"""Shared data model: material rasters, the decomposition tree, procedural
payloads, and the flat parameter vector used by the graph optimizer.

Everything here is a plain value type. Operations are pure; mutation of a
tree goes through copy-and-replace so concurrent readers stay safe.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Iterator

import numpy as np


class TreeError(Exception):
    """Structural problem in a material tree (cycle, orphan, bad partition)."""


class ParamError(Exception):
    """Parameter vector does not match the tree or violates bounds."""


# ---------------------------------------------------------------------------
# Material maps
# ---------------------------------------------------------------------------

@dataclass
class MaterialMaps:
    """Aligned SVBRDF rasters, all float arrays in [0, 1] at one resolution.

    ``albedo`` is (H, W, 3); ``heightmap`` and ``roughness`` are (H, W).
    ``extra_channels`` holds optional named scalar or RGB rasters. The
    heightmap is the canonical relief channel; normal maps are converted on
    ingestion and never appear downstream.
    """

    albedo: np.ndarray
    heightmap: np.ndarray
    roughness: np.ndarray
    extra_channels: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def height_px(self) -> int:
        return int(self.albedo.shape[0])

    @property
    def width(self) -> int:
        return int(self.albedo.shape[1])

    def validate(self) -> None:
        shape = self.albedo.shape[:2]
        if self.albedo.ndim != 3 or self.albedo.shape[2] != 3:
            raise ValueError("albedo must be (H, W, 3)")
        named = {"heightmap": self.heightmap, "roughness": self.roughness}
        named.update(self.extra_channels)
        for name, arr in named.items():
            if arr.shape[:2] != shape:
                raise ValueError(
                    f"channel {name!r} has shape {arr.shape[:2]}, albedo has {shape}"
                )
        for name, arr in [("albedo", self.albedo)] + list(named.items()):
            if not np.isfinite(arr).all():
                raise ValueError(f"channel {name!r} contains non-finite values")
            if arr.min() < -1e-9 or arr.max() > 1 + 1e-9:
                raise ValueError(f"channel {name!r} outside [0, 1]")

    def scalar_channels(self) -> dict[str, np.ndarray]:
        """All scalar rasters by name (RGB extras are split per component)."""
        out = {"height": self.heightmap, "roughness": self.roughness}
        for name, arr in self.extra_channels.items():
            if arr.ndim == 2:
                out[name] = arr
            else:
                for c in range(arr.shape[2]):
                    out[f"{name}_{c}"] = arr[:, :, c]
        return out

    def copy(self) -> "MaterialMaps":
        return MaterialMaps(
            albedo=self.albedo.copy(),
            heightmap=self.heightmap.copy(),
            roughness=self.roughness.copy(),
            extra_channels={k: v.copy() for k, v in self.extra_channels.items()},
        )


# ---------------------------------------------------------------------------
# Procedural payloads
# ---------------------------------------------------------------------------

@dataclass
class NoiseLayerModel:
    """Sliding-window random-phase model of one band-passed noise layer.

    ``amplitudes`` has shape (gh, gw, T, T): the FFT amplitude of each
    analysis window on a grid with stride ``step``. The DC bin of every
    window is zero. ``valid`` flags grid slots whose window was estimated
    from actual data (invalid slots inherit their nearest valid spectrum at
    fit time and are flagged here for inspection).
    """

    window: int
    step: int
    amplitudes: np.ndarray
    valid: np.ndarray
    source_shape: tuple[int, int]
    kernel_size: int
    layer_index: int = 0


@dataclass
class GaborKernel:
    freq: float          # cycles per pixel at base_resolution
    orientation: float   # radians
    bandwidth: float     # Gaussian envelope sigma in pixels
    weight: float        # non-negative power weight


@dataclass
class GaborModel:
    """Sparse Gabor basis approximating a target power spectrum."""

    kernels: list[GaborKernel] = field(default_factory=list)
    base_resolution: int = 128
    target_std: float = 0.0
    residual_rel_l2: float = 1.0


@dataclass
class ColorBasis:
    """Orthonormal 3x3 PCA basis + mean used to decorrelate albedo."""

    basis: np.ndarray  # (3, 3), rows are components
    mean: np.ndarray   # (3,)


@dataclass
class FilterParams:
    """Optimizable gain/bias/blur triple applied to one synthesized layer."""

    alpha: float = 1.0
    delta: float = 0.0
    sigma: float = 0.0


FILTER_BOUNDS = {"alpha": (0.0, 4.0), "delta": (-1.0, 1.0), "sigma": (0.0, 16.0)}
SOFTNESS_BOUNDS = (0.0, 32.0)


@dataclass
class ChannelProc:
    """Procedural model of one scalar channel of a sub-material."""

    layers: list[NoiseLayerModel] = field(default_factory=list)
    base_model: GaborModel = field(default_factory=GaborModel)
    base_color: float = 0.0
    filter_params: list[FilterParams] = field(default_factory=list)
    reference_histogram: np.ndarray | None = None
    hist_range: tuple = (0.0, 1.0)  # value span the histogram bins cover

    def validate(self) -> None:
        # one gain/bias/blur triple per noise layer; the base layer is added
        # unfiltered so that a uniform rescale of the gains stays observable
        # through histogram matching (matching absorbs rank-preserving maps)
        if len(self.filter_params) != len(self.layers):
            raise ValueError(
                f"filter_params has {len(self.filter_params)} entries for "
                f"{len(self.layers)} layers; expected one per layer"
            )


@dataclass
class SubMaterialProc:
    """Per-channel multi-layer noise models plus the albedo color basis."""

    channels: dict[str, ChannelProc] = field(default_factory=dict)
    color_basis: ColorBasis | None = None

    def channel_order(self) -> list[str]:
        return sorted(self.channels)

    def validate(self) -> None:
        for proc in self.channels.values():
            proc.validate()


# ---------------------------------------------------------------------------
# PPTBF parameters (payload of procedural mask generators)
# ---------------------------------------------------------------------------

class Tiling(str, Enum):
    REGULAR = "regular"
    JITTERED = "jittered"
    HEX = "hex"
    STRATIFIED = "stratified"


class WindowShape(str, Enum):
    GAUSSIAN = "gaussian"
    TENT = "tent"
    CELLULAR = "cellular"


class FeatureKind(str, Enum):
    CONSTANT = "constant"
    RADIAL = "radial"
    STRIPES = "stripes"


PPTBF_CONTINUOUS_BOUNDS = {
    "jitter": (0.0, 1.0),
    "cells_per_axis": (2.0, 32.0),
    "window_falloff": (1e-3, 2.0),
    "feature_freq": (0.0, 8.0),
    "feature_phase": (0.0, 2.0 * np.pi),
    "anisotropy": (0.25, 4.0),
    "rotation": (0.0, np.pi),
    "warp_amp": (0.0, 0.2),
    "warp_freq": (1.0, 8.0),
    "threshold": (0.0, 1.0),
}


@dataclass
class PptbfParams:
    """Discrete + continuous parameters of one procedural mask generator."""

    tiling: Tiling = Tiling.JITTERED
    k_nearest: int = 1
    window_shape: WindowShape = WindowShape.GAUSSIAN
    feature_kind: FeatureKind = FeatureKind.CONSTANT
    jitter: float = 0.5
    cells_per_axis: float = 8.0
    window_falloff: float = 1.0
    feature_freq: float = 0.0
    feature_phase: float = 0.0
    anisotropy: float = 1.0
    rotation: float = 0.0
    warp_amp: float = 0.0
    warp_freq: float = 2.0
    threshold: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.k_nearest not in (1, 2, 3, 4):
            raise ValueError(f"k_nearest must be 1..4, got {self.k_nearest}")
        for name, (lo, hi) in PPTBF_CONTINUOUS_BOUNDS.items():
            v = getattr(self, name)
            if not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")

    def continuous_vector(self) -> np.ndarray:
        return np.array(
            [getattr(self, k) for k in PPTBF_CONTINUOUS_BOUNDS], dtype=float
        )

    def with_continuous(self, vec: np.ndarray) -> "PptbfParams":
        kwargs = dict(zip(PPTBF_CONTINUOUS_BOUNDS, (float(v) for v in vec)))
        return replace(self, **kwargs)


# ---------------------------------------------------------------------------
# Mask procedures
# ---------------------------------------------------------------------------

@dataclass(kw_only=True)
class MaskProc:
    """How an interior node regenerates one child's mask procedurally."""

    softness_sigma: float = 0.0

    def validate(self) -> None:
        if self.softness_sigma < 0:
            raise ValueError("softness_sigma must be >= 0")


@dataclass(kw_only=True)
class PptbfMask(MaskProc):
    params: PptbfParams = field(default_factory=PptbfParams)
    invert: bool = False  # sibling side of a binary split shares the params

    def validate(self) -> None:
        super().validate()
        self.params.validate()


@dataclass(kw_only=True)
class RandomSamplingMask(MaskProc):
    """Instance-cluster mask: the child owns instances drawn with ``label``."""

    distribution: np.ndarray = field(default_factory=lambda: np.array([1.0]))
    label: int = 0

    def validate(self) -> None:
        super().validate()
        d = np.asarray(self.distribution, dtype=float)
        if d.ndim != 1 or d.size == 0 or (d < 0).any():
            raise ValueError("distribution must be a non-negative vector")
        if abs(d.sum() - 1.0) > 1e-6:
            raise ValueError("distribution must sum to 1")
        if not 0 <= self.label < d.size:
            raise ValueError("label outside distribution range")


@dataclass(kw_only=True)
class RasterMask(MaskProc):
    """Non-procedural fallback: the stored binary raster itself."""

    raster: np.ndarray = field(default_factory=lambda: np.zeros((1, 1), bool))


# ---------------------------------------------------------------------------
# Tree
# ---------------------------------------------------------------------------

class NodeKind(str, Enum):
    ROOT = "root"
    MATTING_SPLIT = "matting_split"
    INSTANCE_SPLIT = "instance_split"
    LEAF = "leaf"


@dataclass
class TreeNode:
    id: int
    kind: NodeKind
    mask: np.ndarray  # bool (H, W): region of the frame this node occupies
    children: list[int] = field(default_factory=list)
    payload: SubMaterialProc | None = None
    mask_procs: dict[int, MaskProc] = field(default_factory=dict)  # child id -> proc

    @property
    def is_leaf(self) -> bool:
        return not self.children


@dataclass
class MaterialTree:
    nodes: dict[int, TreeNode] = field(default_factory=dict)
    root_id: int = 0
    next_id: int = 1

    @classmethod
    def single_root(cls, shape: tuple[int, int]) -> "MaterialTree":
        root = TreeNode(id=0, kind=NodeKind.ROOT, mask=np.ones(shape, dtype=bool))
        return cls(nodes={0: root}, root_id=0, next_id=1)

    def node(self, node_id: int) -> TreeNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise TreeError(f"no node with id {node_id}") from None

    def add_child(self, parent_id: int, mask: np.ndarray,
                  kind: NodeKind = NodeKind.LEAF) -> TreeNode:
        """Append a child under ``parent_id``; ids are sequential at creation."""
        parent = self.node(parent_id)
        child = TreeNode(id=self.next_id, kind=kind, mask=mask.astype(bool))
        self.nodes[child.id] = child
        parent.children.append(child.id)
        self.next_id += 1
        return child

    def parent_of(self, node_id: int) -> int | None:
        for nid, node in self.nodes.items():
            if node_id in node.children:
                return nid
        return None

    def leaves(self) -> list[int]:
        return [nid for nid in traverse_bottom_up(self) if self.nodes[nid].is_leaf]

    def copy(self) -> "MaterialTree":
        return copy.deepcopy(self)


def validate_tree(tree: MaterialTree) -> None:
    """Check structural invariants; raises :class:`TreeError` on violation.

    - every node is reachable from the root exactly once (no cycles, no
      orphans, no shared children)
    - interior nodes have >= 2 children, each with a mask proc
    - child masks are subsets of the parent mask and partition it exactly
    """
    if tree.root_id not in tree.nodes:
        raise TreeError("root id missing from node table")
    seen: set[int] = set()
    stack = [tree.root_id]
    while stack:
        nid = stack.pop()
        if nid in seen:
            raise TreeError(f"node {nid} reached twice (cycle or shared child)")
        seen.add(nid)
        node = tree.node(nid)
        if node.children:
            if len(node.children) < 2:
                raise TreeError(f"interior node {nid} has < 2 children")
            child_sum = np.zeros_like(node.mask, dtype=np.int32)
            for cid in node.children:
                child = tree.node(cid)
                if child.mask.shape != node.mask.shape:
                    raise TreeError(f"mask shape mismatch at node {cid}")
                if np.any(child.mask & ~node.mask):
                    raise TreeError(f"child {cid} mask escapes parent {nid}")
                child_sum += child.mask.astype(np.int32)
                stack.append(cid)
            if np.any(child_sum > 1):
                raise TreeError(f"children of {nid} overlap")
            if np.any((child_sum == 1) != node.mask):
                raise TreeError(f"children of {nid} do not cover the parent mask")
        elif node.kind in (NodeKind.MATTING_SPLIT, NodeKind.INSTANCE_SPLIT):
            raise TreeError(f"split node {nid} has no children")
    orphans = set(tree.nodes) - seen
    if orphans:
        raise TreeError(f"orphan nodes not reachable from root: {sorted(orphans)}")


def traverse_bottom_up(tree: MaterialTree,
                       visitor: Callable[[TreeNode], None] | None = None
                       ) -> list[int]:
    """Post-order traversal: every child before its parent, children in
    stored order. Returns the visit order; optionally calls ``visitor`` on
    each node as it is visited. Malformed trees raise :class:`TreeError`.
    """
    order: list[int] = []
    on_path: set[int] = set()

    def visit(nid: int) -> None:
        if nid in on_path:
            raise TreeError(f"cycle through node {nid}")
        on_path.add(nid)
        node = tree.node(nid)
        for cid in node.children:
            visit(cid)
        on_path.discard(nid)
        order.append(nid)
        if visitor is not None:
            visitor(node)

    visit(tree.root_id)
    if len(order) != len(tree.nodes):
        orphans = sorted(set(tree.nodes) - set(order))
        raise TreeError(f"orphan nodes not reachable from root: {orphans}")
    return order


# ---------------------------------------------------------------------------
# Parameter vector
# ---------------------------------------------------------------------------

@dataclass
class ParamEntry:
    node_id: int
    path: str          # e.g. "payload/height/filter/2/alpha" or "mask/3/softness"
    value: float
    lo: float
    hi: float


@dataclass
class ParamVector:
    entries: list[ParamEntry] = field(default_factory=list)

    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.entries], dtype=float)

    def bounds(self) -> list[tuple[float, float]]:
        return [(e.lo, e.hi) for e in self.entries]

    def with_values(self, values: np.ndarray) -> "ParamVector":
        if len(values) != len(self.entries):
            raise ParamError(
                f"value vector has {len(values)} entries, expected {len(self.entries)}"
            )
        entries = [replace(e, value=float(v)) for e, v in zip(self.entries, values)]
        return ParamVector(entries)

    def __len__(self) -> int:
        return len(self.entries)


def _iter_param_slots(tree: MaterialTree) -> Iterator[tuple[int, str, float, float, float]]:
    # Deterministic order: nodes by id, channels alphabetically, layers in
    # order (base triple last), then per-child mask softness by child id.
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if node.payload is not None:
            for cname in node.payload.channel_order():
                proc = node.payload.channels[cname]
                for li, fp in enumerate(proc.filter_params):
                    for pname in ("alpha", "delta", "sigma"):
                        lo, hi = FILTER_BOUNDS[pname]
                        yield (nid, f"payload/{cname}/filter/{li}/{pname}",
                               getattr(fp, pname), lo, hi)
        for cid in sorted(node.mask_procs):
            proc = node.mask_procs[cid]
            lo, hi = SOFTNESS_BOUNDS
            yield (nid, f"mask/{cid}/softness", proc.softness_sigma, lo, hi)


def flatten_params(tree: MaterialTree) -> ParamVector:
    """Collect every optimizable scalar (filter triples + mask softness)
    into a flat vector with stable ordering and per-entry bounds."""
    entries = [ParamEntry(nid, path, v, lo, hi)
               for nid, path, v, lo, hi in _iter_param_slots(tree)]
    return ParamVector(entries)


def unflatten_params(tree: MaterialTree, vector: ParamVector) -> MaterialTree:
    """Write ``vector`` back into a copy of ``tree``.

    The vector must match the tree slot-for-slot; values outside their
    declared bounds raise :class:`ParamError` (callers clip first).
    """
    slots = list(_iter_param_slots(tree))
    if len(slots) != len(vector.entries):
        raise ParamError(
            f"vector has {len(vector.entries)} entries, tree has {len(slots)} slots"
        )
    out = tree.copy()
    for (nid, path, _, lo, hi), entry in zip(slots, vector.entries):
        if (entry.node_id, entry.path) != (nid, path):
            raise ParamError(
                f"entry {entry.node_id}:{entry.path} does not match slot {nid}:{path}"
            )
        if not lo - 1e-12 <= entry.value <= hi + 1e-12:
            raise ParamError(
                f"{path} value {entry.value} outside bounds [{lo}, {hi}]"
            )
        _assign_param(out, nid, path, float(np.clip(entry.value, lo, hi)))
    return out


def _assign_param(tree: MaterialTree, node_id: int, path: str, value: float) -> None:
    node = tree.node(node_id)
    parts = path.split("/")
    if parts[0] == "payload":
        _, cname, _, li, pname = parts
        proc = node.payload.channels[cname]
        setattr(proc.filter_params[int(li)], pname, value)
    elif parts[0] == "mask":
        _, cid, _ = parts
        node.mask_procs[int(cid)].softness_sigma = value
    else:
        raise ParamError(f"unknown parameter path {path!r}")


def set_param(tree: MaterialTree, node_id: int, path: str, value: float) -> MaterialTree:
    """Point edit of one optimizable scalar by path; returns a new tree.

    Values are clamped to the slot bounds (editing UI contract; the
    optimizer uses :func:`unflatten_params`, which errors instead).
    """
    for nid, p, _, lo, hi in _iter_param_slots(tree):
        if nid == node_id and p == path:
            out = tree.copy()
            _assign_param(out, nid, p, float(np.clip(value, lo, hi)))
            return out
    raise ParamError(f"node {node_id} has no parameter {path!r}")
