"""Plan-driven orchestration: decompose, proceduralize, fit masks,
optimize, synthesize, with checkpoint-consistent failure handling.

A plan is an ordered list of PlanStep records. Steps are re-sorted into
dependency rank (structure edits before fitting before optimization
before synthesis) but keep their relative order within a rank. Every
stage draws its randomness from the project's stored seeds, so rerunning
a plan on the same input reproduces the same project bytes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instances import (
    cluster_instances,
    extract_instances,
    instance_features,
    occurrence_distribution,
    split_mask_by_clusters,
)
from .maps_io import save_material
from .matting import MattingConfig, rematte_subregion
from .model import (
    MaterialTree,
    NodeKind,
    PptbfMask,
    RandomSamplingMask,
    RasterMask,
    validate_tree,
)
from .noisefit import NoisefitConfig, proceduralize_submaterial
from .pptbf import (
    OptimizeOptions,
    PptbfDatabase,
    build_database,
    load_database,
    optimize_pptbf,
    query_database,
)
from .project import Project, save_project
from .recompose import LossConfig, OptimizeGraphOptions, compose_tree, optimize_graph

__all__ = ["PlanStep", "JobStatus", "PipelineError", "run_pipeline"]


class PipelineError(Exception):
    """A stage failed; ``checkpoint`` holds the last consistent project."""

    def __init__(self, message: str, checkpoint: Project):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class PlanStep:
    action: str              # matte | instance-split | proceduralize | fit-mask | optimize | synth
    node_id: int = 0
    options: dict = field(default_factory=dict)


@dataclass
class JobStatus:
    job_id: str
    stage: str
    progress: float = 0.0    # monotone within a job
    messages: list = field(default_factory=list)

    def advance(self, progress: float, message: str | None = None) -> None:
        self.progress = max(self.progress, min(1.0, progress))
        if message:
            self.messages.append(message)


_STAGE_OF = {
    "matte": "matting",
    "instance-split": "instancing",
    "proceduralize": "noisefit",
    "fit-mask": "pptbf-optimize",
    "optimize": "graph-optimize",
    "synth": "synth",
}

_RANK = {"matte": 0, "instance-split": 0, "proceduralize": 1,
         "fit-mask": 2, "optimize": 3, "synth": 4}


def _clear_to_split(tree: MaterialTree, node_id: int, kind: NodeKind) -> None:
    node = tree.node(node_id)
    for cid in list(node.children):
        tree.nodes.pop(cid, None)
    node.children = []
    node.mask_procs = {}
    node.payload = None
    node.kind = kind


def _step_matte(project: Project, step: PlanStep, status: JobStatus) -> None:
    node = project.tree.node(step.node_id)
    scribbles = step.options.get("scribbles")
    if scribbles is None:
        scribbles = project.scribbles.get(step.node_id)
    if scribbles is None:
        raise ValueError(f"node {step.node_id} has no scribbles to matte with")
    scribbles = np.asarray(scribbles)
    project.scribbles[step.node_id] = scribbles.astype(np.int32)
    cfg = MattingConfig(**step.options.get("matting", {}))
    status.advance(0.1, f"matting node {step.node_id}")
    parent_mask = None if step.node_id == project.tree.root_id else node.mask
    alphas, masks = rematte_subregion(project.maps, parent_mask, scribbles, cfg)
    status.advance(0.8, f"{len(masks)} layers")
    _clear_to_split(project.tree, step.node_id, NodeKind.MATTING_SPLIT)
    for mask in masks:
        child = project.tree.add_child(step.node_id, mask)
        node.mask_procs[child.id] = RasterMask(raster=mask)
    validate_tree(project.tree)
    status.advance(1.0)


def _step_instance_split(project: Project, step: PlanStep,
                         status: JobStatus) -> None:
    node = project.tree.node(step.node_id)
    opts = step.options
    instances = extract_instances(node.mask, min_area=opts.get("min_area", 16))
    if not instances:
        raise ValueError(f"node {step.node_id} mask has no instances")
    status.advance(0.3, f"{len(instances)} instances")
    feats = instance_features(instances, project.maps)
    labels = cluster_instances(feats, n_clusters=opts.get("n_clusters"))
    dist = occurrence_distribution(labels)
    child_masks = split_mask_by_clusters(node.mask, instances, labels)
    status.advance(0.8, f"{len(child_masks)} clusters")
    _clear_to_split(project.tree, step.node_id, NodeKind.INSTANCE_SPLIT)
    for lab, mask in enumerate(child_masks):
        child = project.tree.add_child(step.node_id, mask)
        node.mask_procs[child.id] = RandomSamplingMask(distribution=dist,
                                                       label=lab)
    validate_tree(project.tree)
    status.advance(1.0)


def _step_proceduralize(project: Project, step: PlanStep,
                        status: JobStatus) -> None:
    node = project.tree.node(step.node_id)
    if node.children:
        raise ValueError(f"node {step.node_id} is not a leaf")
    cfg = NoisefitConfig(**step.options.get("noisefit", {}))
    seed = int(step.options.get("seed", project.seeds.get("fit", 0)))
    status.advance(0.1, f"fitting node {step.node_id}")
    node.payload = proceduralize_submaterial(project.maps, node.mask, cfg,
                                             seed=seed)
    node.kind = NodeKind.LEAF
    status.advance(1.0)


def _resolve_database(options: dict, status: JobStatus) -> PptbfDatabase:
    db = options.get("database")
    if isinstance(db, PptbfDatabase):
        return db
    if isinstance(db, (str, Path)):
        return load_database(db)
    n = int(options.get("database_size", 300))
    seed = int(options.get("database_seed", 0))
    status.advance(0.05, f"building throwaway {n}-record mask database")
    return build_database(n, seed=seed)


def _step_fit_mask(project: Project, step: PlanStep, status: JobStatus) -> None:
    parent_id = project.tree.parent_of(step.node_id)
    if parent_id is None:
        raise ValueError(f"node {step.node_id} has no parent; nothing to fit")
    parent = project.tree.node(parent_id)
    target = project.tree.node(step.node_id).mask
    db = _resolve_database(step.options, status)
    status.advance(0.3, "querying mask database")
    best, _ = query_database(target, db, top_k=1)[0]
    opts = OptimizeOptions(**step.options.get("optimize", {}))
    status.advance(0.4, "refining mask parameters")
    fitted, history = optimize_pptbf(best, target, valid_mask=parent.mask,
                                     opts=opts)
    parent.mask_procs[step.node_id] = PptbfMask(params=fitted)
    status.advance(1.0, f"objective {history[-1]:.4f}")


def _step_optimize(project: Project, step: PlanStep, status: JobStatus) -> None:
    lcfg = LossConfig(**step.options.get("loss", {}))
    opts = OptimizeGraphOptions(**step.options.get("optimizer", {}))
    status.advance(0.05, "optimizing graph parameters")
    tree, history = optimize_graph(project.tree, project.maps, lcfg, opts)
    project.tree = tree
    project.loss_history = [float(v) for v in history]
    status.advance(1.0, f"loss {history[0]:.4f} -> {min(history):.4f}"
                   if history else "no optimizable parameters")


def _step_synth(project: Project, step: PlanStep, status: JobStatus) -> None:
    res = step.options.get("resolution", project.maps.heightmap.shape)
    scale = float(step.options.get("scale", 1.0))
    seed = int(step.options.get("seed", project.seeds.get("synth", 0)))
    status.advance(0.1, "composing")
    maps = compose_tree(project.tree, res, scale=scale, seed=seed)
    out_dir = step.options.get("out_dir")
    if out_dir:
        save_material(maps, out_dir)
        status.advance(1.0, f"wrote {out_dir}")
    else:
        status.advance(1.0)


_STEP_FN = {
    "matte": _step_matte,
    "instance-split": _step_instance_split,
    "proceduralize": _step_proceduralize,
    "fit-mask": _step_fit_mask,
    "optimize": _step_optimize,
    "synth": _step_synth,
}


def run_pipeline(project: Project, plan: list[PlanStep],
                 on_status=None, checkpoint_dir=None) -> Project:
    """Execute ``plan`` against a copy of ``project``.

    Steps run in dependency rank order (stable within a rank). After each
    completed step the working copy becomes the new checkpoint; with
    ``checkpoint_dir`` set it is also saved to disk. A failing step
    raises :class:`PipelineError` whose ``checkpoint`` attribute (and the
    checkpoint directory, if any) hold the last consistent state.
    """
    for step in plan:
        if step.action not in _STEP_FN:
            raise ValueError(f"unknown plan action {step.action!r}")
    ordered = sorted(plan, key=lambda s: _RANK[s.action])
    checkpoint = project.copy()
    if checkpoint_dir is not None:
        save_project(checkpoint, checkpoint_dir)
    for i, step in enumerate(ordered):
        status = JobStatus(job_id=f"step-{i}", stage=_STAGE_OF[step.action])
        if on_status:
            on_status(status)
        working = checkpoint.copy()
        try:
            _STEP_FN[step.action](working, step, status)
        except Exception as exc:
            status.advance(status.progress,
                           f"{step.action} on node {step.node_id} failed: {exc}")
            if on_status:
                on_status(status)
            raise PipelineError(
                f"step {i} ({step.action}, node {step.node_id}) failed: {exc}",
                checkpoint) from exc
        checkpoint = working
        if checkpoint_dir is not None:
            save_project(checkpoint, checkpoint_dir)
        if on_status:
            on_status(status)
    return checkpoint
