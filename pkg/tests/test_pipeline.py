"""Plan execution: ordering, determinism, checkpoint-on-failure."""

import numpy as np
import pytest

from matproc.exemplars import two_texture_exemplar, two_texture_scribbles
from matproc.model import (
    MaterialMaps,
    NodeKind,
    RandomSamplingMask,
    RasterMask,
)
from matproc.pipeline import JobStatus, PipelineError, PlanStep, run_pipeline
from matproc.project import load_project, new_project, save_project

FAST_NOISEFIT = {"n_max": 1, "kernel_sizes": (9,), "windows": (32,),
                 "steps": (16,), "base_g_max": 8}


@pytest.fixture()
def two_tex_project():
    maps, _ = two_texture_exemplar(size=96)
    return new_project(maps, seed=3)


def full_plan():
    return [
        PlanStep("matte", 0, {"scribbles": two_texture_scribbles(96)}),
        PlanStep("proceduralize", 1, {"noisefit": FAST_NOISEFIT}),
        PlanStep("proceduralize", 2, {"noisefit": FAST_NOISEFIT}),
        PlanStep("optimize", 0, {"optimizer": {"budget": 2, "resolution": 48},
                                 "loss": {"use_renderings": False,
                                          "n_lights": 0}}),
    ]


def test_empty_plan_is_identity(two_tex_project):
    out = run_pipeline(two_tex_project, [])
    assert out == two_tex_project
    assert out is not two_tex_project  # caller's project never mutated


def test_full_plan_two_textures(two_tex_project):
    statuses = []
    out = run_pipeline(two_tex_project, full_plan(), on_status=statuses.append)
    assert two_tex_project.tree.leaves() == [0]  # input untouched
    leaves = out.tree.leaves()
    assert len(leaves) == 2
    for nid in leaves:
        node = out.tree.node(nid)
        assert node.kind == NodeKind.LEAF
        assert node.payload is not None
    assert out.tree.node(0).kind == NodeKind.MATTING_SPLIT
    assert len(out.loss_history) >= 1
    stages = {s.stage for s in statuses}
    assert {"matting", "noisefit", "graph-optimize"} <= stages
    assert all(s.progress <= 1.0 for s in statuses)


def test_rerun_is_deterministic(two_tex_project, tmp_path):
    a = run_pipeline(two_tex_project, full_plan())
    b = run_pipeline(two_tex_project, full_plan())
    assert a == b
    save_project(a, tmp_path / "a")
    save_project(b, tmp_path / "b")
    for rel in ["project.json", "models/node_1.bin", "models/node_2.bin"]:
        assert (tmp_path / "a" / rel).read_bytes() == \
            (tmp_path / "b" / rel).read_bytes(), rel


def test_steps_sorted_by_dependency_rank(two_tex_project):
    # proceduralize listed before the matte that creates its target node:
    # rank ordering must run the matte first anyway
    plan = [
        PlanStep("proceduralize", 1, {"noisefit": FAST_NOISEFIT}),
        PlanStep("matte", 0, {"scribbles": two_texture_scribbles(96)}),
    ]
    out = run_pipeline(two_tex_project, plan)
    assert out.tree.node(1).payload is not None


def test_failure_leaves_checkpoint(two_tex_project, tmp_path):
    plan = [
        PlanStep("matte", 0, {"scribbles": two_texture_scribbles(96)}),
        PlanStep("proceduralize", 99),  # no such node
    ]
    ckpt_dir = tmp_path / "ckpt"
    with pytest.raises(PipelineError) as err:
        run_pipeline(two_tex_project, plan, checkpoint_dir=ckpt_dir)
    ckpt = err.value.checkpoint
    # the successful matte is in the checkpoint, the failed step is not
    assert len(ckpt.tree.node(0).children) == 2
    assert all(ckpt.tree.node(c).payload is None
               for c in ckpt.tree.node(0).children)
    assert load_project(ckpt_dir) == ckpt


def test_unknown_action_rejected(two_tex_project):
    with pytest.raises(ValueError, match="unknown plan action"):
        run_pipeline(two_tex_project, [PlanStep("frobnicate", 0)])


def test_instance_split_plan():
    size = 96
    albedo = np.full((size, size, 3), 0.2)
    tiles = np.zeros((size, size), bool)
    kinds = np.zeros((size, size), int)
    for r in range(3):
        for c in range(3):
            y, x = 8 + r * 30, 8 + c * 30
            tiles[y: y + 22, x: x + 22] = True
            kind = (r + c) % 2
            kinds[y: y + 22, x: x + 22] = kind
            albedo[y: y + 22, x: x + 22] = (0.8, 0.3, 0.3) if kind else \
                (0.3, 0.3, 0.8)
    maps = MaterialMaps(albedo=albedo, heightmap=np.full((size, size), 0.5),
                        roughness=np.full((size, size), 0.5))
    project = new_project(maps)
    tree = project.tree
    tree.nodes[0].kind = NodeKind.MATTING_SPLIT
    a = tree.add_child(0, tiles)
    b = tree.add_child(0, ~tiles)
    tree.nodes[0].mask_procs = {a.id: RasterMask(raster=tiles),
                                b.id: RasterMask(raster=~tiles)}

    out = run_pipeline(project, [
        PlanStep("instance-split", a.id, {"n_clusters": 2}),
    ])
    node = out.tree.node(a.id)
    assert node.kind == NodeKind.INSTANCE_SPLIT
    assert len(node.children) == 2
    union = np.zeros((size, size), bool)
    for cid in node.children:
        proc = node.mask_procs[cid]
        assert isinstance(proc, RandomSamplingMask)
        assert abs(proc.distribution.sum() - 1.0) < 1e-9
        cmask = out.tree.node(cid).mask
        assert not (union & cmask).any()
        union |= cmask
    assert (union == tiles).all()
    # 5 vs 4 tiles of the two types
    fracs = sorted(out.tree.node(a.id).mask_procs[c].distribution[
        out.tree.node(a.id).mask_procs[c].label] for c in node.children)
    assert fracs == [4 / 9, 5 / 9]


def test_job_status_progress_monotone():
    st = JobStatus(job_id="j", stage="synth")
    st.advance(0.5)
    st.advance(0.3)  # regressions clamp
    assert st.progress == 0.5
    st.advance(2.0)
    assert st.progress == 1.0
