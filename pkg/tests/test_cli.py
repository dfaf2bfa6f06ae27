"""End-to-end runs of both console entry points in-process."""

import json

import numpy as np
import pytest
from PIL import Image

from matproc.cli import main, pptbf_main
from matproc.exemplars import two_texture_exemplar, two_texture_scribbles
from matproc.maps_io import load_material, save_material
from matproc.matting import save_scribbles
from matproc.pptbf import build_database, eval_pptbf, save_database, threshold_field
from matproc.project import load_project


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Project dir initialized from the bundled two-texture maps."""
    root = tmp_path_factory.mktemp("cli")
    maps, _ = two_texture_exemplar(size=64, seed=7)
    maps_dir = root / "maps"
    save_material(maps, maps_dir)
    proj = root / "proj"
    proj.mkdir()
    rc = main(["--quiet", "--project", str(proj), "init", str(maps_dir)])
    assert rc == 0
    return root, proj


def test_init_creates_project(workspace):
    root, proj = workspace
    assert (proj / "project.json").exists()
    assert (proj / "assets" / "input" / "height.png").exists()
    project = load_project(proj)
    assert project.tree.node(project.tree.root_id).children == []


def test_matte_then_fit_then_synth_render(workspace, tmp_path):
    root, proj = workspace
    scrib_png = root / "scribbles.png"
    save_scribbles(two_texture_scribbles(64), scrib_png)

    rc = main(["--quiet", "--project", str(proj),
               "matte", "0", "--scribbles", str(scrib_png)])
    assert rc == 0
    project = load_project(proj)
    kids = project.tree.node(project.tree.root_id).children
    assert len(kids) == 2

    rc = main(["--quiet", "--project", str(proj), "fit", "--n-max", "1"])
    assert rc == 0
    project = load_project(proj)
    for nid in kids:
        assert project.tree.node(nid).payload is not None

    rc = main(["--quiet", "--project", str(proj),
               "optimize", "--budget", "1", "--resolution", "32"])
    assert rc == 0
    csv = (proj / "loss_curve.csv").read_text().splitlines()
    assert csv[0] == "iteration,loss"
    assert len(csv) >= 2

    out = tmp_path / "synth"
    rc = main(["--quiet", "--project", str(proj),
               "synth", "--res", "48x32", "--seed", "3", "--out", str(out)])
    assert rc == 0
    synth = load_material(out)
    assert synth.heightmap.shape == (32, 48)

    render_png = tmp_path / "render.png"
    rc = main(["--quiet", "--project", str(proj),
               "render", "--light", "0.3,0.6,1.5", "--out", str(render_png)])
    assert rc == 0
    img = np.asarray(Image.open(render_png))
    assert img.shape == (64, 64, 3)
    assert img.max() > 0


def test_env_var_selects_project_dir(workspace, monkeypatch, tmp_path):
    root, proj = workspace
    monkeypatch.setenv("MATPROC_DATA", str(proj))
    out = tmp_path / "s2"
    rc = main(["--quiet", "synth", "--out", str(out)])
    assert rc == 0
    assert (out / "albedo.png").exists()


def test_instances_subcommand(tmp_path):
    size = 48
    tile = np.zeros((size, size), dtype=bool)
    for cy in (12, 36):
        half = 2 if cy == 12 else 5  # two distinct blob sizes -> two clusters
        for cx in (12, 36):
            tile[cy - half:cy + half, cx - half:cx + half] = True
    maps, _ = two_texture_exemplar(size=size, seed=1)
    maps_dir = tmp_path / "maps"
    save_material(maps, maps_dir)
    proj = tmp_path / "proj"
    assert main(["--quiet", "--project", str(proj.as_posix()),
                 "init", str(maps_dir)]) == 0
    # paint the root mask pattern through the project file on disk
    project = load_project(proj)
    project.tree.node(project.tree.root_id).mask = tile
    from matproc.project import save_project
    save_project(project, proj)

    rc = main(["--quiet", "--project", str(proj), "instances", "0",
               "--clusters", "2"])
    assert rc == 0
    project = load_project(proj)
    assert len(project.tree.node(project.tree.root_id).children) == 2


def test_bad_res_exits(workspace):
    root, proj = workspace
    with pytest.raises(SystemExit):
        main(["--quiet", "--project", str(proj), "synth", "--res", "foo"])


def test_pptbf_build_query_fit(tmp_path, capsys):
    db_dir = tmp_path / "db"
    assert pptbf_main(["build-db", "--n", "12", "--seed", "3",
                       "--out", str(db_dir)]) == 0
    capsys.readouterr()

    db = build_database(12, seed=3)
    target = threshold_field(eval_pptbf(db.records[4], 128),
                             db.records[4].threshold)
    mask_png = tmp_path / "target.png"
    Image.fromarray((target * 255).astype(np.uint8)).save(mask_png)

    assert pptbf_main(["query", "--mask", str(mask_png),
                       "--db", str(db_dir), "--top", "3"]) == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert len(lines) == 3
    assert lines[0]["rank"] == 1
    assert lines[0]["distance"] <= lines[-1]["distance"]
    assert "threshold" in lines[0]["params"]

    out_json = tmp_path / "fit.json"
    preview = tmp_path / "preview.png"
    assert pptbf_main(["fit", "--mask", str(mask_png), "--db", str(db_dir),
                       "--rounds", "1", "--out", str(out_json),
                       "--preview", str(preview)]) == 0
    doc = json.loads(out_json.read_text())
    assert "params" in doc and np.isfinite(doc["objective"])
    assert Image.open(preview).size == (128, 128)
