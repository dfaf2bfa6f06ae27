"""Command-line front end.

``matproc`` drives a project directory through the pipeline stages and
synthesis; ``pptbf`` is a standalone tool around the mask generator
database. The project directory defaults to $MATPROC_DATA, then ``.``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .maps_io import load_material, save_material
from .matting import load_scribbles
from .model import NodeKind
from .pipeline import PlanStep, run_pipeline
from .pptbf import (
    OptimizeOptions,
    build_database,
    eval_pptbf,
    load_database,
    optimize_pptbf,
    query_database,
    save_database,
    threshold_field,
)
from .project import load_project, new_project, save_project
from .recompose import RenderConfig, compose_tree, render


def _project_dir(args) -> Path:
    if args.project:
        return Path(args.project)
    return Path(os.environ.get("MATPROC_DATA", "."))


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _load(args):
    return load_project(_project_dir(args))


def _store(args, project) -> None:
    save_project(project, _project_dir(args))


def _parse_res(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
        return h, w
    except ValueError:
        raise SystemExit(f"bad --res {text!r}; expected WxH, e.g. 512x512")


def _write_loss_csv(history, path: Path) -> None:
    rows = ["iteration,loss"] + [f"{i},{v!r}" for i, v in enumerate(history)]
    path.write_text("\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# matproc subcommands
# ---------------------------------------------------------------------------

def cmd_init(args) -> int:
    maps = load_material(args.maps)
    project = new_project(maps, seed=args.seed)
    _store(args, project)
    _say(args, f"initialized project in {_project_dir(args)} "
         f"({maps.width}x{maps.height_px})")
    return 0


def cmd_matte(args) -> int:
    project = _load(args)
    scribbles = load_scribbles(args.scribbles)
    options: dict = {"scribbles": scribbles}
    if args.no_spectrum:
        options["matting"] = {"use_spectrum": False}
    out = run_pipeline(project, [PlanStep("matte", args.node, options)])
    _store(args, out)
    kids = out.tree.node(args.node).children
    _say(args, f"node {args.node} split into {len(kids)} layers: {kids}")
    return 0


def cmd_instances(args) -> int:
    project = _load(args)
    options = {}
    if args.clusters:
        options["n_clusters"] = args.clusters
    out = run_pipeline(project, [PlanStep("instance-split", args.node, options)])
    _store(args, out)
    node = out.tree.node(args.node)
    _say(args, f"node {args.node} split into {len(node.children)} clusters")
    return 0


def cmd_fit(args) -> int:
    project = _load(args)
    plan = []
    nodes = [args.node] if args.node is not None else project.tree.leaves()
    nf = {}
    if args.n_max:
        nf["n_max"] = args.n_max
    for nid in nodes:
        plan.append(PlanStep("proceduralize", nid,
                             {"noisefit": nf, "seed": args.seed}))
    out = run_pipeline(project, plan)
    _store(args, out)
    _say(args, f"proceduralized nodes {nodes}")
    return 0


def cmd_fit_mask(args) -> int:
    project = _load(args)
    options: dict = {}
    if args.db:
        options["database"] = args.db
    else:
        options["database_size"] = args.db_size
    out = run_pipeline(project, [PlanStep("fit-mask", args.node, options)])
    _store(args, out)
    _say(args, f"fitted procedural mask for node {args.node}")
    return 0


def cmd_optimize(args) -> int:
    project = _load(args)
    optimizer = {"budget": args.budget, "seed": args.seed}
    if args.resolution:
        optimizer["resolution"] = args.resolution
    lcfg = {"beta": args.beta}
    out = run_pipeline(project, [PlanStep("optimize", 0,
                                          {"optimizer": optimizer,
                                           "loss": lcfg})])
    _store(args, out)
    csv_path = _project_dir(args) / "loss_curve.csv"
    _write_loss_csv(out.loss_history, csv_path)
    first = out.loss_history[0] if out.loss_history else float("nan")
    best = min(out.loss_history) if out.loss_history else float("nan")
    _say(args, f"loss {first:.5f} -> {best:.5f}; curve in {csv_path}")
    return 0


def cmd_synth(args) -> int:
    project = _load(args)
    res = _parse_res(args.res) if args.res else project.maps.heightmap.shape
    maps = compose_tree(project.tree, res, scale=args.scale, seed=args.seed)
    out_dir = Path(args.out) if args.out else _project_dir(args) / "synth"
    save_material(maps, out_dir)
    _say(args, f"synthesized {maps.width}x{maps.height_px} maps into {out_dir}")
    return 0


def cmd_render(args) -> int:
    project = _load(args)
    try:
        x, y, z = (float(v) for v in args.light.split(","))
    except ValueError:
        raise SystemExit(f"bad --light {args.light!r}; expected x,y,z")
    leaves = project.tree.leaves()
    if all(project.tree.node(n).payload is not None for n in leaves):
        maps = compose_tree(project.tree, project.maps.heightmap.shape,
                            seed=args.seed)
        source = "composed graph"
    else:
        maps = project.maps
        source = "input maps"
    cfg = RenderConfig(light_positions=[(x, y, z)], intensity=args.intensity)
    img = render(maps, cfg)
    out = Path(args.out) if args.out else _project_dir(args) / "render.png"
    from PIL import Image
    Image.fromarray((np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8)).save(out)
    _say(args, f"rendered {source} under light ({x}, {y}, {z}) to {out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    ui_dir = args.ui or os.environ.get("MATPROC_UI") or None
    app = create_app(_project_dir(args), ui_dir=ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="matproc",
        description="inverse procedural modeling of SVBRDF material maps")
    ap.add_argument("--project", help="project directory "
                    "(default: $MATPROC_DATA or .)")
    ap.add_argument("--quiet", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a project from a maps directory")
    p.add_argument("maps", help="directory with albedo/height/roughness PNGs")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_init)

    p = sub.add_parser("matte", help="scribble-driven soft split of a node")
    p.add_argument("node", type=int)
    p.add_argument("--scribbles", required=True, help="indexed PNG of strokes")
    p.add_argument("--no-spectrum", action="store_true",
                   help="drop local-spectrum features")
    p.set_defaults(fn=cmd_matte)

    p = sub.add_parser("instances", help="cluster repeated elements of a node")
    p.add_argument("node", type=int)
    p.add_argument("--clusters", type=int)
    p.set_defaults(fn=cmd_instances)

    p = sub.add_parser("fit", help="fit procedural noise models to leaves")
    p.add_argument("node", type=int, nargs="?")
    p.add_argument("--n-max", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_fit)

    p = sub.add_parser("fit-mask",
                       help="replace a node's stored mask with a fitted "
                            "procedural generator")
    p.add_argument("node", type=int)
    p.add_argument("--db", help="mask database directory")
    p.add_argument("--db-size", type=int, default=300,
                   help="size of the throwaway database when --db is absent")
    p.set_defaults(fn=cmd_fit_mask)

    p = sub.add_parser("optimize", help="polish all graph parameters")
    p.add_argument("--budget", type=int, default=200)
    p.add_argument("--resolution", type=int)
    p.add_argument("--beta", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_optimize)

    p = sub.add_parser("synth", help="compose the graph into maps")
    p.add_argument("--res", help="output size WxH (default: input size)")
    p.add_argument("--scale", type=float, default=1.0,
                   help="spatial extent multiplier (more pattern)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output directory (default: PROJECT/synth)")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("render", help="shade the material under a point light")
    p.add_argument("--light", default="0.5,0.5,2.0", help="x,y,z position")
    p.add_argument("--intensity", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output PNG (default: PROJECT/render.png)")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("serve", help="run the HTTP API")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--ui", help="static browser client directory to mount "
                   "at /ui (default: $MATPROC_UI if set)")
    p.set_defaults(fn=cmd_serve)

    args = ap.parse_args(argv)
    return args.fn(args)


# ---------------------------------------------------------------------------
# pptbf subcommands
# ---------------------------------------------------------------------------

def _load_mask(path) -> np.ndarray:
    from PIL import Image

    arr = np.asarray(Image.open(path).convert("L"), dtype=np.float64) / 255.0
    return arr >= 0.5


def cmd_pptbf_build(args) -> int:
    db = build_database(args.n, seed=args.seed)
    save_database(db, args.out)
    print(f"built {args.n}-record database ({len(db.entry_record)} masks) "
          f"in {args.out}")
    return 0


def cmd_pptbf_query(args) -> int:
    db = load_database(args.db)
    mask = _load_mask(args.mask)
    ranked = query_database(mask, db, top_k=args.top)
    for rank, (params, dist) in enumerate(ranked, 1):
        d = asdict(params)
        for key in ("tiling", "window_shape", "feature_kind"):
            d[key] = d[key].value if hasattr(d[key], "value") else d[key]
        print(json.dumps({"rank": rank, "distance": dist, "params": d}))
    return 0


def cmd_pptbf_fit(args) -> int:
    db = load_database(args.db)
    mask = _load_mask(args.mask)
    init, _ = query_database(mask, db, top_k=1)[0]
    opts = OptimizeOptions(rounds=args.rounds)
    fitted, history = optimize_pptbf(init, mask, opts=opts)
    d = asdict(fitted)
    for key in ("tiling", "window_shape", "feature_kind"):
        d[key] = d[key].value if hasattr(d[key], "value") else d[key]
    doc = {"params": d, "objective": history[-1]}
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2))
        print(f"wrote {args.out} (objective {history[-1]:.5f})")
    else:
        print(json.dumps(doc, indent=2))
    if args.preview:
        from PIL import Image

        field = eval_pptbf(fitted, mask.shape)
        hard = threshold_field(field, fitted.threshold)
        Image.fromarray((hard * 255).astype(np.uint8)).save(args.preview)
        print(f"wrote {args.preview}")
    return 0


def pptbf_main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="pptbf", description="procedural structure-mask toolbox")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-db", help="render and index a mask database")
    p.add_argument("--n", type=int, default=20000, help="parameter records")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_pptbf_build)

    p = sub.add_parser("query", help="rank database masks against a target")
    p.add_argument("--mask", required=True, help="binary mask PNG")
    p.add_argument("--db", required=True)
    p.add_argument("--top", type=int, default=10)
    p.set_defaults(fn=cmd_pptbf_query)

    p = sub.add_parser("fit", help="query then refine parameters on a target")
    p.add_argument("--mask", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--rounds", type=int, default=3)
    p.add_argument("--out", help="write fitted parameters JSON here")
    p.add_argument("--preview", help="write the regenerated mask PNG here")
    p.set_defaults(fn=cmd_pptbf_fit)

    args = ap.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
