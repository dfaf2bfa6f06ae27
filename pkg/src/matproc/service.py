"""HTTP API over a project directory.

One process owns one project. Mutations are serialized through a single
writer (sync edits take a lock, long stages run one at a time on a worker
thread) and every commit is saved to disk before the served state advances,
so a crash never exposes work the disk does not hold. Reads serve the
current snapshot and never wait on a writer.
"""

from __future__ import annotations

import io
import queue
import threading
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np
from fastapi import Body, FastAPI, HTTPException, Request, Response
from PIL import Image

from .maps_io import save_material
from .model import ParamError, TreeError, flatten_params, set_param
from .pipeline import JobStatus, PipelineError, PlanStep, run_pipeline
from .project import Project, load_project, save_project
from .recompose import RenderConfig, compose_tree, render

_CHANNELS = ("albedo", "height", "roughness")


def _png_bytes(arr: np.ndarray, bits: int = 8) -> bytes:
    """Encode [0,1] grayscale or RGB to PNG with round-half-up quantization."""
    arr = np.clip(arr, 0.0, 1.0)
    if bits == 16:
        img = Image.fromarray((arr * 65535.0 + 0.5).astype(np.uint16))
    else:
        img = Image.fromarray((arr * 255.0 + 0.5).astype(np.uint8))
    buf = io.BytesIO()
    img.save(buf, format="PNG")
    return buf.getvalue()


def _parse_light(text: str) -> tuple[float, float, float]:
    try:
        x, y, z = (float(v) for v in text.split(","))
    except ValueError:
        raise HTTPException(422, f"bad light {text!r}; expected x,y,z")
    return x, y, z


@dataclass
class Job:
    job_id: str
    action: str
    status: JobStatus
    state: str = "queued"       # queued | running | done | error
    error: str | None = None
    result: dict = dc_field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "job_id": self.job_id,
            "action": self.action,
            "state": self.state,
            "stage": self.status.stage,
            "progress": self.status.progress,
            "messages": list(self.status.messages),
            "error": self.error,
            "result": self.result,
        }


class ProjectService:
    """State behind the app: committed project, pending splits, job queue."""

    def __init__(self, directory):
        self.directory = directory
        self.project: Project = load_project(directory)
        self.pending: dict[int, Project] = {}
        self.jobs: dict[str, Job] = {}
        self.synth_maps = None
        self._lock = threading.Lock()
        self._queue: queue.Queue = queue.Queue()
        self._worker: threading.Thread | None = None
        self._counter = 0

    # -- write path ---------------------------------------------------------

    def commit(self, project: Project) -> None:
        # disk first, then the served snapshot; readers see old or new, never
        # a state the project file does not contain
        with self._lock:
            save_project(project, self.directory)
            self.project = project

    def enqueue(self, action: str, fn) -> Job:
        with self._lock:
            self._counter += 1
            job = Job(job_id=f"job-{self._counter}", action=action,
                      status=JobStatus(job_id=f"job-{self._counter}",
                                       stage=action))
            self.jobs[job.job_id] = job
            if self._worker is None or not self._worker.is_alive():
                self._worker = threading.Thread(target=self._drain, daemon=True)
                self._worker.start()
        self._queue.put((job, fn))
        return job

    def _drain(self) -> None:
        while True:
            job, fn = self._queue.get()
            job.state = "running"
            try:
                fn(job)
                job.status.advance(1.0, "done")
                job.state = "done"
            except Exception as exc:              # surfaced via GET /jobs
                job.error = str(exc)
                job.state = "error"

    def run_step(self, job: Job, step: PlanStep) -> Project:
        def watch(status: JobStatus) -> None:
            job.status = status

        try:
            return run_pipeline(self.project, [step], on_status=watch)
        except PipelineError as exc:
            raise RuntimeError(str(exc)) from exc

    # -- read path ----------------------------------------------------------

    def node(self, node_id: int):
        try:
            return self.project.tree.node(node_id)
        except TreeError:
            raise HTTPException(404, f"no node {node_id}")

    def composed(self):
        """Current graph rendered to maps, or None while leaves lack models."""
        project = self.project
        tree = project.tree
        if not all(tree.node(n).payload is not None for n in tree.leaves()):
            return None
        cached = getattr(self, "_compose_cache", None)
        if cached is not None and cached[0] is tree:
            return cached[1]
        maps = compose_tree(tree, project.maps.heightmap.shape,
                            seed=project.seeds.get("synth", 0))
        self._compose_cache = (tree, maps)
        return maps


def create_app(directory, ui_dir=None) -> FastAPI:
    """App over a project directory; ui_dir adds the browser client at /ui."""
    svc = ProjectService(directory)
    app = FastAPI(title="matproc")
    app.state.service = svc

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    # ---- reads ----

    @app.get("/project")
    def get_project():
        p = svc.project
        tree = p.tree
        nodes = []
        for nid in sorted(tree.nodes):
            n = tree.nodes[nid]
            nodes.append({
                "id": n.id,
                "kind": n.kind.value,
                "children": list(n.children),
                "parent": tree.parent_of(nid),
                "has_payload": n.payload is not None,
                "mask_area": int(n.mask.sum()),
                "has_scribbles": nid in p.scribbles,
                "pending_split": nid in svc.pending,
            })
        return {
            "version": p.version,
            "root": tree.root_id,
            "nodes": nodes,
            "seeds": p.seeds,
            "config": p.config,
            "loss_history": p.loss_history,
            "resolution": list(p.maps.heightmap.shape),
        }

    @app.get("/params")
    def get_params():
        entries = flatten_params(svc.project.tree).entries
        return [{"node": e.node_id, "path": e.path, "value": e.value,
                 "lo": e.lo, "hi": e.hi} for e in entries]

    @app.get("/node/{node_id}/maps")
    def get_maps_index(node_id: int):
        svc.node(node_id)
        return {"channels": {c: f"/node/{node_id}/maps/{c}" for c in _CHANNELS}}

    @app.get("/node/{node_id}/maps/{channel}")
    def get_map(node_id: int, channel: str):
        node = svc.node(node_id)
        maps = svc.project.maps
        m = node.mask
        if channel == "albedo":
            data, bits = maps.albedo * m[..., None], 8
        elif channel == "height":
            data, bits = maps.heightmap * m, 16
        elif channel == "roughness":
            data, bits = maps.roughness * m, 8
        else:
            raise HTTPException(404, f"no channel {channel!r}")
        return Response(_png_bytes(data, bits), media_type="image/png")

    @app.get("/node/{node_id}/mask")
    def get_mask(node_id: int):
        node = svc.node(node_id)
        return Response(_png_bytes(node.mask.astype(np.float64)),
                        media_type="image/png")

    @app.get("/node/{node_id}/preview")
    def get_preview(node_id: int, light: str = "0.5,0.5,2.0"):
        node = svc.node(node_id)
        pos = _parse_light(light)
        maps = svc.composed() or svc.project.maps
        shaded = render(maps, RenderConfig(light_positions=[pos]))
        img = shaded * node.mask[..., None]
        return Response(_png_bytes(img), media_type="image/png")

    @app.get("/synth/{channel}")
    def get_synth(channel: str):
        if svc.synth_maps is None:
            raise HTTPException(404, "nothing synthesized yet")
        maps = svc.synth_maps
        if channel == "albedo":
            return Response(_png_bytes(maps.albedo), media_type="image/png")
        if channel == "height":
            return Response(_png_bytes(maps.heightmap, 16),
                            media_type="image/png")
        if channel == "roughness":
            return Response(_png_bytes(maps.roughness), media_type="image/png")
        raise HTTPException(404, f"no channel {channel!r}")

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = svc.jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"no job {job_id}")
        return job.to_json()

    # ---- scribbles ----

    @app.post("/node/{node_id}/scribbles")
    async def post_scribbles(node_id: int, request: Request):
        node = svc.node(node_id)
        body = await request.body()
        try:
            img = Image.open(io.BytesIO(body))
        except Exception:
            raise HTTPException(422, "body is not a PNG image")
        if img.mode != "P":
            raise HTTPException(422, "scribbles must be an indexed PNG")
        labels = np.asarray(img, dtype=np.int32) - 1
        if labels.shape != node.mask.shape:
            raise HTTPException(
                422, f"scribble size {labels.shape[::-1]} does not match "
                     f"maps {node.mask.shape[::-1]}")
        if not (labels >= 0).any():
            raise HTTPException(422, "scribbles carry no layer pixels")
        offending = int((labels[~node.mask] >= 0).sum())
        if offending:
            raise HTTPException(422, detail={
                "message": "scribbles outside the node mask",
                "offending": offending,
            })
        project = svc.project.copy()
        project.scribbles[node_id] = labels
        svc.commit(project)
        n_labels = int(len(np.unique(labels[labels >= 0])))
        return {"node": node_id, "layers": n_labels}

    # ---- split proposals ----

    @app.post("/node/{node_id}/matte")
    def post_matte(node_id: int, body: dict = Body(default={})):
        svc.node(node_id)
        if node_id not in svc.project.scribbles:
            raise HTTPException(409, f"node {node_id} has no scribbles")
        labels = svc.project.scribbles[node_id]
        n_labels = int(len(np.unique(labels[labels >= 0])))
        want = body.get("layers")
        if want is not None and int(want) != n_labels:
            raise HTTPException(
                422, f"scribbles define {n_labels} layers, not {want}")
        matting = {}
        if "k" in body:
            matting["k"] = int(body["k"])
        if "use_spectrum" in body:
            matting["use_spectrum"] = bool(body["use_spectrum"])
        for name, value in (body.get("weights") or {}).items():
            if name not in ("color", "height", "roughness", "spectrum"):
                raise HTTPException(422, f"unknown weight {name!r}")
            matting[f"w_{name}"] = float(value)

        def work(job: Job) -> None:
            out = svc.run_step(job, PlanStep("matte", node_id,
                                             {"matting": matting}))
            svc.pending[node_id] = out
            kids = out.tree.node(node_id).children
            job.result = {"children": list(kids), "accepted": False}

        return svc.enqueue("matting", work).to_json()

    @app.post("/node/{node_id}/instance-split")
    def post_instance_split(node_id: int, body: dict = Body(default={})):
        svc.node(node_id)
        options = {}
        if "n_clusters" in body:
            options["n_clusters"] = int(body["n_clusters"])

        def work(job: Job) -> None:
            out = svc.run_step(job, PlanStep("instance-split", node_id, options))
            svc.pending[node_id] = out
            kids = out.tree.node(node_id).children
            job.result = {"children": list(kids), "accepted": False}

        return svc.enqueue("instancing", work).to_json()

    @app.post("/node/{node_id}/accept-split")
    def post_accept_split(node_id: int):
        svc.node(node_id)
        out = svc.pending.pop(node_id, None)
        if out is None:
            raise HTTPException(409, f"node {node_id} has no pending split")
        svc.commit(out)
        return {"node": node_id,
                "children": list(out.tree.node(node_id).children)}

    # ---- committing stages ----

    @app.post("/node/{node_id}/proceduralize")
    def post_proceduralize(node_id: int, body: dict = Body(default={})):
        svc.node(node_id)
        options: dict = {"noisefit": body.get("noisefit", {})}
        if "seed" in body:
            options["seed"] = int(body["seed"])

        def work(job: Job) -> None:
            out = svc.run_step(job, PlanStep("proceduralize", node_id, options))
            svc.commit(out)
            payload = out.tree.node(node_id).payload
            job.result = {"channels": sorted(payload.channels)}

        return svc.enqueue("noisefit", work).to_json()

    @app.post("/node/{node_id}/fit-mask")
    def post_fit_mask(node_id: int, body: dict = Body(default={})):
        svc.node(node_id)
        options = {k: body[k] for k in ("database", "database_size")
                   if k in body}

        def work(job: Job) -> None:
            out = svc.run_step(job, PlanStep("fit-mask", node_id, options))
            svc.commit(out)
            job.result = {"node": node_id}

        return svc.enqueue("pptbf-optimize", work).to_json()

    @app.post("/optimize")
    def post_optimize(body: dict = Body(default={})):
        optimizer = {k: body[k] for k in
                     ("budget", "resolution", "seed") if k in body}
        loss = {}
        if "beta" in body:
            loss["beta"] = float(body["beta"])

        def work(job: Job) -> None:
            out = svc.run_step(job, PlanStep("optimize", svc.project.tree.root_id,
                                             {"optimizer": optimizer,
                                              "loss": loss}))
            svc.commit(out)
            h = out.loss_history
            job.result = {"iterations": len(h),
                          "initial": h[0] if h else None,
                          "best": min(h) if h else None}

        return svc.enqueue("graph-optimize", work).to_json()

    @app.post("/synth")
    def post_synth(body: dict = Body(default={})):
        res = body.get("res")
        if isinstance(res, str):
            try:
                w, h = (int(v) for v in res.lower().split("x"))
            except ValueError:
                raise HTTPException(422, f"bad res {res!r}; expected WxH")
            resolution = (h, w)
        elif isinstance(res, (list, tuple)):
            w, h = (int(v) for v in res)
            resolution = (h, w)
        else:
            resolution = svc.project.maps.heightmap.shape
        scale = float(body.get("scale", 1.0))
        seed = int(body.get("seed", svc.project.seeds.get("synth", 0)))

        def work(job: Job) -> None:
            job.status.advance(0.1, "composing")
            maps = compose_tree(svc.project.tree, resolution,
                                scale=scale, seed=seed)
            save_material(maps, Path(svc.directory) / "synth")
            svc.synth_maps = maps
            job.result = {"res": [resolution[1], resolution[0]],
                          "scale": scale, "seed": seed,
                          "channels": {c: f"/synth/{c}" for c in _CHANNELS}}

        return svc.enqueue("synth", work).to_json()

    # ---- point edits ----

    @app.post("/param")
    def post_param(body: dict = Body(...)):
        path = body.get("path")
        if not isinstance(path, str) or "value" not in body:
            raise HTTPException(422, "body must carry path and value")
        head, _, slot = path.partition("/")
        try:
            node_id = int(head)
        except ValueError:
            raise HTTPException(422, f"path must start with a node id: {path!r}")
        svc.node(node_id)
        project = svc.project.copy()
        try:
            project.tree = set_param(project.tree, node_id, slot,
                                     float(body["value"]))
        except ParamError as exc:
            raise HTTPException(422, str(exc))
        svc.commit(project)
        maps = svc.composed() or project.maps
        light = _parse_light(body.get("light", "0.5,0.5,2.0"))
        shaded = render(maps, RenderConfig(light_positions=[light]))
        return Response(_png_bytes(shaded), media_type="image/png")

    return app
