import { ApiClient, ApiError } from "./api.js";
import type { JobInfo } from "./api.js";
import { decodePng, grayValues } from "./png.js";
import { renderParams } from "./params.js";
import { ScribbleView } from "./scribbleView.js";
import { UiSession } from "./session.js";
import type { Channel } from "./session.js";
import { renderTree } from "./tree.js";
import { MAX_LAYERS } from "./palette.js";
import { el } from "./util.js";

const CHANNELS: Channel[] = ["albedo", "height", "roughness", "render"];

function jobLine(job: JobInfo): string {
  const pct = Math.round(job.progress * 100);
  return `${job.action} [${job.state}] ${job.stage} ${pct}%`;
}

class StudioApp {
  private api = new ApiClient("");
  private session = new UiSession(this.api);
  private status!: HTMLElement;
  private jobsBox!: HTMLElement;
  private treeBox!: HTMLElement;
  private paramsBox!: HTMLElement;
  private previewImg!: HTMLImageElement;
  private view!: ScribbleView;
  private light = "0.5,0.5,2.0";
  private lightInputs: HTMLInputElement[] = [];

  async boot(root: HTMLElement): Promise<void> {
    this.buildLayout(root);
    this.session.onJobUpdate = () => this.renderJobs();
    await this.session.refresh();
    const [rows, cols] = this.session.snapshot!.resolution;
    this.view.reset(cols, rows, null);
    await this.showNode(this.session.selectedNode);
    this.redrawTree();
    await this.reloadParams();
  }

  private buildLayout(root: HTMLElement): void {
    const header = el("div", "header");
    header.appendChild(el("span", "title", "matproc studio"));
    this.status = el("span", "status");
    this.jobsBox = el("span", "jobs");
    header.append(this.status, this.jobsBox);

    const main = el("div", "main");
    const left = el("div", "pane tree-pane");
    left.appendChild(el("div", "pane-title", "material tree"));
    this.treeBox = el("div", "tree");
    left.appendChild(this.treeBox);

    const center = el("div", "pane canvas-pane");
    center.appendChild(this.buildCanvasToolbar());
    this.view = new ScribbleView(1, 1, () => this.session.brush);
    center.appendChild(this.view.root);
    center.appendChild(this.buildScribbleActions());

    const right = el("div", "pane side-pane");
    right.appendChild(el("div", "pane-title", "preview"));
    this.previewImg = el("img", "preview") as HTMLImageElement;
    right.appendChild(this.previewImg);
    right.appendChild(this.buildLightRow());
    right.appendChild(el("div", "pane-title", "parameters"));
    this.paramsBox = el("div", "params");
    right.appendChild(this.paramsBox);
    right.appendChild(this.buildGlobalActions());

    main.append(left, center, right);
    root.append(header, main);
  }

  private buildCanvasToolbar(): HTMLElement {
    const bar = el("div", "toolbar");
    for (const ch of CHANNELS) {
      const b = el("button", "tab", ch);
      b.addEventListener("click", () => {
        this.session.setChannel(ch);
        for (const other of bar.querySelectorAll(".tab")) {
          other.classList.toggle("is-active", other === b);
        }
        void this.showNode(this.session.selectedNode);
      });
      if (ch === this.session.channel) b.classList.add("is-active");
      bar.appendChild(b);
    }

    bar.appendChild(el("span", "spacer", "brush"));
    const layer = el("select") as HTMLSelectElement;
    for (let i = 0; i < MAX_LAYERS; i++) {
      const opt = el("option", "", `layer ${i + 1}`) as HTMLOptionElement;
      opt.value = String(i);
      layer.appendChild(opt);
    }
    layer.addEventListener("change", () => {
      this.session.brush.layer = Number(layer.value);
      this.session.brush.erase = false;
    });
    bar.appendChild(layer);

    const radius = el("input") as HTMLInputElement;
    radius.type = "range";
    radius.min = "1";
    radius.max = "24";
    radius.value = String(this.session.brush.radius);
    radius.title = "brush radius";
    radius.addEventListener("input", () => {
      this.session.brush.radius = Number(radius.value);
    });
    bar.appendChild(radius);

    const erase = el("button", "mini", "erase");
    erase.addEventListener("click", () => {
      this.session.brush.erase = !this.session.brush.erase;
      erase.classList.toggle("is-active", this.session.brush.erase);
    });
    bar.appendChild(erase);
    return bar;
  }

  private buildScribbleActions(): HTMLElement {
    const bar = el("div", "toolbar");
    const upload = el("button", "", "upload scribbles");
    upload.addEventListener("click", () => void this.uploadScribbles());
    const clear = el("button", "", "clear");
    clear.addEventListener("click", () => this.view.clear());
    bar.append(upload, clear);
    return bar;
  }

  private buildLightRow(): HTMLElement {
    const row = el("div", "toolbar light-row");
    row.appendChild(el("span", "spacer", "light"));
    const parts = this.light.split(",");
    for (let i = 0; i < 3; i++) {
      const box = el("input", "light-box") as HTMLInputElement;
      box.type = "number";
      box.step = "0.1";
      box.value = parts[i];
      box.addEventListener("change", () => {
        this.light = this.lightInputs.map((b) => b.value).join(",");
        void this.refreshPreview();
      });
      this.lightInputs.push(box);
      row.appendChild(box);
    }
    return row;
  }

  private buildGlobalActions(): HTMLElement {
    const bar = el("div", "toolbar");
    const optimize = el("button", "", "optimize");
    optimize.addEventListener("click", () => {
      void this.guard(async () => {
        await this.session.runJob(() => this.api.postOptimize({}));
        await this.reloadParams();
        await this.refreshPreview();
      });
    });
    const synth = el("button", "", "synthesize");
    synth.addEventListener("click", () => {
      void this.guard(async () => {
        const res = prompt("resolution WxH", "512x512");
        if (!res) return;
        await this.session.runJob(() => this.api.postSynth({ res }));
        this.say(`synthesized ${res}; channels at /synth/...`);
      });
    });
    bar.append(optimize, synth);
    return bar;
  }

  // ---- rendering ----

  private say(text: string): void {
    this.status.textContent = text;
  }

  private renderJobs(): void {
    const lines = [...this.session.pendingJobs.values()].map(jobLine);
    this.jobsBox.textContent = lines.join("  |  ");
    this.redrawTree();
  }

  private redrawTree(): void {
    const snap = this.session.snapshot;
    if (!snap) return;
    renderTree(this.treeBox, snap, this.session.selectedNode, {
      onSelect: (id) => void this.showNode(id),
      onMatte: (id) => void this.runMatte(id),
      onInstanceSplit: (id) => void this.guard(async () => {
        await this.session.runJob(() => this.api.postInstanceSplit(id));
        this.redrawTree();
        this.say(`instance split proposed on #${id}; accept to commit`);
      }),
      onAcceptSplit: (id) => void this.guard(async () => {
        await this.session.mutate(() => this.api.postAcceptSplit(id));
        await this.session.refresh();
        this.redrawTree();
        await this.reloadParams();
      }),
      onProceduralize: (id) => void this.guard(async () => {
        await this.session.runJob(() => this.api.postProceduralize(id));
        this.redrawTree();
        await this.reloadParams();
        await this.refreshPreview();
      }),
      onFitMask: (id) => void this.guard(async () => {
        await this.session.runJob(() => this.api.postFitMask(id));
        this.redrawTree();
        await this.reloadParams();
      }),
    });
  }

  private async showNode(id: number): Promise<void> {
    this.session.selectNode(id);
    const snap = this.session.snapshot!;
    const [rows, cols] = snap.resolution;
    const maskPng = await this.api.getMask(id);
    const gray = grayValues(await decodePng(maskPng));
    const mask = new Uint8Array(gray.length);
    for (let i = 0; i < gray.length; i++) mask[i] = gray[i] > 0.5 ? 1 : 0;
    this.view.reset(cols, rows, mask);
    const url = this.session.channel === "render"
      ? this.api.previewUrl(id, this.light)
      : this.api.mapUrl(id, this.session.channel);
    await this.view.showImage(url);
    this.redrawTree();
    await this.refreshPreview();
  }

  private async refreshPreview(): Promise<void> {
    const bytes = await this.api.getPreview(this.session.selectedNode, this.light);
    this.setPreview(bytes);
  }

  private async reloadParams(): Promise<void> {
    const entries = await this.api.getParams();
    renderParams(this.paramsBox, entries, {
      onEdit: (path, value) => {
        void this.guard(async () => {
          const png = await this.session.mutate(
            () => this.api.postParam(path, value, this.light));
          this.setPreview(png);
        });
      },
    });
  }

  private setPreview(bytes: Uint8Array): void {
    const blob = new Blob([bytes as BlobPart], { type: "image/png" });
    const url = URL.createObjectURL(blob);
    const old = this.previewImg.src;
    this.previewImg.src = url;
    if (old.startsWith("blob:")) URL.revokeObjectURL(old);
  }

  // ---- flows ----

  private async guard(fn: () => Promise<void>): Promise<void> {
    try {
      await fn();
    } catch (err) {
      const msg = err instanceof ApiError
        ? err.message
        : err instanceof Error ? err.message : String(err);
      this.say(`error: ${msg}`);
    }
  }

  private async uploadScribbles(): Promise<void> {
    const grid = this.view.scribbles;
    await this.guard(async () => {
      const out = await this.session.mutate(
        () => this.api.postScribbles(this.session.selectedNode, grid.toPng()));
      await this.session.refresh();
      this.redrawTree();
      this.say(`uploaded scribbles: ${out.layers} layers`);
    });
  }

  private async runMatte(id: number): Promise<void> {
    await this.guard(async () => {
      const layers = this.view.scribbles.layerCounts().size || undefined;
      await this.session.runJob(() => this.api.postMatte(id, { layers }));
      this.redrawTree();
      this.say(`matte proposed on #${id}; accept to commit`);
    });
  }
}

const mount = document.getElementById("app");
if (mount) {
  new StudioApp().boot(mount).catch((err) => {
    console.error(err);
    mount.textContent = `failed to load project: ${err}`;
  });
}
