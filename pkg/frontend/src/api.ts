/** Typed client for the project service. All state lives server-side. */

export interface NodeInfo {
  id: number;
  kind: string;
  children: number[];
  parent: number | null;
  has_payload: boolean;
  mask_area: number;
  has_scribbles: boolean;
  pending_split: boolean;
}

export interface ProjectSnapshot {
  version: number;
  root: number;
  nodes: NodeInfo[];
  seeds: Record<string, number>;
  config: Record<string, unknown>;
  loss_history: number[];
  resolution: [number, number]; // rows, cols
}

export interface ParamEntry {
  node: number;
  path: string;
  value: number;
  lo: number;
  hi: number;
}

export interface JobInfo {
  job_id: string;
  action: string;
  state: "queued" | "running" | "done" | "error";
  stage: string;
  progress: number;
  messages: string[];
  error: string | null;
  result: Record<string, unknown>;
}

export interface MatteOptions {
  layers?: number;
  k?: number;
  use_spectrum?: boolean;
  weights?: { color?: number; height?: number; roughness?: number; spectrum?: number };
}

export class ApiError extends Error {
  readonly status: number;
  readonly detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`HTTP ${status}: ${typeof detail === "string" ? detail : JSON.stringify(detail)}`);
    this.status = status;
    this.detail = detail;
  }
}

type FetchFn = typeof fetch;

export class ApiClient {
  readonly base: string;
  private fetchFn: FetchFn;

  constructor(base = "", fetchFn: FetchFn = fetch) {
    this.base = base.replace(/\/$/, "");
    this.fetchFn = fetchFn;
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    const res = await this.fetchFn(this.base + path, init);
    if (!res.ok) {
      let detail: unknown = res.statusText;
      try {
        const body = await res.json();
        detail = body?.detail ?? body;
      } catch {
        // non-JSON error body; keep the status text
      }
      throw new ApiError(res.status, detail);
    }
    return res;
  }

  private async getJson<T>(path: string): Promise<T> {
    return (await this.request(path)).json();
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const res = await this.request(path, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body ?? {}),
    });
    return res.json();
  }

  getProject(): Promise<ProjectSnapshot> {
    return this.getJson("/project");
  }

  getParams(): Promise<ParamEntry[]> {
    return this.getJson("/params");
  }

  getJob(jobId: string): Promise<JobInfo> {
    return this.getJson(`/jobs/${jobId}`);
  }

  /** Raw PNG bytes of a node's binary mask. */
  async getMask(nodeId: number): Promise<Uint8Array> {
    const res = await this.request(`/node/${nodeId}/mask`);
    return new Uint8Array(await res.arrayBuffer());
  }

  async getPreview(nodeId: number, light?: string): Promise<Uint8Array> {
    const q = light ? `?light=${encodeURIComponent(light)}` : "";
    const res = await this.request(`/node/${nodeId}/preview${q}`);
    return new Uint8Array(await res.arrayBuffer());
  }

  mapUrl(nodeId: number, channel: string): string {
    return `${this.base}/node/${nodeId}/maps/${channel}`;
  }

  previewUrl(nodeId: number, light?: string): string {
    const q = light ? `?light=${encodeURIComponent(light)}` : "";
    return `${this.base}/node/${nodeId}/preview${q}`;
  }

  maskUrl(nodeId: number): string {
    return `${this.base}/node/${nodeId}/mask`;
  }

  async postScribbles(nodeId: number, png: Uint8Array): Promise<{ node: number; layers: number }> {
    const res = await this.request(`/node/${nodeId}/scribbles`, {
      method: "POST",
      headers: { "Content-Type": "image/png" },
      body: png as BodyInit,
    });
    return res.json();
  }

  postMatte(nodeId: number, options: MatteOptions = {}): Promise<JobInfo> {
    return this.postJson(`/node/${nodeId}/matte`, options);
  }

  postInstanceSplit(nodeId: number, nClusters?: number): Promise<JobInfo> {
    const body = nClusters == null ? {} : { n_clusters: nClusters };
    return this.postJson(`/node/${nodeId}/instance-split`, body);
  }

  postAcceptSplit(nodeId: number): Promise<{ node: number; children: number[] }> {
    return this.postJson(`/node/${nodeId}/accept-split`, {});
  }

  postProceduralize(nodeId: number, body: Record<string, unknown> = {}): Promise<JobInfo> {
    return this.postJson(`/node/${nodeId}/proceduralize`, body);
  }

  postFitMask(nodeId: number, body: Record<string, unknown> = {}): Promise<JobInfo> {
    return this.postJson(`/node/${nodeId}/fit-mask`, body);
  }

  postOptimize(body: Record<string, unknown> = {}): Promise<JobInfo> {
    return this.postJson("/optimize", body);
  }

  postSynth(body: Record<string, unknown> = {}): Promise<JobInfo> {
    return this.postJson("/synth", body);
  }

  /** Set one parameter; the response is the re-rendered preview PNG. */
  async postParam(path: string, value: number, light?: string): Promise<Uint8Array> {
    const body: Record<string, unknown> = { path, value };
    if (light) body.light = light;
    const res = await this.request("/param", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
    return new Uint8Array(await res.arrayBuffer());
  }
}
