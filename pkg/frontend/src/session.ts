import type { ApiClient, JobInfo, ProjectSnapshot } from "./api.js";

export type Channel = "albedo" | "height" | "roughness" | "render";

export interface BrushState {
  layer: number;
  radius: number;
  erase: boolean;
}

const POLL_MS = 1000;

/**
 * Client-side view state. The server owns the ground truth: everything
 * here is either reconstructed from GET /project or purely cosmetic
 * (selections, brush). Mutating requests funnel through `mutate`, which
 * chains them so at most one is in flight at a time; job polling runs
 * beside reads without touching the chain.
 */
export class UiSession {
  readonly api: ApiClient;
  snapshot: ProjectSnapshot | null = null;
  selectedNode = 0;
  channel: Channel = "albedo";
  brush: BrushState = { layer: 0, radius: 4, erase: false };
  readonly pendingJobs = new Map<string, JobInfo>();
  onJobUpdate: ((job: JobInfo) => void) | null = null;
  private chain: Promise<unknown> = Promise.resolve();
  private pollMs: number;

  constructor(api: ApiClient, pollMs: number = POLL_MS) {
    this.api = api;
    this.pollMs = pollMs;
  }

  /** Reload the project snapshot; keeps the selection when it survives. */
  async refresh(): Promise<ProjectSnapshot> {
    const snap = await this.api.getProject();
    this.snapshot = snap;
    if (!snap.nodes.some((n) => n.id === this.selectedNode)) {
      this.selectedNode = snap.root;
    }
    return snap;
  }

  node(id: number) {
    return this.snapshot?.nodes.find((n) => n.id === id) ?? null;
  }

  selectNode(id: number): void {
    this.selectedNode = id;
  }

  setChannel(channel: Channel): void {
    this.channel = channel;
  }

  /**
   * Run a mutating request after every previously queued one finished.
   * Failures propagate to the caller but never break the chain.
   */
  mutate<T>(fn: () => Promise<T>): Promise<T> {
    const run = this.chain.then(fn, fn);
    this.chain = run.catch(() => undefined);
    return run;
  }

  /** Poll a job at the session cadence until it leaves the queue. */
  async trackJob(job: JobInfo): Promise<JobInfo> {
    this.pendingJobs.set(job.job_id, job);
    this.onJobUpdate?.(job);
    let current = job;
    while (current.state === "queued" || current.state === "running") {
      await new Promise((r) => setTimeout(r, this.pollMs));
      current = await this.api.getJob(job.job_id);
      this.pendingJobs.set(job.job_id, current);
      this.onJobUpdate?.(current);
    }
    this.pendingJobs.delete(job.job_id);
    return current;
  }

  /** Queue a job-starting mutation and follow it to completion. */
  async runJob(start: () => Promise<JobInfo>): Promise<JobInfo> {
    const job = await this.mutate(start);
    const finished = await this.trackJob(job);
    if (finished.state === "error") {
      throw new Error(finished.error ?? `job ${finished.job_id} failed`);
    }
    await this.refresh();
    return finished;
  }
}
