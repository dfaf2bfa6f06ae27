import { describe, expect, it } from "vitest";

import { ApiClient } from "../src/api.js";
import type { JobInfo, ProjectSnapshot } from "../src/api.js";
import { UiSession } from "../src/session.js";

function snapshot(nodes: number[][]): ProjectSnapshot {
  // nodes: [id, ...children]
  return {
    version: 1,
    root: nodes[0][0],
    nodes: nodes.map(([id, ...children]) => ({
      id,
      kind: children.length ? "interior" : "leaf",
      children,
      parent: null,
      has_payload: false,
      mask_area: 64,
      has_scribbles: false,
      pending_split: false,
    })),
    seeds: {},
    config: {},
    loss_history: [],
    resolution: [8, 8],
  };
}

function fakeApi(overrides: Partial<Record<string, unknown>>): ApiClient {
  const api = new ApiClient("");
  Object.assign(api, overrides);
  return api;
}

function job(id: string, state: JobInfo["state"]): JobInfo {
  return {
    job_id: id,
    action: "matting",
    state,
    stage: state,
    progress: state === "done" ? 1 : 0.5,
    messages: [],
    error: state === "error" ? "boom" : null,
    result: {},
  };
}

describe("UiSession", () => {
  it("refresh rebuilds the snapshot and heals a stale selection", async () => {
    let current = snapshot([[0, 1, 2], [1], [2]]);
    const api = fakeApi({ getProject: async () => current });
    const s = new UiSession(api, 1);
    await s.refresh();
    s.selectNode(2);
    current = snapshot([[0, 1], [1]]); // node 2 vanished
    await s.refresh();
    expect(s.selectedNode).toBe(0);
    expect(s.node(1)?.kind).toBe("leaf");
  });

  it("mutate serializes overlapping mutations", async () => {
    const api = fakeApi({});
    const s = new UiSession(api, 1);
    const order: string[] = [];
    let release!: () => void;
    const gate = new Promise<void>((r) => (release = r));

    const first = s.mutate(async () => {
      order.push("first:start");
      await gate;
      order.push("first:end");
    });
    const second = s.mutate(async () => {
      order.push("second");
    });
    await new Promise((r) => setTimeout(r, 20));
    expect(order).toEqual(["first:start"]); // second waits its turn
    release();
    await Promise.all([first, second]);
    expect(order).toEqual(["first:start", "first:end", "second"]);
  });

  it("mutate keeps the chain alive after a failure", async () => {
    const api = fakeApi({});
    const s = new UiSession(api, 1);
    await expect(s.mutate(async () => {
      throw new Error("nope");
    })).rejects.toThrow("nope");
    await expect(s.mutate(async () => "ok")).resolves.toBe("ok");
  });

  it("trackJob polls until done and empties the pending set", async () => {
    const states: JobInfo["state"][] = ["running", "running", "done"];
    let calls = 0;
    const api = fakeApi({
      getJob: async () => job("j1", states[Math.min(calls++, 2)]),
    });
    const s = new UiSession(api, 5);
    const seen: string[] = [];
    s.onJobUpdate = (j) => seen.push(j.state);
    const out = await s.trackJob(job("j1", "queued"));
    expect(out.state).toBe("done");
    expect(calls).toBe(3);
    expect(s.pendingJobs.size).toBe(0);
    expect(seen[0]).toBe("queued");
    expect(seen[seen.length - 1]).toBe("done");
  });

  it("runJob surfaces job errors and refreshes on success", async () => {
    let refreshes = 0;
    const api = fakeApi({
      getProject: async () => {
        refreshes++;
        return snapshot([[0]]);
      },
      getJob: async () => job("j2", "error"),
    });
    const s = new UiSession(api, 5);
    await expect(s.runJob(async () => job("j2", "queued")))
      .rejects.toThrow("boom");

    const api2 = fakeApi({
      getProject: async () => {
        refreshes++;
        return snapshot([[0]]);
      },
      getJob: async () => job("j3", "done"),
    });
    const s2 = new UiSession(api2, 5);
    const out = await s2.runJob(async () => job("j3", "queued"));
    expect(out.state).toBe("done");
    expect(refreshes).toBeGreaterThan(0);
  });
});
