import { describe, expect, it, vi } from "vitest";

import { ApiError, MotionClient } from "../src/api.js";
import type { JobRecordJson } from "../src/types.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("motion client", () => {
  it("passes through synchronous motion responses", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ motion: { frames: [[1]] }, motion_id: "abc", motions: ["abc"] }),
    );
    const client = new MotionClient("http://svc", fetchMock);
    const motions = await client.resolveMotions(
      await client.generate("m", 3),
    );
    expect(motions).toHaveLength(1);
    expect(fetchMock).toHaveBeenCalledWith(
      "http://svc/generate",
      expect.objectContaining({ method: "POST" }),
    );
    const body = JSON.parse((fetchMock.mock.calls[0][1] as RequestInit).body as string);
    expect(body).toEqual({ model: "m", seed: 3, frames: null });
  });

  it("raises structured errors", async () => {
    const fetchMock = vi.fn(async () =>
      jsonResponse({ code: "unknown_model", message: "no such model" }, 404),
    );
    const client = new MotionClient("", fetchMock);
    await expect(client.modelInfo("ghost")).rejects.toThrowError(ApiError);
    await expect(client.modelInfo("ghost")).rejects.toMatchObject({
      status: 404,
      body: { code: "unknown_model" },
    });
  });

  it("polls jobs until done and fetches artifacts", async () => {
    const job = (status: JobRecordJson["status"]): JobRecordJson => ({
      job_id: "j1",
      kind: "generate",
      status,
      progress: status === "done" ? 1 : 0.5,
      artifacts: status === "done" ? ["m1"] : [],
      log_tail: [],
      error: null,
    });
    let polls = 0;
    const fetchMock = vi.fn(async (url: string) => {
      if (url.endsWith("/jobs/j1")) {
        polls += 1;
        return jsonResponse(job(polls >= 3 ? "done" : "running"));
      }
      if (url.endsWith("/motions/m1")) {
        return jsonResponse({ frames: [[1]] });
      }
      return jsonResponse({ job: job("queued") }, 202);
    });
    const client = new MotionClient("", fetchMock);
    const response = await client.generate("m", 1);
    const motions = await client.resolveMotions(response);
    expect(polls).toBeGreaterThanOrEqual(3);
    expect(motions).toHaveLength(1);
  });

  it("propagates job failures as errors", async () => {
    const failed: JobRecordJson = {
      job_id: "j2",
      kind: "compose",
      status: "failed",
      progress: 0,
      artifacts: [],
      log_tail: [],
      error: { code: "invalid_mask", message: "bad mask" },
    };
    const fetchMock = vi.fn(async (url: string) =>
      url.endsWith("/jobs/j2")
        ? jsonResponse(failed)
        : jsonResponse({ job: { ...failed, status: "queued" } }, 202),
    );
    const client = new MotionClient("", fetchMock);
    const response = await client.composeBodypart("m", { kept_joints: [] }, 1);
    await expect(client.resolveMotions(response)).rejects.toMatchObject({
      body: { code: "invalid_mask" },
    });
  });

  it("sends the placement document in the service shape", async () => {
    const fetchMock = vi.fn(async () => jsonResponse({ motion: {}, motions: [] }));
    const client = new MotionClient("", fetchMock);
    await client.composeRoi(
      "m",
      { rois: [{ source_start: 1, source_end: 5, target_start: 2 }], total_frames: 96 },
      4,
    );
    const body = JSON.parse((fetchMock.mock.calls[0][1] as RequestInit).body as string);
    expect(body).toEqual({
      model: "m",
      placements: [{ source_start: 1, source_end: 5, target_start: 2 }],
      frames: 96,
      seed: 4,
    });
  });
});
