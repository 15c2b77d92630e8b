/**
 * Client for the motion service. Long-running endpoints answer 202 with a
 * job record; pollJob waits those out and hands back the artifact ids.
 */
import type {
  ApiErrorBody,
  JobRecordJson,
  MaskJson,
  ModelInfoJson,
  MotionJson,
  PlacementDocJson,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: ApiErrorBody,
  ) {
    super(`${body.code}: ${body.message}`);
  }
}

export interface InferenceResponse {
  motion?: MotionJson;
  motion_id?: string;
  motions?: string[];
  job?: JobRecordJson;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class MotionClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    const body = await response.json();
    if (!response.ok && response.status !== 202) {
      throw new ApiError(response.status, body as ApiErrorBody);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  listModels(): Promise<{ models: string[] }> {
    return this.request("/models");
  }

  modelInfo(id: string): Promise<ModelInfoJson> {
    return this.request(`/models/${id}`);
  }

  generate(model: string, seed: number, frames?: number): Promise<InferenceResponse> {
    return this.post("/generate", { model, seed, frames: frames ?? null });
  }

  composeBodypart(
    model: string,
    mask: MaskJson,
    seed: number,
    level = 1,
  ): Promise<InferenceResponse> {
    return this.post("/compose/bodypart", { model, mask, level, seed });
  }

  composeInpaint(
    model: string,
    frameMask: MaskJson,
    seed: number,
  ): Promise<InferenceResponse> {
    return this.post("/compose/inpaint", { model, frame_mask: frameMask, seed });
  }

  composeRoi(
    model: string,
    placements: PlacementDocJson,
    seed: number,
  ): Promise<InferenceResponse> {
    return this.post("/compose/roi", {
      model,
      placements: placements.rois,
      frames: placements.total_frames,
      seed,
    });
  }

  restyle(styleModel: string, content: MotionJson, seed: number): Promise<InferenceResponse> {
    return this.post("/restyle", {
      style_model: styleModel,
      content_motion: content,
      seed,
    });
  }

  crowd(model: string, n: number, seed: number): Promise<InferenceResponse> {
    return this.post("/crowd", { model, n, seed });
  }

  getJob(id: string): Promise<JobRecordJson> {
    return this.request(`/jobs/${id}`);
  }

  getMotion(id: string): Promise<MotionJson> {
    return this.request(`/motions/${id}`);
  }

  /** Poll a job until it reaches a terminal state. */
  async pollJob(
    jobId: string,
    intervalMs = 250,
    onProgress?: (job: JobRecordJson) => void,
  ): Promise<JobRecordJson> {
    for (;;) {
      const job = await this.getJob(jobId);
      onProgress?.(job);
      if (job.status === "done") return job;
      if (job.status === "failed") {
        throw new ApiError(500, {
          code: job.error?.code ?? "job_failed",
          message: job.error?.message ?? `job ${jobId} failed`,
        });
      }
      await new Promise((resolve) => setTimeout(resolve, intervalMs));
    }
  }

  /**
   * Run an inference call to completion: synchronous responses pass through,
   * job responses are polled and their artifacts fetched.
   */
  async resolveMotions(response: InferenceResponse): Promise<MotionJson[]> {
    if (response.motion) return [response.motion];
    if (response.motions && !response.job?.status) {
      return Promise.all(response.motions.map((id) => this.getMotion(id)));
    }
    if (response.job && response.job.status !== "done") {
      const job = await this.pollJob(response.job.job_id);
      return Promise.all(job.artifacts.map((id) => this.getMotion(id)));
    }
    if (response.motions) {
      return Promise.all(response.motions.map((id) => this.getMotion(id)));
    }
    throw new ApiError(500, { code: "empty_response", message: "no motion returned" });
  }
}
