/**
 * Typed client for the editing service HTTP API. All traffic goes through
 * an injectable fetch so contract tests can run against a stub server.
 */
import { z } from "zod";

export const EditPayloadSchema = z.object({
  image: z.string().min(1),
  mask: z.string().min(1),
  task: z.enum(["move", "resize", "paste"]),
  dx: z.number().int(),
  dy: z.number().int(),
  scale: z.number().positive(),
  reference: z.string().nullable(),
  config: z.record(z.unknown()),
});
export type EditPayload = z.infer<typeof EditPayloadSchema>;

export const SubmitResponseSchema = z.object({ job_id: z.string().min(1) });

export const JobStatusSchema = z.object({
  id: z.string(),
  state: z.enum(["queued", "running", "done", "failed"]),
  progress: z.number().min(0).max(1),
  error: z.string().nullable(),
  preview: z.string().nullable(),
  report: z.object({ nfe: z.number().int() }).passthrough().optional(),
});
export type JobStatus = z.infer<typeof JobStatusSchema>;

export const HealthSchema = z.object({
  status: z.string(),
  version: z.string(),
  backend: z.string(),
});
export type Health = z.infer<typeof HealthSchema>;

export type FetchLike = (url: string, init?: {
  method?: string;
  headers?: Record<string, string>;
  body?: string;
}) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
  arrayBuffer(): Promise<ArrayBuffer>;
}>;

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
    this.name = "ApiError";
  }
}

export function bytesToBase64(bytes: Uint8Array): string {
  // btoa is unavailable in workers/node; build the string chunk-wise
  let binary = "";
  const CHUNK = 0x8000;
  for (let i = 0; i < bytes.length; i += CHUNK) {
    binary += String.fromCharCode(...bytes.subarray(i, i + CHUNK));
  }
  if (typeof btoa === "function") return btoa(binary);
  return Buffer.from(bytes).toString("base64");
}

async function bodyMessage(res: { json(): Promise<unknown> }, status: number): Promise<string> {
  try {
    const body = (await res.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
  } catch {
    /* non-JSON error body */
  }
  return `request failed with status ${status}`;
}

export class ApiClient {
  constructor(
    readonly baseUrl: string,
    private readonly fetchImpl: FetchLike = fetch as unknown as FetchLike,
  ) {}

  async health(): Promise<Health> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/health`);
    if (!res.ok) throw new ApiError(res.status, await bodyMessage(res, res.status));
    return HealthSchema.parse(await res.json());
  }

  async submitEdit(payload: EditPayload): Promise<string> {
    EditPayloadSchema.parse(payload); // never send a malformed request
    const res = await this.fetchImpl(`${this.baseUrl}/api/edit`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(payload),
    });
    if (!res.ok) throw new ApiError(res.status, await bodyMessage(res, res.status));
    return SubmitResponseSchema.parse(await res.json()).job_id;
  }

  async jobStatus(jobId: string): Promise<JobStatus> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}`);
    if (!res.ok) throw new ApiError(res.status, await bodyMessage(res, res.status));
    return JobStatusSchema.parse(await res.json());
  }

  async jobResult(jobId: string): Promise<Uint8Array> {
    const res = await this.fetchImpl(`${this.baseUrl}/api/jobs/${jobId}/result`);
    if (!res.ok) throw new ApiError(res.status, await bodyMessage(res, res.status));
    return new Uint8Array(await res.arrayBuffer());
  }
}
