/**
 * Edit session state machine: image + mask + drag vector + scale, job
 * submission and polling, and the result history that powers the
 * iterate-and-adjust loop. The UI never mutates pixels itself; every output
 * comes from the service.
 */
import { ApiClient, type EditPayload, type JobStatus, bytesToBase64 } from "./api.js";
import { MaskRaster } from "./mask.js";

export type TaskKind = "move" | "resize" | "paste";

export interface HistoryItem {
  jobId: string;
  task: TaskKind;
  dx: number;
  dy: number;
  scale: number;
  /** PNG bytes of the finished edit, usable as the next source image */
  resultPng: Uint8Array;
}

export interface JobView {
  jobId: string;
  state: JobStatus["state"];
  progress: number;
  previewB64: string | null;
  error: string | null;
}

export type SleepLike = (ms: number) => Promise<void>;

const realSleep: SleepLike = (ms) => new Promise((r) => setTimeout(r, ms));

export class EditSession {
  imagePng: Uint8Array | null = null;
  imageWidth = 0;
  imageHeight = 0;
  mask: MaskRaster | null = null;
  referencePng: Uint8Array | null = null;
  task: TaskKind = "move";
  dx = 0;
  dy = 0;
  scale = 1.0;
  config: Record<string, unknown> = {};
  readonly history: HistoryItem[] = [];

  constructor(
    private readonly client: ApiClient,
    private readonly pollIntervalMs = 500,
    private readonly sleep: SleepLike = realSleep,
  ) {}

  loadImage(png: Uint8Array, width: number, height: number): void {
    this.imagePng = png;
    this.imageWidth = width;
    this.imageHeight = height;
    // the mask raster always matches the image dimensions
    this.mask = new MaskRaster(width, height);
    this.dx = 0;
    this.dy = 0;
  }

  /** Commit a drag displacement, clamped to the image bounds. */
  setDrag(dx: number, dy: number): void {
    const clamp = (v: number, lim: number) =>
      Math.max(-(lim - 1), Math.min(lim - 1, Math.round(v)));
    this.dx = clamp(dx, this.imageWidth || 1);
    this.dy = clamp(dy, this.imageHeight || 1);
  }

  canSubmit(): boolean {
    if (!this.imagePng || !this.mask) return false;
    if (this.task === "paste") return this.referencePng !== null && !this.mask.isEmpty();
    return !this.mask.isEmpty();
  }

  buildPayload(): EditPayload {
    if (!this.imagePng || !this.mask) throw new Error("no image loaded");
    if (!this.canSubmit()) throw new Error("nothing to submit: paint a mask first");
    return {
      image: bytesToBase64(this.imagePng),
      mask: bytesToBase64(this.mask.toPng()),
      task: this.task,
      dx: this.dx,
      dy: this.dy,
      scale: this.scale,
      reference: this.referencePng ? bytesToBase64(this.referencePng) : null,
      config: this.config,
    };
  }

  /**
   * Submit the current edit and poll until the job reaches a terminal
   * state, invoking onUpdate for every poll response (previews swap
   * in-place). On success the result is appended to the history.
   */
  async submitAndPoll(onUpdate?: (view: JobView) => void): Promise<JobView> {
    const jobId = await this.client.submitEdit(this.buildPayload());
    let status: JobStatus;
    for (;;) {
      status = await this.client.jobStatus(jobId);
      onUpdate?.({
        jobId,
        state: status.state,
        progress: status.progress,
        previewB64: status.preview,
        error: status.error,
      });
      if (status.state === "done" || status.state === "failed") break;
      await this.sleep(this.pollIntervalMs);
    }
    const view: JobView = {
      jobId,
      state: status.state,
      progress: status.progress,
      previewB64: status.preview,
      error: status.error,
    };
    if (status.state === "done") {
      const resultPng = await this.client.jobResult(jobId);
      this.history.push({
        jobId,
        task: this.task,
        dx: this.dx,
        dy: this.dy,
        scale: this.scale,
        resultPng,
      });
    }
    return view;
  }

  /** Promote a history item to the new source image (iterate loop). */
  promote(index: number): void {
    const item = this.history[index];
    if (!item) throw new Error(`no history item ${index}`);
    this.loadImage(item.resultPng, this.imageWidth, this.imageHeight);
  }
}
