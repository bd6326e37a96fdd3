// DOM-free application state. main.ts renders it; tests drive it directly.
// All state is reconstructable from the API: reloading the page and calling
// refreshFrames() yields the same view.

import { ApiClient, FrameListItem, Prediction } from "./api.js";
import { createPreviewController, PreviewController } from "./previewLoop.js";

export interface Filters {
  split: string; // "all" | "train" | "test"
  category: string; // "all" or a category name
}

export interface FrameView {
  frameId: string;
  split: string;
  maxResponse: number;
  threshold: number;
  count: number | null; // last server-confirmed peak count
  previewUrl: string | null;
  prediction: Prediction | null;
}

export class App {
  frames: FrameListItem[] = [];
  filters: Filters = { split: "all", category: "all" };
  current: FrameView | null = null;
  status = "";
  error = "";

  private controller: PreviewController | null = null;

  constructor(
    readonly api: ApiClient,
    readonly makeUrl: (blob: Blob) => string = (blob) =>
      URL.createObjectURL(blob),
    readonly onChange: () => void = () => {},
  ) {}

  async refreshFrames(): Promise<void> {
    this.frames = await this.api.listFrames();
    this.onChange();
  }

  visibleFrames(): FrameListItem[] {
    return this.frames.filter(
      (f) =>
        (this.filters.split === "all" || f.split === this.filters.split) &&
        (this.filters.category === "all" ||
          f.category === this.filters.category),
    );
  }

  async selectFrame(frameId: string): Promise<void> {
    const item = this.frames.find((f) => f.frame_id === frameId);
    if (!item) throw new Error(`unknown frame ${frameId}`);
    const stats = await this.api.frameStats(frameId);
    this.current = {
      frameId,
      split: item.split,
      maxResponse: stats.max_response,
      threshold: stats.max_response / 2,
      count: null,
      previewUrl: null,
      prediction: null,
    };
    this.controller = createPreviewController(
      (t) => this.api.preview(frameId, t),
      (result, t) => {
        const r = result as { blob: Blob; count: number };
        if (this.current && this.current.frameId === frameId) {
          this.current.count = r.count;
          this.current.previewUrl = this.makeUrl(r.blob);
          this.current.threshold = t;
          this.onChange();
        }
      },
      (err) => this.fail(err),
    );
    this.onChange();
    this.controller.request(this.current.threshold);
  }

  setThreshold(threshold: number): void {
    if (!this.current || !this.controller) return;
    this.current.threshold = threshold;
    this.controller.request(threshold);
    this.onChange();
  }

  async commit(): Promise<void> {
    if (!this.current) return;
    try {
      await this.api.annotate(this.current.frameId, this.current.threshold);
      this.status = `annotated ${this.current.frameId}`;
      this.error = "";
      await this.refreshFrames();
    } catch (err) {
      this.fail(err);
    }
  }

  async train(category: string): Promise<void> {
    try {
      const result = await this.api.train(category);
      this.status = `trained on ${result.n_records} records, RMSE ${result.final_rmse.toFixed(4)}`;
      this.error = "";
    } catch (err) {
      this.fail(err);
    }
    this.onChange();
  }

  async fetchPrediction(): Promise<void> {
    if (!this.current) return;
    try {
      this.current.prediction = await this.api.prediction(this.current.frameId);
      this.error = "";
    } catch (err) {
      this.fail(err);
    }
    this.onChange();
  }

  private fail(err: unknown): void {
    this.error = err instanceof Error ? err.message : String(err);
    this.onChange();
  }
}
