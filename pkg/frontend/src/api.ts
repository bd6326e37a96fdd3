// Typed client for the annotation service. The UI keeps no state of its
// own beyond what these calls return: counts and previews always come from
// the server.

export interface FrameListItem {
  frame_id: string;
  category: string;
  split: string;
  annotated: boolean;
}

export interface FrameStats {
  frame_id: string;
  max_response: number;
  average_intensity: number;
}

export interface Prediction {
  threshold: number;
  count: number;
}

export interface TrainResult {
  final_rmse: number;
  n_records: number;
}

export interface PreviewResult {
  blob: Blob;
  count: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, message: string) {
    super(message);
  }
}

async function errorMessage(res: Response): Promise<string> {
  try {
    const doc = await res.json();
    if (doc && typeof doc.error === "string") return doc.error;
  } catch {
    // non-JSON body; fall through
  }
  return `request failed (${res.status})`;
}

export class ApiClient {
  constructor(
    readonly base = "",
    readonly fetchFn: typeof fetch = (...a) => fetch(...a),
  ) {}

  private async ok(res: Response): Promise<Response> {
    if (!res.ok) throw new ApiError(res.status, await errorMessage(res));
    return res;
  }

  async listFrames(): Promise<FrameListItem[]> {
    const res = await this.ok(await this.fetchFn(`${this.base}/api/frames`));
    return res.json();
  }

  async frameStats(frameId: string): Promise<FrameStats> {
    const res = await this.ok(
      await this.fetchFn(`${this.base}/api/frames/${frameId}/stats`),
    );
    return res.json();
  }

  async preview(frameId: string, threshold: number): Promise<PreviewResult> {
    const res = await this.ok(
      await this.fetchFn(
        `${this.base}/api/frames/${frameId}/preview?t=${threshold}`,
      ),
    );
    return {
      blob: await res.blob(),
      count: Number(res.headers.get("X-Peak-Count") ?? "0"),
    };
  }

  async annotate(frameId: string, threshold: number): Promise<void> {
    await this.ok(
      await this.fetchFn(`${this.base}/api/frames/${frameId}/annotation`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ threshold }),
      }),
    );
  }

  async train(category: string): Promise<TrainResult> {
    const res = await this.ok(
      await this.fetchFn(`${this.base}/api/train`, {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ category }),
      }),
    );
    return res.json();
  }

  async prediction(frameId: string): Promise<Prediction> {
    const res = await this.ok(
      await this.fetchFn(`${this.base}/api/frames/${frameId}/prediction`),
    );
    return res.json();
  }
}
