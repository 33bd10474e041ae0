/** Typed client for the geodeep HTTP service. The UI never computes
 * anything itself: every number it shows comes verbatim from these
 * responses. */

export interface LayerGeometry {
  width: number;
  height: number;
  bands: number;
  crs: string;
  origin_x: number;
  origin_y: number;
  pixel_width: number;
  pixel_height: number;
}

export interface Meta {
  layers: string[];
  geometries: Record<string, LayerGeometry>;
}

export interface Status {
  stage: string;
  done: number;
  total: number;
  paused: boolean;
  error: string | null;
}

export interface XY {
  x: number;
  y: number;
}

export interface PointScore extends XY {
  value: number;
}

export interface SimilarityResult {
  geotiff: string;
  png: string;
  points: XY[];
  scores: PointScore[];
  mask?: string;
}

export interface LabelPoint extends XY {
  label: string | number;
  fold?: number | null;
  split?: string | null;
}

export interface FoldReport {
  name: string;
  confusion: number[][];
  accuracy: number;
  macro_f1: number;
  test_count: number;
}

export interface CvReport {
  scheme: string;
  labels: (string | number)[];
  folds: FoldReport[];
  aggregate: {
    accuracy: { mean: number; std: number };
    macro_f1: { mean: number; std: number };
  };
}

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson<T>(res: Response): Promise<T> {
  if (!res.ok) {
    let detail = res.statusText;
    try {
      const body = await res.json();
      if (body && body.detail) detail = String(body.detail);
    } catch {
      /* non-JSON error body */
    }
    throw new ApiError(res.status, detail);
  }
  return res.json() as Promise<T>;
}

export class ApiClient {
  constructor(public base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  async meta(): Promise<Meta> {
    const raw = await asJson<Record<string, unknown>>(
      await fetch(this.url("/meta")),
    );
    const layers = raw.layers as string[];
    const geometries: Record<string, LayerGeometry> = {};
    for (const name of layers) {
      geometries[name] = raw[name] as LayerGeometry;
    }
    return { layers, geometries };
  }

  renderUrl(
    layer: string,
    window: { col: number; row: number; w: number; h: number },
    bands?: number[],
  ): string {
    const params = new URLSearchParams({
      layer,
      window: `${window.col},${window.row},${window.w},${window.h}`,
    });
    if (bands && bands.length) params.set("bands", bands.join(","));
    return this.url(`/render?${params.toString()}`);
  }

  async status(): Promise<Status> {
    return asJson<Status>(await fetch(this.url("/status")));
  }

  async startSimilarity(
    points: XY[],
    aggregation: string,
    threshold: number | null,
  ): Promise<void> {
    await asJson(
      await fetch(this.url("/similarity"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(
          threshold === null
            ? { points, aggregation }
            : { points, aggregation, threshold },
        ),
      }),
    );
  }

  async similarityResult(): Promise<SimilarityResult | null> {
    const res = await fetch(this.url("/similarity/result"));
    if (res.status === 404) return null;
    return asJson<SimilarityResult>(res);
  }

  async similarityPoints(): Promise<XY[]> {
    const doc = await asJson<{ points: XY[] }>(
      await fetch(this.url("/similarity/points")),
    );
    return doc.points;
  }

  async labels(): Promise<LabelPoint[]> {
    const doc = await asJson<{ points: LabelPoint[] }>(
      await fetch(this.url("/labels")),
    );
    return doc.points;
  }

  async setLabels(points: LabelPoint[]): Promise<void> {
    await asJson(
      await fetch(this.url("/labels"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ points }),
      }),
    );
  }

  async fit(req: {
    algorithm: string;
    params: Record<string, unknown>;
    scheme: string;
    kfold_k: number;
  }): Promise<CvReport> {
    return asJson<CvReport>(
      await fetch(this.url("/fit"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(req),
      }),
    );
  }

  async predict(): Promise<{ geotiff: string; labels: (string | number)[] }> {
    return asJson(
      await fetch(this.url("/predict"), { method: "POST" }),
    );
  }

  async startFeatures(encoder: Record<string, unknown> = {}): Promise<void> {
    await asJson(
      await fetch(this.url("/features"), {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify({ encoder }),
      }),
    );
  }

  /** Poll /status every `intervalMs` (the job contract is polling, not
   * streaming) until the job finishes or errors. */
  pollUntilDone(
    onTick: (s: Status) => void,
    intervalMs = 1000,
  ): Promise<Status> {
    return new Promise((resolve, reject) => {
      const timer = setInterval(async () => {
        let s: Status;
        try {
          s = await this.status();
        } catch (err) {
          clearInterval(timer);
          reject(err);
          return;
        }
        onTick(s);
        if (s.error) {
          clearInterval(timer);
          reject(new ApiError(500, s.error));
        } else if (s.total > 0 && s.done >= s.total) {
          clearInterval(timer);
          resolve(s);
        }
      }, intervalMs);
    });
  }
}
