/**
 * Typed client for the engine's HTTP + push surface (docs/http-api.md).
 *
 * The viewer computes nothing itself: histograms, correlations,
 * projections, and masks all come from here. fetch and WebSocket are
 * injectable so tests can run without a server.
 */

import { decodeTile, type Tile } from "./wire.js";

export interface ColumnInfo {
  name: string;
  unit: string | null;
}

export interface KindSchema {
  n_points: number;
  columns: ColumnInfo[];
  derived: string[];
}

export interface SystemInfo {
  system_id: string;
  n_atoms: number | null;
  grid_shape: [number, number, number] | null;
  n_voxels: number | null;
}

export interface SchemaDoc {
  manifest_path: string;
  systems: SystemInfo[];
  kinds: Record<string, KindSchema>;
  selection_version: number;
  data_version: number;
}

export interface HistogramDoc {
  x_column: string;
  y_column: string;
  x_transform: string[];
  y_transform: string[];
  bins: [number, number];
  x_edges: number[];
  y_edges: number[];
  /** Row-major: counts[ix * bins[1] + iy]. */
  counts: number[];
  n_dropped: number;
  all_dropped: boolean;
  selected?: boolean;
  selection_version?: number;
  data_version?: number;
}

export interface CorrelationDoc {
  kind: string;
  columns: string[];
  r: (number | null)[][];
  degenerate: boolean[];
  insufficient: boolean[][];
  data_version: number;
}

export interface PcaDoc extends HistogramDoc {
  fingerprint: string;
  columns: string[];
  output_columns: string[];
  k: number;
  standardized: boolean;
  explained_variance: number[];
  explained_variance_ratio: number[];
  components: (number | null)[][];
  mean: number[];
  scale: number[];
  n_rows_used: number;
  ax: number;
  ay: number;
  selected_counts?: number[];
}

export interface BrushDoc {
  brush_id: string;
  plot_id?: string;
  x_column: string;
  y_column: string;
  x_range: [number, number];
  y_range: [number, number];
  x_transform?: string[];
  y_transform?: string[];
  active?: boolean;
}

export interface SelectionSummary {
  selection_version: number;
  data_version: number;
  combine_mode: "intersection" | "union";
  brushes: string[];
  selected: Record<string, number>;
}

export interface MaskDoc {
  kind: string;
  system: string | null;
  n: number;
  runs: number[];
  selection_version: number;
}

export interface VersionsNote {
  type: "versions" | "reconnect";
  selection_version?: number;
  data_version?: number;
  reason?: string;
}

export class ApiError extends Error {
  override name = "ApiError";
  constructor(
    public code: string,
    message: string,
    public status: number,
  ) {
    super(message);
  }
}

export interface HistogramQuery {
  kind: string;
  x: string;
  y: string;
  xTransform?: string[];
  yTransform?: string[];
  bins?: number | [number, number];
  range?: [[number, number], [number, number]];
  selected?: boolean;
}

export interface PcaQuery {
  kind: string;
  columns?: string[];
  k?: number;
  ax?: number;
  ay?: number;
  standardized?: boolean;
  bins?: number | [number, number];
  selected?: boolean;
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

async function raiseForStatus(resp: Response): Promise<Response> {
  if (resp.ok) return resp;
  let code = "http_error";
  let message = `${resp.status} ${resp.statusText}`;
  try {
    const doc = await resp.json();
    if (doc?.error?.code) {
      code = doc.error.code;
      message = doc.error.message ?? message;
    }
  } catch {
    // non-JSON error body: keep the status text
  }
  throw new ApiError(code, message, resp.status);
}

function binsParam(bins?: number | [number, number]): string | undefined {
  if (bins === undefined) return undefined;
  return typeof bins === "number" ? String(bins) : `${bins[0]},${bins[1]}`;
}

export class ApiClient {
  constructor(
    private base = "",
    private fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private url(path: string, params?: Record<string, string | undefined>): string {
    const query = params
      ? Object.entries(params)
          .filter((kv): kv is [string, string] => kv[1] !== undefined)
          .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(v)}`)
          .join("&")
      : "";
    return this.base + path + (query ? `?${query}` : "");
  }

  private async getJson<T>(path: string, params?: Record<string, string | undefined>): Promise<T> {
    const resp = await raiseForStatus(await this.fetchImpl(this.url(path, params)));
    return (await resp.json()) as T;
  }

  private async getTile(path: string, params?: Record<string, string | undefined>): Promise<Tile> {
    const resp = await raiseForStatus(await this.fetchImpl(this.url(path, params)));
    return decodeTile(await resp.arrayBuffer());
  }

  schema(): Promise<SchemaDoc> {
    return this.getJson("/api/schema");
  }

  atomsTile(systemId: string): Promise<Tile> {
    return this.getTile(`/api/systems/${encodeURIComponent(systemId)}/atoms`);
  }

  cloudTile(systemId: string, count?: number, seed?: number): Promise<Tile> {
    return this.getTile(`/api/systems/${encodeURIComponent(systemId)}/cloud`, {
      count: count === undefined ? undefined : String(count),
      seed: seed === undefined ? undefined : String(seed),
    });
  }

  columnTile(kind: string, name: string, system?: string): Promise<Tile> {
    return this.getTile(
      `/api/columns/${encodeURIComponent(kind)}/${encodeURIComponent(name)}`,
      { system },
    );
  }

  histogram(q: HistogramQuery): Promise<HistogramDoc> {
    return this.getJson("/api/plot/histogram", {
      kind: q.kind,
      x: q.x,
      y: q.y,
      x_transform: q.xTransform?.join(","),
      y_transform: q.yTransform?.join(","),
      bins: binsParam(q.bins),
      xmin: q.range ? String(q.range[0][0]) : undefined,
      xmax: q.range ? String(q.range[0][1]) : undefined,
      ymin: q.range ? String(q.range[1][0]) : undefined,
      ymax: q.range ? String(q.range[1][1]) : undefined,
      selected: q.selected ? "true" : undefined,
    });
  }

  correlation(kind: string, columns?: string[]): Promise<CorrelationDoc> {
    return this.getJson("/api/plot/correlation", {
      kind,
      columns: columns?.join(","),
    });
  }

  pca(q: PcaQuery): Promise<PcaDoc> {
    return this.getJson("/api/plot/pca", {
      kind: q.kind,
      columns: q.columns?.join(","),
      k: q.k === undefined ? undefined : String(q.k),
      ax: q.ax === undefined ? undefined : String(q.ax),
      ay: q.ay === undefined ? undefined : String(q.ay),
      standardized: q.standardized === undefined ? undefined : String(q.standardized),
      bins: binsParam(q.bins),
      selected: q.selected ? "true" : undefined,
    });
  }

  private async postJson<T>(path: string, body: unknown): Promise<T> {
    const resp = await raiseForStatus(
      await this.fetchImpl(this.base + path, {
        method: "POST",
        headers: { "content-type": "application/json" },
        body: JSON.stringify(body),
      }),
    );
    return (await resp.json()) as T;
  }

  applyBrush(brush: BrushDoc): Promise<SelectionSummary> {
    return this.postJson("/api/selection/brush", { op: "apply", brush });
  }

  removeBrush(brushId: string): Promise<SelectionSummary> {
    return this.postJson("/api/selection/brush", { op: "remove", brush_id: brushId });
  }

  clearBrushes(): Promise<SelectionSummary> {
    return this.postJson("/api/selection/brush", { op: "clear" });
  }

  setCombineMode(mode: "intersection" | "union"): Promise<SelectionSummary> {
    return this.postJson("/api/selection/brush", { op: "combine_mode", mode });
  }

  selection(): Promise<SelectionSummary> {
    return this.getJson("/api/selection");
  }

  mask(kind: string, system?: string): Promise<MaskDoc> {
    return this.getJson("/api/selection/mask", { kind, system });
  }

  exportSelection(kind: string, path: string): Promise<{ rows: number; path: string }> {
    return this.postJson("/api/export", { kind, path });
  }

  async sessionSnapshot(): Promise<string> {
    const resp = await raiseForStatus(await this.fetchImpl(this.base + "/api/session"));
    return resp.text();
  }

  async sessionRestore(doc: string): Promise<SelectionSummary> {
    const resp = await raiseForStatus(
      await this.fetchImpl(this.base + "/api/session", {
        method: "PUT",
        headers: { "content-type": "application/json" },
        body: doc,
      }),
    );
    return (await resp.json()) as SelectionSummary;
  }
}

type WebSocketLike = Pick<WebSocket, "close" | "addEventListener">;
type WebSocketCtor = new (url: string) => WebSocketLike;

/**
 * Version push channel with automatic reconnect.
 *
 * The server drops subscribers that fall behind and says so; on any
 * close we reconnect and the next versions note resynchronizes us.
 */
export class EventStream {
  private socket: WebSocketLike | null = null;
  private stopped = false;
  private retryMs = 250;

  constructor(
    private wsUrl: string,
    private onVersions: (selectionVersion: number, dataVersion: number) => void,
    private wsCtor: WebSocketCtor = WebSocket as unknown as WebSocketCtor,
    private scheduler: (fn: () => void, ms: number) => void = (fn, ms) => void setTimeout(fn, ms),
  ) {}

  start(): void {
    if (this.stopped) return;
    const socket = new this.wsCtor(this.wsUrl);
    this.socket = socket;
    socket.addEventListener("message", (ev: MessageEvent) => {
      let note: VersionsNote;
      try {
        note = JSON.parse(String(ev.data));
      } catch {
        return; // tolerate garbage frames; versions resync on the next one
      }
      if (note.type === "versions") {
        this.retryMs = 250;
        this.onVersions(note.selection_version ?? 0, note.data_version ?? 0);
      }
    });
    socket.addEventListener("close", () => {
      if (this.stopped) return;
      this.scheduler(() => this.start(), this.retryMs);
      this.retryMs = Math.min(this.retryMs * 2, 5_000);
    });
  }

  stop(): void {
    this.stopped = true;
    this.socket?.close();
  }
}
