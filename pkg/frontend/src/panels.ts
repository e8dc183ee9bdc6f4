/**
 * 2D plot panels: scatter heatmaps, the correlation matrix, and PCA
 * projections. Panels never aggregate locally; every pixel comes from
 * a server document stamped with the versions it was computed at, and
 * a panel only paints documents matching the versions it expects.
 */

import type { ApiClient, BrushDoc, HistogramDoc, CorrelationDoc, PcaDoc } from "./api.js";
import { heatmapImage, PlotFrame, correlationColor, correlationCellAt } from "./heatmap.js";
import type { PixelRect } from "./heatmap.js";

export interface ScatterConfig {
  plotId: string;
  kind: string;
  x: string;
  y: string;
  bins: [number, number];
  xTransform?: string[];
  yTransform?: string[];
  colorMap?: string;
}

export interface PcaConfig {
  plotId: string;
  kind: string;
  columns: string[];
  k: number;
  ax: number;
  ay: number;
  standardized: boolean;
  bins: [number, number];
  colorMap?: string;
}

/**
 * Turn a completed drag into the brush to apply, or null for a
 * zero-area gesture (a bare click), which by contract clears the
 * panel's own brush instead of applying an empty one.
 */
export function brushFromDrag(
  config: ScatterConfig,
  frame: PlotFrame,
  rect: PixelRect,
): BrushDoc | null {
  const ranges = frame.rectToRanges(rect);
  if (ranges === null) return null;
  const brush: BrushDoc = {
    brush_id: `b:${config.plotId}`,
    plot_id: config.plotId,
    x_column: config.x,
    y_column: config.y,
    x_range: ranges.xRange,
    y_range: ranges.yRange,
  };
  if (config.xTransform !== undefined) brush.x_transform = config.xTransform;
  if (config.yTransform !== undefined) brush.y_transform = config.yTransform;
  return brush;
}

/** PCA panels brush on the derived projection axes. */
export function pcaBrushFromDrag(
  config: PcaConfig,
  doc: PcaDoc,
  frame: PlotFrame,
  rect: PixelRect,
): BrushDoc | null {
  const ranges = frame.rectToRanges(rect);
  if (ranges === null) return null;
  const xCol = doc.output_columns[config.ax];
  const yCol = doc.output_columns[config.ay];
  if (xCol === undefined || yCol === undefined) return null;
  return {
    brush_id: `b:${config.plotId}`,
    plot_id: config.plotId,
    x_column: xCol,
    y_column: yCol,
    x_range: ranges.xRange,
    y_range: ranges.yRange,
  };
}

interface DragState {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

function dragRect(d: DragState): PixelRect {
  return {
    x0: Math.min(d.x0, d.x1),
    y0: Math.min(d.y0, d.y1),
    x1: Math.max(d.x0, d.x1),
    y1: Math.max(d.y0, d.y1),
  };
}

export interface PanelHost {
  onError(message: string): void;
  versionsNow(): { selection: number; data: number };
}

const PANEL_W = 320;
const PANEL_H = 320;

/** Shared canvas + drag plumbing for the two brushable panel types. */
abstract class BrushablePanel {
  readonly root: HTMLElement;
  protected canvas: HTMLCanvasElement;
  protected frame: PlotFrame | null = null;
  protected drag: DragState | null = null;
  protected lastDoc: HistogramDoc | null = null;
  /** Selected-only counts painted over the dimmed base, if any. */
  protected overlay: number[] | null = null;

  constructor(
    protected api: ApiClient,
    protected host: PanelHost,
    title: string,
  ) {
    this.root = document.createElement("div");
    this.root.className = "panel";
    const head = document.createElement("div");
    head.className = "panel-title";
    head.textContent = title;
    this.root.appendChild(head);
    this.canvas = document.createElement("canvas");
    this.canvas.width = PANEL_W;
    this.canvas.height = PANEL_H;
    this.root.appendChild(this.canvas);
    this.canvas.addEventListener("pointerdown", (ev) => this.onDown(ev));
    this.canvas.addEventListener("pointermove", (ev) => this.onMove(ev));
    this.canvas.addEventListener("pointerup", (ev) => void this.onUp(ev));
  }

  abstract refresh(): Promise<void>;
  protected abstract commitDrag(rect: PixelRect): Promise<void>;

  protected localXY(ev: PointerEvent): [number, number] {
    const r = this.canvas.getBoundingClientRect();
    return [ev.clientX - r.left, ev.clientY - r.top];
  }

  private onDown(ev: PointerEvent): void {
    const [x, y] = this.localXY(ev);
    this.drag = { x0: x, y0: y, x1: x, y1: y };
    this.canvas.setPointerCapture(ev.pointerId);
  }

  private onMove(ev: PointerEvent): void {
    if (this.drag === null) return;
    const [x, y] = this.localXY(ev);
    this.drag.x1 = x;
    this.drag.y1 = y;
    this.paint();
  }

  private async onUp(ev: PointerEvent): Promise<void> {
    if (this.drag === null) return;
    const [x, y] = this.localXY(ev);
    this.drag.x1 = x;
    this.drag.y1 = y;
    const rect = dragRect(this.drag);
    this.drag = null;
    try {
      await this.commitDrag(rect);
    } catch (err) {
      this.host.onError(String(err));
    }
  }

  /** Paint only documents computed at the versions we currently expect. */
  protected docIsCurrent(doc: HistogramDoc): boolean {
    const now = this.host.versionsNow();
    return doc.data_version === now.data &&
      (doc.selection_version === undefined || doc.selection_version === now.selection);
  }

  protected paint(): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null || this.lastDoc === null) return;
    const doc = this.lastDoc;
    ctx.fillStyle = "#111";
    ctx.fillRect(0, 0, PANEL_W, PANEL_H);
    ctx.imageSmoothingEnabled = false;
    // full pool dimmed underneath, the selection at full strength on top
    this.blit(ctx, doc.counts, doc.bins, this.overlay !== null);
    if (this.overlay !== null) this.blit(ctx, this.overlay, doc.bins, false);
    if (this.drag !== null) {
      const r = dragRect(this.drag);
      ctx.strokeStyle = "#ffcf40";
      ctx.strokeRect(r.x0, r.y0, r.x1 - r.x0, r.y1 - r.y0);
    }
  }

  private blit(
    ctx: CanvasRenderingContext2D,
    counts: number[],
    bins: [number, number],
    dimmed: boolean,
  ): void {
    const [bx, by] = bins;
    const rgba = heatmapImage(counts, bins, this.colorMapName(), dimmed);
    const off = new OffscreenCanvas(bx, by);
    const offCtx = off.getContext("2d");
    if (offCtx === null) return;
    offCtx.putImageData(new ImageData(rgba, bx, by), 0, 0);
    ctx.drawImage(off, 0, 0, PANEL_W, PANEL_H);
  }

  protected colorMapName(): string {
    return "viridis";
  }
}

export class ScatterPanel extends BrushablePanel {
  constructor(
    api: ApiClient,
    host: PanelHost,
    public config: ScatterConfig,
  ) {
    super(api, host, `${config.kind}: ${config.y} vs ${config.x}`);
  }

  override async refresh(): Promise<void> {
    const query = {
      kind: this.config.kind,
      x: this.config.x,
      y: this.config.y,
      bins: this.config.bins,
      xTransform: this.config.xTransform,
      yTransform: this.config.yTransform,
    };
    try {
      const base = await this.api.histogram(query);
      const sel = await this.api.histogram({ ...query, selected: true });
      // base content only depends on the data version; its selection
      // stamp may be older when served from cache
      const now = this.host.versionsNow();
      if (base.data_version !== now.data || !this.docIsCurrent(sel)) return;
      this.lastDoc = base;
      this.overlay = sel.counts;
      this.frame = new PlotFrame(base, PANEL_W, PANEL_H);
      this.paint();
    } catch (err) {
      this.host.onError(String(err));
    }
  }

  protected override async commitDrag(rect: PixelRect): Promise<void> {
    if (this.frame === null) return;
    const brush = brushFromDrag(this.config, this.frame, rect);
    if (brush === null) {
      await this.api.removeBrush(`b:${this.config.plotId}`);
    } else {
      await this.api.applyBrush(brush);
    }
  }

  protected override colorMapName(): string {
    return this.config.colorMap ?? "viridis";
  }
}

export class PcaPanel extends BrushablePanel {
  private lastPca: PcaDoc | null = null;

  constructor(
    api: ApiClient,
    host: PanelHost,
    public config: PcaConfig,
  ) {
    super(api, host, `${config.kind}: pca ${config.ax} / ${config.ay}`);
  }

  override async refresh(): Promise<void> {
    try {
      const doc = await this.api.pca({
        kind: this.config.kind,
        columns: this.config.columns,
        k: this.config.k,
        ax: this.config.ax,
        ay: this.config.ay,
        standardized: this.config.standardized,
        bins: this.config.bins,
        selected: true,
      });
      if (!this.docIsCurrent(doc)) return;
      this.lastPca = doc;
      this.lastDoc = doc;
      // the pca doc carries full-pool counts plus a selected overlay
      this.overlay = doc.selected_counts ?? null;
      this.frame = new PlotFrame(doc, PANEL_W, PANEL_H);
      this.paint();
    } catch (err) {
      this.host.onError(String(err));
    }
  }

  protected override async commitDrag(rect: PixelRect): Promise<void> {
    if (this.frame === null || this.lastPca === null) return;
    const brush = pcaBrushFromDrag(this.config, this.lastPca, this.frame, rect);
    if (brush === null) {
      await this.api.removeBrush(`b:${this.config.plotId}`);
    } else {
      await this.api.applyBrush(brush);
    }
  }

  protected override colorMapName(): string {
    return this.config.colorMap ?? "viridis";
  }
}

/**
 * Feature-by-feature correlation matrix. Not brushable: clicking a
 * cell spawns a scatter panel on that column pair instead.
 */
export class CorrelationPanel {
  readonly root: HTMLElement;
  private canvas: HTMLCanvasElement;
  private lastDoc: CorrelationDoc | null = null;

  constructor(
    private api: ApiClient,
    private host: PanelHost,
    public kind: string,
    private onSpawn: (x: string, y: string) => void,
  ) {
    this.root = document.createElement("div");
    this.root.className = "panel";
    const head = document.createElement("div");
    head.className = "panel-title";
    head.textContent = `${kind}: correlation`;
    this.root.appendChild(head);
    this.canvas = document.createElement("canvas");
    this.canvas.width = PANEL_W;
    this.canvas.height = PANEL_H;
    this.root.appendChild(this.canvas);
    this.canvas.addEventListener("click", (ev) => this.onClick(ev));
  }

  async refresh(): Promise<void> {
    try {
      const doc = await this.api.correlation(this.kind);
      if (doc.data_version !== this.host.versionsNow().data) return;
      this.lastDoc = doc;
      this.paint();
    } catch (err) {
      this.host.onError(String(err));
    }
  }

  private onClick(ev: MouseEvent): void {
    if (this.lastDoc === null) return;
    const r = this.canvas.getBoundingClientRect();
    const cell = correlationCellAt(
      ev.clientX - r.left,
      ev.clientY - r.top,
      PANEL_W,
      PANEL_H,
      this.lastDoc.columns.length,
    );
    if (cell === null) return;
    const [i, j] = cell;
    if (i === j) return;
    const xCol = this.lastDoc.columns[j];
    const yCol = this.lastDoc.columns[i];
    if (xCol !== undefined && yCol !== undefined) this.onSpawn(xCol, yCol);
  }

  private paint(): void {
    const ctx = this.canvas.getContext("2d");
    if (ctx === null || this.lastDoc === null) return;
    const n = this.lastDoc.columns.length;
    if (n === 0) return;
    const cw = PANEL_W / n;
    const ch = PANEL_H / n;
    for (let i = 0; i < n; i++) {
      for (let j = 0; j < n; j++) {
        const [r, g, b] = correlationColor(this.lastDoc.r[i]?.[j] ?? null);
        ctx.fillStyle = `rgb(${r},${g},${b})`;
        ctx.fillRect(j * cw, i * ch, Math.ceil(cw), Math.ceil(ch));
      }
    }
  }
}
