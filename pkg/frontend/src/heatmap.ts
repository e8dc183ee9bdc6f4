/**
 * Heatmap pixels and plot-space geometry.
 *
 * The server sends bin edges and row-major counts
 * (counts[ix * by + iy]); everything here is pure math so it can be
 * tested without a canvas. Pixel space puts y=0 at the top, data
 * space puts the y axis upward: the flip happens in exactly one place.
 */

import { colormap } from "./colormap.js";
import type { HistogramDoc } from "./api.js";

/** RGBA buffer for ImageData; one pixel per bin. */
export function heatmapImage(
  counts: number[],
  bins: [number, number],
  colorMapName: string,
  dimmed = false,
): Uint8ClampedArray<ArrayBuffer> {
  const [bx, by] = bins;
  const cmap = colormap(colorMapName);
  let max = 0;
  for (const c of counts) if (c > max) max = c;
  const logMax = Math.log1p(max);
  const out = new Uint8ClampedArray(bx * by * 4);
  for (let ix = 0; ix < bx; ix++) {
    for (let iy = 0; iy < by; iy++) {
      const c = counts[ix * by + iy] ?? 0;
      const px = ix;
      const py = by - 1 - iy; // flip: data y up, pixel y down
      const at = (py * bx + px) * 4;
      if (c <= 0) {
        out[at + 3] = 0; // empty bins stay transparent
        continue;
      }
      const [r, g, b] = cmap.rgb(logMax > 0 ? Math.log1p(c) / logMax : 1);
      out[at] = r;
      out[at + 1] = g;
      out[at + 2] = b;
      out[at + 3] = dimmed ? 96 : 255;
    }
  }
  return out;
}

export interface PixelRect {
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface DataRanges {
  xRange: [number, number];
  yRange: [number, number];
}

/**
 * Maps between pixel space and (transformed) data space for one plot.
 * Brushes are expressed in the same transformed coordinates as the
 * histogram's edges, so no inverse transform is ever needed here.
 */
export class PlotFrame {
  private xLo: number;
  private xHi: number;
  private yLo: number;
  private yHi: number;

  constructor(
    doc: Pick<HistogramDoc, "x_edges" | "y_edges">,
    public width: number,
    public height: number,
  ) {
    this.xLo = doc.x_edges[0] ?? 0;
    this.xHi = doc.x_edges[doc.x_edges.length - 1] ?? 1;
    this.yLo = doc.y_edges[0] ?? 0;
    this.yHi = doc.y_edges[doc.y_edges.length - 1] ?? 1;
  }

  dataToPixel(x: number, y: number): [number, number] {
    const fx = (x - this.xLo) / (this.xHi - this.xLo);
    const fy = (y - this.yLo) / (this.yHi - this.yLo);
    return [fx * this.width, (1 - fy) * this.height];
  }

  pixelToData(px: number, py: number): [number, number] {
    const fx = px / this.width;
    const fy = 1 - py / this.height;
    return [this.xLo + fx * (this.xHi - this.xLo), this.yLo + fy * (this.yHi - this.yLo)];
  }

  /**
   * A drag rectangle in pixels becomes closed brush ranges, clamped to
   * the plot's extent. Degenerate (zero-area) rects return null, which
   * callers treat as "clear this panel's brush".
   */
  rectToRanges(rect: PixelRect): DataRanges | null {
    if (rect.x0 === rect.x1 || rect.y0 === rect.y1) return null;
    const [ax, ay] = this.pixelToData(Math.min(rect.x0, rect.x1), Math.max(rect.y0, rect.y1));
    const [bx, by] = this.pixelToData(Math.max(rect.x0, rect.x1), Math.min(rect.y0, rect.y1));
    const clamp = (v: number, lo: number, hi: number) => Math.min(hi, Math.max(lo, v));
    return {
      xRange: [clamp(ax, this.xLo, this.xHi), clamp(bx, this.xLo, this.xHi)],
      yRange: [clamp(ay, this.yLo, this.yHi), clamp(by, this.yLo, this.yHi)],
    };
  }
}

/** Correlation cell color: r in [-1,1] on a diverging map, null gray. */
export function correlationColor(r: number | null): [number, number, number] {
  if (r === null) return [128, 128, 128];
  return colormap("coolwarm").rgb((r + 1) / 2);
}

/** Which cell of an f x f correlation grid a click at (px, py) hits. */
export function correlationCellAt(
  px: number,
  py: number,
  width: number,
  height: number,
  n: number,
): [number, number] | null {
  if (px < 0 || py < 0 || px >= width || py >= height) return null;
  const i = Math.floor((py / height) * n);
  const j = Math.floor((px / width) * n);
  return i >= 0 && i < n && j >= 0 && j < n ? [i, j] : null;
}
