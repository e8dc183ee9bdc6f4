import { describe, expect, it } from "vitest";

import { colormap } from "../src/colormap.js";
import {
  PlotFrame,
  correlationCellAt,
  correlationColor,
  heatmapImage,
} from "../src/heatmap.js";

describe("heatmapImage", () => {
  // counts are row-major over (x bin, y bin); pixels flip y so data-up
  // renders screen-up
  it("places counts with the y axis flipped", () => {
    const counts = [0, 5, 3, 0]; // (0,0)=0 (0,1)=5 (1,0)=3 (1,1)=0
    const img = heatmapImage(counts, [2, 2], "viridis");
    expect(img.length).toBe(2 * 2 * 4);
    const px = (x: number, y: number) => Array.from(img.slice((y * 2 + x) * 4, (y * 2 + x) * 4 + 4));
    // data (0,1) is the top-left pixel, at full intensity
    expect(px(0, 0)).toEqual([...colormap("viridis").rgb(1), 255]);
    // data (0,0) is bottom-left and empty: fully transparent
    expect(px(0, 1)[3]).toBe(0);
    // data (1,0) is bottom-right, scaled by log1p
    const t = Math.log1p(3) / Math.log1p(5);
    expect(px(1, 1)).toEqual([...colormap("viridis").rgb(t), 255]);
    // data (1,1) empty: top-right transparent
    expect(px(1, 0)[3]).toBe(0);
  });

  it("dims the selected overlay when asked", () => {
    const img = heatmapImage([1], [1, 1], "viridis", true);
    expect(img[3]).toBe(96);
  });

  it("renders an all-zero panel fully transparent", () => {
    const img = heatmapImage([0, 0, 0, 0], [2, 2], "magma");
    for (let i = 3; i < img.length; i += 4) expect(img[i]).toBe(0);
  });
});

describe("PlotFrame", () => {
  const frame = new PlotFrame({ x_edges: [0, 1, 2], y_edges: [10, 15, 20] }, 100, 50);

  it("maps corners both ways", () => {
    expect(frame.dataToPixel(0, 10)).toEqual([0, 50]);
    expect(frame.dataToPixel(2, 20)).toEqual([100, 0]);
    expect(frame.pixelToData(0, 50)).toEqual([0, 10]);
    expect(frame.pixelToData(100, 0)).toEqual([2, 20]);
  });

  it("round trips interior points", () => {
    const [px, py] = frame.dataToPixel(0.7, 13.1);
    const [x, y] = frame.pixelToData(px, py);
    expect(x).toBeCloseTo(0.7, 12);
    expect(y).toBeCloseTo(13.1, 12);
  });

  it("turns a drag rect into ordered closed ranges", () => {
    // drag from lower-left to upper-right in pixel space
    const ranges = frame.rectToRanges({ x0: 25, y0: 40, x1: 75, y1: 10 });
    expect(ranges).not.toBeNull();
    expect(ranges!.xRange[0]).toBeCloseTo(0.5, 12);
    expect(ranges!.xRange[1]).toBeCloseTo(1.5, 12);
    expect(ranges!.yRange[0]).toBeCloseTo(12, 12);
    expect(ranges!.yRange[1]).toBeCloseTo(18, 12);
  });

  it("orders ranges regardless of drag direction", () => {
    const a = frame.rectToRanges({ x0: 75, y0: 10, x1: 25, y1: 40 });
    const b = frame.rectToRanges({ x0: 25, y0: 40, x1: 75, y1: 10 });
    expect(a).toEqual(b);
  });

  it("clamps drags that leave the plot", () => {
    const ranges = frame.rectToRanges({ x0: -40, y0: -10, x1: 140, y1: 60 });
    expect(ranges!.xRange).toEqual([0, 2]);
    expect(ranges!.yRange).toEqual([10, 20]);
  });

  it("returns null for zero-area gestures", () => {
    expect(frame.rectToRanges({ x0: 30, y0: 10, x1: 30, y1: 40 })).toBeNull();
    expect(frame.rectToRanges({ x0: 10, y0: 25, x1: 60, y1: 25 })).toBeNull();
    expect(frame.rectToRanges({ x0: 30, y0: 25, x1: 30, y1: 25 })).toBeNull();
  });
});

describe("correlation helpers", () => {
  it("colors r on a diverging scale with gray for undefined", () => {
    expect(correlationColor(null)).toEqual([128, 128, 128]);
    expect(correlationColor(-1)).toEqual(colormap("coolwarm").rgb(0));
    expect(correlationColor(0)).toEqual(colormap("coolwarm").rgb(0.5));
    expect(correlationColor(1)).toEqual(colormap("coolwarm").rgb(1));
  });

  it("locates the clicked cell", () => {
    expect(correlationCellAt(0, 0, 100, 100, 4)).toEqual([0, 0]);
    expect(correlationCellAt(99, 99, 100, 100, 4)).toEqual([3, 3]);
    expect(correlationCellAt(60, 30, 100, 100, 4)).toEqual([1, 2]);
    expect(correlationCellAt(-1, 50, 100, 100, 4)).toBeNull();
    expect(correlationCellAt(50, 100, 100, 100, 4)).toBeNull();
  });
});
