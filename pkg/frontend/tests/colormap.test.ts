import { describe, expect, it } from "vitest";

import { COLOR_MAPS, colormap } from "../src/colormap.js";

describe("colormap", () => {
  it("exposes the same palette names the server accepts", () => {
    expect(COLOR_MAPS).toEqual([
      "viridis",
      "magma",
      "plasma",
      "inferno",
      "turbo",
      "coolwarm",
      "greys",
    ]);
    for (const name of COLOR_MAPS) expect(() => colormap(name)).not.toThrow();
  });

  it("hits the anchor stops at t = 0 and t = 1", () => {
    const v = colormap("viridis");
    expect(v.rgb(0)).toEqual([68, 1, 84]);
    expect(v.rgb(1)).toEqual([253, 231, 37]);
    const g = colormap("greys");
    expect(g.rgb(0)).toEqual([255, 255, 255]);
    expect(g.rgb(1)).toEqual([0, 0, 0]);
  });

  it("clamps t outside [0, 1]", () => {
    const v = colormap("viridis");
    expect(v.rgb(-3)).toEqual(v.rgb(0));
    expect(v.rgb(42)).toEqual(v.rgb(1));
  });

  it("maps NaN to neutral gray", () => {
    expect(colormap("magma").rgb(NaN)).toEqual([128, 128, 128]);
  });

  it("interpolates between stops monotonically for greys", () => {
    const g = colormap("greys");
    let prev = 256;
    for (let i = 0; i <= 32; i++) {
      const [r, gg, b] = g.rgb(i / 32);
      expect(r).toBe(gg);
      expect(gg).toBe(b);
      expect(r).toBeLessThanOrEqual(prev);
      prev = r;
    }
  });

  it("scales values into the map with rgbAt", () => {
    const v = colormap("viridis");
    expect(v.rgbAt(10, 10, 20)).toEqual(v.rgb(0));
    expect(v.rgbAt(20, 10, 20)).toEqual(v.rgb(1));
    expect(v.rgbAt(15, 10, 20)).toEqual(v.rgb(0.5));
  });

  it("treats a degenerate range as midscale", () => {
    const v = colormap("viridis");
    expect(v.rgbAt(7, 7, 7)).toEqual(v.rgb(0.5));
  });

  it("refuses unknown names", () => {
    expect(() => colormap("sideways")).toThrowError(/sideways/);
  });
});
