/**
 * Color maps for heatmaps, point clouds, and atom coloring.
 *
 * Anchor-interpolated versions of the usual scientific maps; names
 * match the ones the server accepts in plot and encoding specs.
 */

export type RGB = [number, number, number];

// 9 anchor stops each, t = 0..1, 8-bit channels
const STOPS: Record<string, RGB[]> = {
  viridis: [
    [68, 1, 84], [72, 36, 117], [65, 68, 135], [53, 95, 141], [42, 120, 142],
    [33, 145, 140], [34, 168, 132], [66, 190, 113], [253, 231, 37],
  ],
  magma: [
    [0, 0, 4], [28, 16, 68], [79, 18, 123], [129, 37, 129], [181, 54, 122],
    [229, 80, 100], [251, 135, 97], [254, 194, 135], [252, 253, 191],
  ],
  plasma: [
    [13, 8, 135], [84, 2, 163], [139, 10, 165], [185, 50, 137], [219, 92, 104],
    [244, 136, 73], [254, 188, 43], [240, 249, 33], [240, 249, 33],
  ],
  inferno: [
    [0, 0, 4], [31, 12, 72], [85, 15, 109], [136, 34, 106], [186, 54, 85],
    [227, 89, 51], [249, 140, 10], [249, 201, 50], [252, 255, 164],
  ],
  turbo: [
    [48, 18, 59], [65, 69, 171], [57, 118, 237], [27, 170, 222], [24, 215, 152],
    [98, 243, 80], [201, 239, 52], [249, 189, 38], [122, 4, 3],
  ],
  coolwarm: [
    [59, 76, 192], [98, 130, 234], [141, 176, 254], [184, 208, 249], [221, 221, 221],
    [245, 196, 173], [244, 154, 123], [222, 96, 77], [180, 4, 38],
  ],
  greys: [
    [255, 255, 255], [223, 223, 223], [191, 191, 191], [159, 159, 159], [127, 127, 127],
    [95, 95, 95], [63, 63, 63], [31, 31, 31], [0, 0, 0],
  ],
};

export const COLOR_MAPS = Object.keys(STOPS);

const NAN_GRAY: RGB = [128, 128, 128];

export class ColorMap {
  constructor(private stops: RGB[]) {}

  /** t in [0,1], clamped; NaN maps to neutral gray. */
  rgb(t: number): RGB {
    if (Number.isNaN(t)) return NAN_GRAY;
    const clamped = Math.min(1, Math.max(0, t));
    const scaled = clamped * (this.stops.length - 1);
    const lo = Math.floor(scaled);
    const hi = Math.min(lo + 1, this.stops.length - 1);
    const f = scaled - lo;
    const a = this.stops[lo]!;
    const b = this.stops[hi]!;
    return [
      Math.round(a[0] + (b[0] - a[0]) * f),
      Math.round(a[1] + (b[1] - a[1]) * f),
      Math.round(a[2] + (b[2] - a[2]) * f),
    ];
  }

  /** Normalize a value into [0,1] against [lo, hi] and map it. */
  rgbAt(value: number, lo: number, hi: number): RGB {
    if (hi <= lo) return this.rgb(0.5); // degenerate range: flat color
    return this.rgb((value - lo) / (hi - lo));
  }
}

export function colormap(name: string): ColorMap {
  const stops = STOPS[name];
  if (stops === undefined) throw new Error(`unknown color map ${name}`);
  return new ColorMap(stops);
}
