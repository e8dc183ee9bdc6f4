/**
 * Binary tile and mask-run decoding, mirroring docs/wire-format.md.
 *
 * A tile is `u32 section_count` then section_count length-prefixed
 * payloads; section 0 is a JSON header describing the named arrays in
 * the rest. Everything is little-endian, C-order, unpadded.
 */

export class WireError extends Error {
  override name = "WireError";
}

const DECODERS = {
  "<f4": Float32Array,
  "<f8": Float64Array,
  "<u2": Uint16Array,
  "<u4": Uint32Array,
  "<i4": Int32Array,
  "<i8": BigInt64Array,
} as const;

export type WireDtype = keyof typeof DECODERS;

export interface TileSection {
  dtype: WireDtype;
  shape: number[];
  /** Flat C-order values; length is the product of shape. */
  data: InstanceType<(typeof DECODERS)[WireDtype]>;
}

export type Tile = Record<string, TileSection>;

interface SectionMeta {
  name: string;
  dtype: string;
  shape: number[];
}

function product(shape: number[]): number {
  let n = 1;
  for (const d of shape) n *= d;
  return n;
}

export function decodeTile(buf: ArrayBuffer): Tile {
  const view = new DataView(buf);
  if (buf.byteLength < 4) throw new WireError("tile shorter than its section count");
  const count = view.getUint32(0, true);
  let offset = 4;
  const raw: Uint8Array[] = [];
  for (let i = 0; i < count; i++) {
    if (offset + 4 > buf.byteLength) {
      throw new WireError(`tile truncated before section ${i} length`);
    }
    const length = view.getUint32(offset, true);
    offset += 4;
    if (offset + length > buf.byteLength) {
      throw new WireError(`tile section ${i} declares ${length} bytes past the end`);
    }
    raw.push(new Uint8Array(buf, offset, length));
    offset += length;
  }
  if (offset !== buf.byteLength) {
    throw new WireError(`tile has ${buf.byteLength - offset} trailing bytes`);
  }
  const head = raw[0];
  if (head === undefined) throw new WireError("tile has no header section");

  let metas: SectionMeta[];
  try {
    const header = JSON.parse(new TextDecoder().decode(head));
    metas = header.sections;
    if (!Array.isArray(metas)) throw new Error("sections is not a list");
  } catch (exc) {
    throw new WireError(`tile header is malformed: ${exc}`);
  }
  if (metas.length !== raw.length - 1) {
    throw new WireError(
      `tile header describes ${metas.length} sections, payload has ${raw.length - 1}`,
    );
  }

  const out: Tile = {};
  metas.forEach((meta, i) => {
    const ctor = DECODERS[meta.dtype as WireDtype];
    if (ctor === undefined) {
      throw new WireError(`section ${meta.name} has unsupported dtype ${meta.dtype}`);
    }
    const blob = raw[i + 1]!;
    const expected = ctor.BYTES_PER_ELEMENT * product(meta.shape);
    if (expected !== blob.byteLength) {
      throw new WireError(
        `section ${meta.name} declares shape [${meta.shape}] ` +
          `(${expected} bytes) but carries ${blob.byteLength}`,
      );
    }
    // copy out: payload offsets inside the tile are not element-aligned
    const bytes = blob.slice();
    out[meta.name] = {
      dtype: meta.dtype as WireDtype,
      shape: [...meta.shape],
      data: new ctor(bytes.buffer) as TileSection["data"],
    };
  });
  return out;
}

/** Expand alternating unselected/selected run lengths into a mask. */
export function runsToMask(runs: number[], n: number): Uint8Array {
  let total = 0;
  for (const r of runs) {
    if (r < 0 || !Number.isInteger(r)) throw new WireError("mask runs must be non-negative integers");
    total += r;
  }
  if (total !== n) throw new WireError(`mask runs sum to ${total}, expected ${n}`);
  const mask = new Uint8Array(n);
  let at = 0;
  runs.forEach((r, i) => {
    if (i % 2 === 1) mask.fill(1, at, at + r);
    at += r;
  });
  return mask;
}

/** Inverse of runsToMask; starts with the unselected run (possibly 0). */
export function maskToRuns(mask: ArrayLike<number | boolean>): number[] {
  const n = mask.length;
  if (n === 0) return [];
  const runs: number[] = [];
  let current = false;
  let length = 0;
  if (mask[0]) runs.push(0);
  for (let i = 0; i < n; i++) {
    const v = Boolean(mask[i]);
    if (v === current) {
      length += 1;
    } else {
      if (length) runs.push(length);
      current = v;
      length = 1;
    }
  }
  runs.push(length);
  return runs;
}
