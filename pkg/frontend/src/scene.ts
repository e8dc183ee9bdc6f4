/**
 * 3D view construction: ball-and-stick atoms plus the density point
 * cloud, one scene per system.
 *
 * All array math (colors, scales, slicing, selection dimming) is in
 * plain functions over typed arrays; the three.js objects are thin
 * wrappers so the logic tests never need a GPU.
 */

import * as THREE from "three";

import { colormap } from "./colormap.js";
import type { SystemInfo, SchemaDoc } from "./api.js";

// CPK-ish colors and covalent radii (Angstrom) for the common elements;
// anything else renders gray at a generic radius.
const ELEMENT_STYLE: Record<number, { color: [number, number, number]; radius: number }> = {
  1: { color: [0.9, 0.9, 0.9], radius: 0.31 },
  6: { color: [0.3, 0.3, 0.3], radius: 0.76 },
  7: { color: [0.19, 0.31, 0.97], radius: 0.71 },
  8: { color: [1.0, 0.05, 0.05], radius: 0.66 },
  9: { color: [0.56, 0.88, 0.31], radius: 0.57 },
  15: { color: [1.0, 0.5, 0.0], radius: 1.07 },
  16: { color: [1.0, 1.0, 0.19], radius: 1.05 },
  17: { color: [0.12, 0.94, 0.12], radius: 1.02 },
};

const FALLBACK_STYLE = { color: [0.7, 0.5, 0.9] as [number, number, number], radius: 1.0 };

export function elementStyle(z: number): { color: [number, number, number]; radius: number } {
  return ELEMENT_STYLE[z] ?? FALLBACK_STYLE;
}

export interface AtomEncoding {
  sizeFeature?: string | null;
  colorFeature?: string | null;
  colorMap?: string;
  sizeRange?: [number, number];
}

/**
 * Per-atom sphere scales and colors under the double encoding: size
 * from one feature column, color from another. With no feature bound,
 * size falls back to the element radius and color to the element hue.
 */
export function atomInstanceData(
  atomicNumbers: ArrayLike<number>,
  encoding: AtomEncoding = {},
  sizeValues?: ArrayLike<number>,
  colorValues?: ArrayLike<number>,
): { scales: Float32Array; colors: Float32Array } {
  const n = atomicNumbers.length;
  const scales = new Float32Array(n);
  const colors = new Float32Array(n * 3);
  const [sizeLo, sizeHi] = encoding.sizeRange ?? [0.3, 1.0];
  const cmap = colormap(encoding.colorMap ?? "viridis");

  let sLo = Infinity;
  let sHi = -Infinity;
  if (sizeValues !== undefined) {
    for (let i = 0; i < n; i++) {
      const v = Number(sizeValues[i]);
      if (Number.isFinite(v)) {
        sLo = Math.min(sLo, v);
        sHi = Math.max(sHi, v);
      }
    }
  }
  let cLo = Infinity;
  let cHi = -Infinity;
  if (colorValues !== undefined) {
    for (let i = 0; i < n; i++) {
      const v = Number(colorValues[i]);
      if (Number.isFinite(v)) {
        cLo = Math.min(cLo, v);
        cHi = Math.max(cHi, v);
      }
    }
  }

  for (let i = 0; i < n; i++) {
    const style = elementStyle(Number(atomicNumbers[i]));
    if (sizeValues !== undefined && sHi > sLo) {
      const f = (Number(sizeValues[i]) - sLo) / (sHi - sLo);
      scales[i] = sizeLo + (Number.isFinite(f) ? f : 0.5) * (sizeHi - sizeLo);
    } else {
      scales[i] = style.radius;
    }
    if (colorValues !== undefined && cHi > cLo) {
      const [r, g, b] = cmap.rgbAt(Number(colorValues[i]), cLo, cHi);
      colors[i * 3] = r / 255;
      colors[i * 3 + 1] = g / 255;
      colors[i * 3 + 2] = b / 255;
    } else {
      colors[i * 3] = style.color[0];
      colors[i * 3 + 1] = style.color[1];
      colors[i * 3 + 2] = style.color[2];
    }
  }
  return { scales, colors };
}

/** Two endpoints per bond, flattened for a LineSegments geometry. */
export function bondSegmentPositions(
  positions: ArrayLike<number>,
  bonds: ArrayLike<number>,
): Float32Array {
  const m = bonds.length / 2;
  const out = new Float32Array(m * 6);
  for (let b = 0; b < m; b++) {
    const i = Number(bonds[b * 2]);
    const j = Number(bonds[b * 2 + 1]);
    for (let c = 0; c < 3; c++) {
      out[b * 6 + c] = Number(positions[i * 3 + c]);
      out[b * 6 + 3 + c] = Number(positions[j * 3 + c]);
    }
  }
  return out;
}

/** Base point-cloud colors from one feature column. */
export function cloudBaseColors(
  values: ArrayLike<number>,
  colorMapName = "viridis",
): Float32Array {
  const n = values.length;
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < n; i++) {
    const v = Number(values[i]);
    if (Number.isFinite(v)) {
      lo = Math.min(lo, v);
      hi = Math.max(hi, v);
    }
  }
  const cmap = colormap(colorMapName);
  const out = new Float32Array(n * 3);
  for (let i = 0; i < n; i++) {
    const [r, g, b] = hi > lo ? cmap.rgbAt(Number(values[i]), lo, hi) : cmap.rgb(0.5);
    out[i * 3] = r / 255;
    out[i * 3 + 1] = g / 255;
    out[i * 3 + 2] = b / 255;
  }
  return out;
}

const DIM_FACTOR = 0.15;

/**
 * Selection shading for the cloud: every sampled point inherits its
 * source voxel's mask bit. Unselected points are dimmed, never hidden,
 * so spatial context survives brushing. No mask means neutral state:
 * the base colors come back untouched.
 */
export function cloudSelectionColors(
  baseColors: Float32Array,
  sourceVoxel: ArrayLike<number>,
  voxelMask: Uint8Array | null,
): Float32Array {
  const out = baseColors.slice();
  if (voxelMask === null) return out;
  const n = sourceVoxel.length;
  for (let i = 0; i < n; i++) {
    if (!voxelMask[Number(sourceVoxel[i])]) {
      out[i * 3] = (out[i * 3] ?? 0) * DIM_FACTOR;
      out[i * 3 + 1] = (out[i * 3 + 1] ?? 0) * DIM_FACTOR;
      out[i * 3 + 2] = (out[i * 3 + 2] ?? 0) * DIM_FACTOR;
    }
  }
  return out;
}

/** Same dimming rule for atom colors, one mask bit per atom. */
export function atomSelectionColors(
  baseColors: Float32Array,
  atomMask: Uint8Array | null,
): Float32Array {
  const out = baseColors.slice();
  if (atomMask === null) return out;
  for (let i = 0; i * 3 < out.length; i++) {
    if (!atomMask[i]) {
      out[i * 3] = (out[i * 3] ?? 0) * DIM_FACTOR;
      out[i * 3 + 1] = (out[i * 3 + 1] ?? 0) * DIM_FACTOR;
      out[i * 3 + 2] = (out[i * 3 + 2] ?? 0) * DIM_FACTOR;
    }
  }
  return out;
}

/**
 * Slab visibility for cloud points: keep points whose source voxel's
 * grid coordinate along `axis` lies in [index, index + thickness).
 * Linear voxel indices are z-fastest: i = (ix * ny + iy) * nz + iz.
 */
export function sliceVisibility(
  sourceVoxel: ArrayLike<number>,
  gridShape: [number, number, number],
  axis: 0 | 1 | 2,
  index: number,
  thickness: number,
): Uint8Array {
  const [, ny, nz] = gridShape;
  const n = sourceVoxel.length;
  const out = new Uint8Array(n);
  for (let i = 0; i < n; i++) {
    const linear = Number(sourceVoxel[i]);
    const iz = linear % nz;
    const iy = Math.floor(linear / nz) % ny;
    const ix = Math.floor(linear / (nz * ny));
    const coord = axis === 0 ? ix : axis === 1 ? iy : iz;
    out[i] = coord >= index && coord < index + thickness ? 1 : 0;
  }
  return out;
}

/** Positions compacted to the visible subset (slicing hides points). */
export function filterPositions(
  positions: ArrayLike<number>,
  colors: Float32Array,
  visible: Uint8Array,
): { positions: Float32Array; colors: Float32Array; count: number } {
  const n = visible.length;
  let count = 0;
  for (let i = 0; i < n; i++) if (visible[i]) count += 1;
  const outPos = new Float32Array(count * 3);
  const outCol = new Float32Array(count * 3);
  let at = 0;
  for (let i = 0; i < n; i++) {
    if (!visible[i]) continue;
    for (let c = 0; c < 3; c++) {
      outPos[at * 3 + c] = Number(positions[i * 3 + c]);
      outCol[at * 3 + c] = colors[i * 3 + c] ?? 0;
    }
    at += 1;
  }
  return { positions: outPos, colors: outCol, count };
}

/** Prefix-sum slices of the pooled row range owned by each system. */
export function systemSlices(
  systems: SystemInfo[],
  kind: "atoms" | "voxels",
): Map<string, [number, number]> {
  const out = new Map<string, [number, number]>();
  let at = 0;
  for (const sys of systems) {
    const n = (kind === "atoms" ? sys.n_atoms : sys.n_voxels) ?? 0;
    out.set(sys.system_id, [at, at + n]);
    at += n;
  }
  return out;
}

export function kindsOf(schema: SchemaDoc): string[] {
  return Object.keys(schema.kinds);
}

// -- three.js assembly --------------------------------------------------------

export interface CloudData {
  positions: Float32Array;
  sourceVoxel: Uint32Array;
  featureValues: Float32Array | null;
}

/** One system's renderable content and the buffers to re-derive it. */
export class SystemScene {
  readonly group = new THREE.Group();
  private atomMesh: THREE.InstancedMesh | null = null;
  private bondLines: THREE.LineSegments | null = null;
  private cloudPoints: THREE.Points | null = null;

  private atomBaseColors: Float32Array | null = null;
  private cloudBase: Float32Array | null = null;
  private cloud: CloudData | null = null;
  private visible: Uint8Array | null = null;

  constructor(
    public readonly systemId: string,
    public readonly gridShape: [number, number, number] | null,
  ) {}

  setAtoms(
    positions: Float32Array,
    atomicNumbers: ArrayLike<number>,
    bonds: ArrayLike<number>,
    encoding: AtomEncoding = {},
    sizeValues?: ArrayLike<number>,
    colorValues?: ArrayLike<number>,
  ): void {
    this.clearAtoms();
    const n = atomicNumbers.length;
    const { scales, colors } = atomInstanceData(atomicNumbers, encoding, sizeValues, colorValues);
    this.atomBaseColors = colors;

    const geom = new THREE.SphereGeometry(1.0, 18, 14);
    const mat = new THREE.MeshLambertMaterial();
    const mesh = new THREE.InstancedMesh(geom, mat, n);
    const m = new THREE.Matrix4();
    for (let i = 0; i < n; i++) {
      const s = scales[i] ?? 1;
      m.makeScale(s, s, s);
      m.setPosition(positions[i * 3] ?? 0, positions[i * 3 + 1] ?? 0, positions[i * 3 + 2] ?? 0);
      mesh.setMatrixAt(i, m);
      mesh.setColorAt(
        i,
        new THREE.Color(colors[i * 3] ?? 0, colors[i * 3 + 1] ?? 0, colors[i * 3 + 2] ?? 0),
      );
    }
    this.atomMesh = mesh;
    this.group.add(mesh);

    const segs = bondSegmentPositions(positions, bonds);
    const lineGeom = new THREE.BufferGeometry();
    lineGeom.setAttribute("position", new THREE.BufferAttribute(segs, 3));
    this.bondLines = new THREE.LineSegments(
      lineGeom,
      new THREE.LineBasicMaterial({ color: 0x888888 }),
    );
    this.group.add(this.bondLines);
  }

  setCloud(cloud: CloudData, colorMapName = "viridis", pointSize = 0.05): void {
    this.clearCloud();
    this.cloud = cloud;
    this.cloudBase =
      cloud.featureValues !== null
        ? cloudBaseColors(cloud.featureValues, colorMapName)
        : cloudBaseColors(new Float32Array(cloud.sourceVoxel.length), colorMapName);
    this.visible = null;

    const geom = new THREE.BufferGeometry();
    geom.setAttribute("position", new THREE.BufferAttribute(cloud.positions.slice(), 3));
    geom.setAttribute("color", new THREE.BufferAttribute(this.cloudBase.slice(), 3));
    const mat = new THREE.PointsMaterial({
      size: pointSize,
      vertexColors: true,
      transparent: true,
      opacity: 0.85,
      sizeAttenuation: true,
    });
    this.cloudPoints = new THREE.Points(geom, mat);
    this.group.add(this.cloudPoints);
  }

  /** Re-shade from the system-local masks without rebuilding geometry. */
  applySelection(atomMask: Uint8Array | null, voxelMask: Uint8Array | null): void {
    if (this.atomMesh !== null && this.atomBaseColors !== null) {
      const shaded = atomSelectionColors(this.atomBaseColors, atomMask);
      const color = new THREE.Color();
      for (let i = 0; i * 3 < shaded.length; i++) {
        color.setRGB(shaded[i * 3] ?? 0, shaded[i * 3 + 1] ?? 0, shaded[i * 3 + 2] ?? 0);
        this.atomMesh.setColorAt(i, color);
      }
      if (this.atomMesh.instanceColor) this.atomMesh.instanceColor.needsUpdate = true;
    }
    if (this.cloudPoints !== null && this.cloud !== null && this.cloudBase !== null) {
      const shaded = cloudSelectionColors(this.cloudBase, this.cloud.sourceVoxel, voxelMask);
      this.rebuildCloudBuffers(shaded);
    }
  }

  /** Restrict the cloud to a slab of voxel layers (null = show all). */
  applySlice(axis: 0 | 1 | 2, index: number, thickness: number): void {
    if (this.cloud === null || this.gridShape === null) return;
    this.visible = sliceVisibility(this.cloud.sourceVoxel, this.gridShape, axis, index, thickness);
    this.rebuildCloudBuffers(this.cloudBase ?? new Float32Array());
  }

  clearSlice(): void {
    this.visible = null;
    if (this.cloudBase !== null) this.rebuildCloudBuffers(this.cloudBase);
  }

  private rebuildCloudBuffers(colors: Float32Array): void {
    if (this.cloudPoints === null || this.cloud === null) return;
    let positions = this.cloud.positions;
    let shownColors = colors;
    if (this.visible !== null) {
      const filtered = filterPositions(this.cloud.positions, colors, this.visible);
      positions = filtered.positions;
      shownColors = filtered.colors;
    }
    const geom = this.cloudPoints.geometry;
    geom.setAttribute("position", new THREE.BufferAttribute(positions.slice(), 3));
    geom.setAttribute("color", new THREE.BufferAttribute(shownColors.slice(), 3));
    geom.attributes.position!.needsUpdate = true;
    geom.attributes.color!.needsUpdate = true;
  }

  private clearAtoms(): void {
    if (this.atomMesh) this.group.remove(this.atomMesh);
    if (this.bondLines) this.group.remove(this.bondLines);
    this.atomMesh = null;
    this.bondLines = null;
  }

  private clearCloud(): void {
    if (this.cloudPoints) this.group.remove(this.cloudPoints);
    this.cloudPoints = null;
  }
}
