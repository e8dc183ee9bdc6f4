/**
 * Browser entry point. Wires the HTTP/push client into the panel and
 * scene layers: one 3D viewport holding every system side by side, a
 * panel column for the 2D plots, and an option box whose controls all
 * map one-to-one onto server parameters.
 *
 * All derived data comes from the server. This file only moves bytes
 * between endpoints and GPU buffers and keeps frames version-coherent:
 * a new selection is painted only once every mask for it has arrived.
 */

import * as THREE from "three";
import { OrbitControls } from "three/examples/jsm/controls/OrbitControls.js";

import { ApiClient, EventStream, ApiError } from "./api.js";
import type { SchemaDoc, SystemInfo } from "./api.js";
import { SelectionStore } from "./store.js";
import { SystemScene, systemSlices } from "./scene.js";
import type { CloudData } from "./scene.js";
import { ScatterPanel, CorrelationPanel, PcaPanel } from "./panels.js";
import type { PanelHost, ScatterConfig, PcaConfig } from "./panels.js";
import { COLOR_MAPS } from "./colormap.js";

const ATOMS = "atoms";
const VOXELS = "voxels";

interface ViewerOptions {
  colorColumn: string | null;
  colorMap: string;
  pointSize: number;
  cloudCount: number;
  cloudSeed: number;
  sliceAxis: 0 | 1 | 2;
  sliceIndex: number;
  sliceThickness: number;
  sliceOn: boolean;
}

class Viewer implements PanelHost {
  private api = new ApiClient();
  private schema: SchemaDoc | null = null;
  private store: SelectionStore | null = null;
  private stream: EventStream | null = null;

  private scenes = new Map<string, SystemScene>();
  private clouds = new Map<string, CloudData>();
  private panels: Array<ScatterPanel | PcaPanel | CorrelationPanel> = [];
  private nextPanelId = 1;

  private three = {
    scene: new THREE.Scene(),
    camera: new THREE.PerspectiveCamera(50, 1, 0.1, 5000),
    renderer: null as THREE.WebGLRenderer | null,
    controls: null as OrbitControls | null,
  };

  private opts: ViewerOptions = {
    colorColumn: null,
    colorMap: "viridis",
    pointSize: 0.06,
    cloudCount: 100_000,
    cloudSeed: 0,
    sliceAxis: 2,
    sliceIndex: 0,
    sliceThickness: 2,
    sliceOn: false,
  };

  private panelColumn!: HTMLElement;
  private errorStrip!: HTMLElement;

  constructor(private rootEl: HTMLElement) {}

  versionsNow(): { selection: number; data: number } {
    return {
      selection: this.store?.selectionVersion ?? 0,
      data: this.store?.dataVersion ?? 0,
    };
  }

  onError(message: string): void {
    this.errorStrip.textContent = message;
    this.errorStrip.classList.add("visible");
    setTimeout(() => this.errorStrip.classList.remove("visible"), 6000);
  }

  async boot(): Promise<void> {
    this.buildChrome();
    const schema = await this.api.schema();
    this.schema = schema;
    this.opts.colorColumn = schema.kinds[VOXELS]?.columns[0]?.name ?? null;

    const store = new SelectionStore(this.api, Object.keys(schema.kinds));
    this.store = store;
    store.subscribe(() => this.applyMasks());
    store.versionsSeen(schema.selection_version, schema.data_version);

    this.buildOptionBox(schema);
    await this.buildScenes(schema);
    this.buildDefaultPanels(schema);
    await this.refreshPanels();

    const wsProto = location.protocol === "https:" ? "wss:" : "ws:";
    this.stream = new EventStream(`${wsProto}//${location.host}/api/events`, (sel, data) => {
      const before = this.versionsNow();
      if (store.versionsSeen(sel, data) && data > before.data) {
        // data version moved: derived columns appeared, plots must refetch
        void this.refreshPanels();
      } else if (sel > before.selection) {
        void this.refreshPanels();
      }
    });
    this.stream.start();
    this.animate();
  }

  // -- layout ------------------------------------------------------------

  private buildChrome(): void {
    this.rootEl.innerHTML = "";
    const bar = document.createElement("div");
    bar.className = "topbar";
    this.rootEl.appendChild(bar);

    const title = document.createElement("span");
    title.className = "apptitle";
    title.textContent = "featurescope";
    bar.appendChild(title);

    bar.appendChild(this.combineModeControl());
    bar.appendChild(this.button("save session", () => void this.saveSession()));
    bar.appendChild(this.sessionLoadControl());
    bar.appendChild(this.button("export selection", () => void this.exportSelection()));
    bar.appendChild(this.button("clear brushes", () => void this.api.clearBrushes().catch(
      (e) => this.onError(String(e)),
    )));

    this.errorStrip = document.createElement("div");
    this.errorStrip.className = "errorstrip";
    bar.appendChild(this.errorStrip);

    const body = document.createElement("div");
    body.className = "body";
    this.rootEl.appendChild(body);

    this.panelColumn = document.createElement("div");
    this.panelColumn.className = "panels";
    body.appendChild(this.panelColumn);

    const viewport = document.createElement("div");
    viewport.className = "viewport";
    body.appendChild(viewport);

    const renderer = new THREE.WebGLRenderer({ antialias: true });
    renderer.setClearColor(0x0d0f14);
    viewport.appendChild(renderer.domElement);
    this.three.renderer = renderer;
    this.three.controls = new OrbitControls(this.three.camera, renderer.domElement);

    const resize = () => {
      const w = viewport.clientWidth || 800;
      const h = viewport.clientHeight || 600;
      renderer.setSize(w, h);
      this.three.camera.aspect = w / h;
      this.three.camera.updateProjectionMatrix();
    };
    window.addEventListener("resize", resize);
    setTimeout(resize, 0);

    this.three.scene.add(new THREE.AmbientLight(0xffffff, 0.7));
    const sun = new THREE.DirectionalLight(0xffffff, 1.2);
    sun.position.set(30, 50, 40);
    this.three.scene.add(sun);
  }

  private button(label: string, onClick: () => void): HTMLButtonElement {
    const b = document.createElement("button");
    b.textContent = label;
    b.addEventListener("click", onClick);
    return b;
  }

  private combineModeControl(): HTMLElement {
    const sel = document.createElement("select");
    for (const mode of ["intersection", "union"]) {
      const opt = document.createElement("option");
      opt.value = mode;
      opt.textContent = `combine: ${mode}`;
      sel.appendChild(opt);
    }
    sel.addEventListener("change", () => {
      void this.api
        .setCombineMode(sel.value as "intersection" | "union")
        .catch((e) => this.onError(String(e)));
    });
    return sel;
  }

  private sessionLoadControl(): HTMLElement {
    const input = document.createElement("input");
    input.type = "file";
    input.accept = "application/json";
    input.style.display = "none";
    input.addEventListener("change", () => {
      const file = input.files?.[0];
      if (file === undefined) return;
      void file
        .text()
        .then((doc) => this.api.sessionRestore(doc))
        .then(() => this.refreshPanels())
        .catch((e) => this.onError(String(e)));
    });
    const wrap = document.createElement("span");
    wrap.appendChild(this.button("load session", () => input.click()));
    wrap.appendChild(input);
    return wrap;
  }

  // -- option box ----------------------------------------------------------

  private buildOptionBox(schema: SchemaDoc): void {
    const box = document.createElement("div");
    box.className = "options";
    this.panelColumn.appendChild(box);

    const row = (label: string, control: HTMLElement) => {
      const r = document.createElement("label");
      r.className = "optrow";
      const span = document.createElement("span");
      span.textContent = label;
      r.appendChild(span);
      r.appendChild(control);
      box.appendChild(r);
    };

    const colorSel = document.createElement("select");
    for (const col of schema.kinds[VOXELS]?.columns ?? []) {
      const opt = document.createElement("option");
      opt.value = col.name;
      opt.textContent = col.name;
      colorSel.appendChild(opt);
    }
    colorSel.addEventListener("change", () => {
      this.opts.colorColumn = colorSel.value;
      void this.recolorClouds();
    });
    row("cloud color", colorSel);

    const mapSel = document.createElement("select");
    for (const name of COLOR_MAPS) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      mapSel.appendChild(opt);
    }
    mapSel.addEventListener("change", () => {
      this.opts.colorMap = mapSel.value;
      void this.recolorClouds();
    });
    row("color map", mapSel);

    const sizeInput = document.createElement("input");
    sizeInput.type = "range";
    sizeInput.min = "0.01";
    sizeInput.max = "0.3";
    sizeInput.step = "0.01";
    sizeInput.value = String(this.opts.pointSize);
    sizeInput.addEventListener("input", () => {
      this.opts.pointSize = Number(sizeInput.value);
      void this.reloadClouds(false);
    });
    row("point size", sizeInput);

    const countSel = document.createElement("select");
    for (const count of [20_000, 50_000, 100_000, 250_000, 500_000]) {
      const opt = document.createElement("option");
      opt.value = String(count);
      opt.textContent = count.toLocaleString();
      if (count === this.opts.cloudCount) opt.selected = true;
      countSel.appendChild(opt);
    }
    countSel.addEventListener("change", () => {
      this.opts.cloudCount = Number(countSel.value);
      void this.reloadClouds(true);
    });
    row("cloud density", countSel);

    const resSel = document.createElement("select");
    for (const [label, ratio] of [
      ["full", 1],
      ["half", 0.5],
      ["quarter", 0.25],
    ] as const) {
      const opt = document.createElement("option");
      opt.value = String(ratio);
      opt.textContent = label;
      resSel.appendChild(opt);
    }
    resSel.addEventListener("change", () => {
      this.three.renderer?.setPixelRatio(Number(resSel.value));
    });
    row("resolution", resSel);

    const sliceToggle = document.createElement("input");
    sliceToggle.type = "checkbox";
    const sliceAxis = document.createElement("select");
    for (const [label, axis] of [
      ["x", 0],
      ["y", 1],
      ["z", 2],
    ] as const) {
      const opt = document.createElement("option");
      opt.value = String(axis);
      opt.textContent = label;
      if (axis === this.opts.sliceAxis) opt.selected = true;
      sliceAxis.appendChild(opt);
    }
    const sliceIdx = document.createElement("input");
    sliceIdx.type = "range";
    sliceIdx.min = "0";
    sliceIdx.max = "15";
    sliceIdx.value = "0";
    const applySlice = () => {
      this.opts.sliceOn = sliceToggle.checked;
      this.opts.sliceAxis = Number(sliceAxis.value) as 0 | 1 | 2;
      this.opts.sliceIndex = Number(sliceIdx.value);
      const maxIdx = Math.max(
        0,
        ...(this.schema?.systems ?? []).map((s) => (s.grid_shape?.[this.opts.sliceAxis] ?? 1) - 1),
      );
      sliceIdx.max = String(maxIdx);
      for (const scene of this.scenes.values()) {
        if (this.opts.sliceOn) {
          scene.applySlice(this.opts.sliceAxis, this.opts.sliceIndex, this.opts.sliceThickness);
        } else {
          scene.clearSlice();
        }
      }
      this.applyMasks();
    };
    sliceToggle.addEventListener("change", applySlice);
    sliceAxis.addEventListener("change", applySlice);
    sliceIdx.addEventListener("input", applySlice);
    row("slice", sliceToggle);
    row("slice axis", sliceAxis);
    row("slice layer", sliceIdx);

    box.appendChild(
      this.button("add pca panel", () => {
        const kind = this.largestKind(schema);
        if (kind === null) return;
        this.spawnPcaPanel(kind);
      }),
    );
  }

  private largestKind(schema: SchemaDoc): string | null {
    let best: string | null = null;
    let bestN = -1;
    for (const [kind, info] of Object.entries(schema.kinds)) {
      if (info.columns.length >= 2 && info.n_points > bestN) {
        best = kind;
        bestN = info.n_points;
      }
    }
    return best;
  }

  // -- scenes --------------------------------------------------------------

  private async buildScenes(schema: SchemaDoc): Promise<void> {
    let offset = 0;
    for (const sys of schema.systems) {
      const scene = new SystemScene(sys.system_id, sys.grid_shape);
      this.scenes.set(sys.system_id, scene);
      this.three.scene.add(scene.group);
      const extent = await this.populateScene(scene, sys);
      scene.group.position.setX(offset);
      offset += extent * 1.4 + 2.0;
    }
    const center = offset / 2;
    this.three.camera.position.set(center, offset * 0.4, offset * 0.9 + 6);
    this.three.controls?.target.set(center, 0, 0);
    this.three.controls?.update();
  }

  private async populateScene(scene: SystemScene, sys: SystemInfo): Promise<number> {
    let extent = 4;
    try {
      if (sys.n_atoms !== null && sys.n_atoms > 0) {
        const tile = await this.api.atomsTile(sys.system_id);
        const pos = tile["positions"]?.data as Float32Array;
        const z = tile["atomic_numbers"]?.data as Uint16Array;
        const bonds = (tile["bonds"]?.data ?? new Uint32Array()) as Uint32Array;
        scene.setAtoms(pos, z, bonds);
        extent = Math.max(extent, spread(pos));
      }
      if (sys.grid_shape !== null) {
        const cloud = await this.fetchCloud(sys.system_id);
        scene.setCloud(cloud, this.opts.colorMap, this.opts.pointSize);
        extent = Math.max(extent, spread(cloud.positions));
      }
    } catch (err) {
      this.onError(`system ${sys.system_id}: ${String(err)}`);
    }
    return extent;
  }

  private async fetchCloud(systemId: string): Promise<CloudData> {
    const tile = await this.api.cloudTile(systemId, this.opts.cloudCount, this.opts.cloudSeed);
    const positions = tile["positions"]?.data as Float32Array;
    const sourceVoxel = tile["source_voxel"]?.data as Uint32Array;
    let featureValues: Float32Array | null = null;
    if (this.opts.colorColumn !== null) {
      const colTile = await this.api.columnTile(VOXELS, this.opts.colorColumn, systemId);
      const values = colTile["values"]?.data as Float32Array;
      featureValues = new Float32Array(sourceVoxel.length);
      for (let i = 0; i < sourceVoxel.length; i++) {
        featureValues[i] = values[sourceVoxel[i] ?? 0] ?? NaN;
      }
    }
    const cloud = { positions, sourceVoxel, featureValues };
    this.clouds.set(systemId, cloud);
    return cloud;
  }

  private async recolorClouds(): Promise<void> {
    await this.reloadClouds(false);
  }

  private async reloadClouds(refetch: boolean): Promise<void> {
    if (this.schema === null) return;
    for (const sys of this.schema.systems) {
      if (sys.grid_shape === null) continue;
      const scene = this.scenes.get(sys.system_id);
      if (scene === undefined) continue;
      try {
        const cloud =
          refetch || !this.clouds.has(sys.system_id)
            ? await this.fetchCloud(sys.system_id)
            : await this.refreshCloudColors(sys.system_id);
        scene.setCloud(cloud, this.opts.colorMap, this.opts.pointSize);
        if (this.opts.sliceOn) {
          scene.applySlice(this.opts.sliceAxis, this.opts.sliceIndex, this.opts.sliceThickness);
        }
      } catch (err) {
        this.onError(String(err));
      }
    }
    this.applyMasks();
  }

  private async refreshCloudColors(systemId: string): Promise<CloudData> {
    const cloud = this.clouds.get(systemId);
    if (cloud === undefined) return this.fetchCloud(systemId);
    if (this.opts.colorColumn === null) return cloud;
    const colTile = await this.api.columnTile(VOXELS, this.opts.colorColumn, systemId);
    const values = colTile["values"]?.data as Float32Array;
    const featureValues = new Float32Array(cloud.sourceVoxel.length);
    for (let i = 0; i < cloud.sourceVoxel.length; i++) {
      featureValues[i] = values[cloud.sourceVoxel[i] ?? 0] ?? NaN;
    }
    const updated = { ...cloud, featureValues };
    this.clouds.set(systemId, updated);
    return updated;
  }

  /** Push the latest coherent masks into every scene. */
  private applyMasks(): void {
    if (this.schema === null || this.store === null) return;
    if (!this.store.coherent()) return; // hold the last coherent frame
    const atomSlices = systemSlices(this.schema.systems, ATOMS);
    const voxelSlices = systemSlices(this.schema.systems, VOXELS);
    const atomMask = this.store.maskFor(ATOMS);
    const voxelMask = this.store.maskFor(VOXELS);
    for (const [sid, scene] of this.scenes) {
      const aSlice = atomSlices.get(sid);
      const vSlice = voxelSlices.get(sid);
      scene.applySelection(
        atomMask !== null && aSlice !== undefined
          ? atomMask.subarray(aSlice[0], aSlice[1])
          : null,
        voxelMask !== null && vSlice !== undefined
          ? voxelMask.subarray(vSlice[0], vSlice[1])
          : null,
      );
    }
  }

  // -- panels --------------------------------------------------------------

  private buildDefaultPanels(schema: SchemaDoc): void {
    for (const [kind, info] of Object.entries(schema.kinds)) {
      if (info.columns.length < 2) continue;
      this.addPanel(
        new CorrelationPanel(this.api, this, kind, (x, y) => this.spawnScatter(kind, x, y)),
      );
    }
    const kind = this.largestKind(schema);
    const cols = kind !== null ? schema.kinds[kind]?.columns ?? [] : [];
    if (kind !== null && cols.length >= 2) {
      this.spawnScatter(kind, cols[0]!.name, cols[1]!.name);
    }
  }

  private spawnScatter(kind: string, x: string, y: string): void {
    const config: ScatterConfig = {
      plotId: `p${this.nextPanelId++}`,
      kind,
      x,
      y,
      bins: [96, 96],
      colorMap: this.opts.colorMap,
    };
    const panel = new ScatterPanel(this.api, this, config);
    this.addPanel(panel);
    void panel.refresh();
  }

  private spawnPcaPanel(kind: string): void {
    const columns = (this.schema?.kinds[kind]?.columns ?? []).map((c) => c.name);
    if (columns.length < 2) return;
    const config: PcaConfig = {
      plotId: `p${this.nextPanelId++}`,
      kind,
      columns,
      k: 2,
      ax: 0,
      ay: 1,
      standardized: true,
      bins: [96, 96],
      colorMap: this.opts.colorMap,
    };
    const panel = new PcaPanel(this.api, this, config);
    this.addPanel(panel);
    void panel.refresh();
  }

  private addPanel(panel: ScatterPanel | PcaPanel | CorrelationPanel): void {
    this.panels.push(panel);
    const frame = document.createElement("div");
    frame.className = "panel-frame";
    const close = this.button("x", () => {
      this.panels = this.panels.filter((p) => p !== panel);
      frame.remove();
    });
    close.className = "panel-close";
    frame.appendChild(close);
    frame.appendChild(panel.root);
    this.panelColumn.appendChild(frame);
  }

  private async refreshPanels(): Promise<void> {
    await Promise.all(this.panels.map((p) => p.refresh()));
  }

  // -- session and export ----------------------------------------------------

  private async saveSession(): Promise<void> {
    try {
      const doc = await this.api.sessionSnapshot();
      const blob = new Blob([doc], { type: "application/json" });
      const a = document.createElement("a");
      a.href = URL.createObjectURL(blob);
      a.download = "session.json";
      a.click();
      URL.revokeObjectURL(a.href);
    } catch (err) {
      this.onError(String(err));
    }
  }

  private async exportSelection(): Promise<void> {
    const path = window.prompt("server-side output path", "selection.csv");
    if (path === null || path === "") return;
    try {
      const result = await this.api.exportSelection(ATOMS, path);
      this.onError(`wrote ${result.rows} rows to ${result.path}`);
    } catch (err) {
      if (err instanceof ApiError) this.onError(`export failed [${err.code}]: ${err.message}`);
      else this.onError(String(err));
    }
  }

  private animate(): void {
    const tick = () => {
      requestAnimationFrame(tick);
      this.three.controls?.update();
      if (this.three.renderer !== null) {
        this.three.renderer.render(this.three.scene, this.three.camera);
      }
    };
    tick();
  }
}

function spread(positions: Float32Array): number {
  let lo = Infinity;
  let hi = -Infinity;
  for (let i = 0; i < positions.length; i += 3) {
    const x = positions[i] ?? 0;
    lo = Math.min(lo, x);
    hi = Math.max(hi, x);
  }
  return Number.isFinite(hi - lo) ? Math.max(hi - lo, 1) : 4;
}

const root = document.getElementById("app");
if (root !== null) {
  const viewer = new Viewer(root);
  viewer.boot().catch((err) => {
    root.textContent = `failed to start: ${String(err)}`;
  });
}
