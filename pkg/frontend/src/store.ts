/**
 * Version-ordered selection state shared by every view.
 *
 * The invariant: no rendered frame mixes mask versions. Masks are only
 * handed out when they match the newest selection version we know of;
 * anything older is treated as absent, which reads as "keep the last
 * coherent frame until the refetch lands".
 */

import type { ApiClient } from "./api.js";
import { runsToMask } from "./wire.js";

interface VersionedMask {
  mask: Uint8Array;
  version: number;
}

type MaskFetcher = Pick<ApiClient, "mask">;

export class SelectionStore {
  private masks = new Map<string, VersionedMask>();
  private selectionVersionValue = 0;
  private dataVersionValue = 0;
  private listeners = new Set<() => void>();

  constructor(
    private api: MaskFetcher,
    private kinds: string[],
  ) {}

  get selectionVersion(): number {
    return this.selectionVersionValue;
  }

  get dataVersion(): number {
    return this.dataVersionValue;
  }

  subscribe(fn: () => void): () => void {
    this.listeners.add(fn);
    return () => this.listeners.delete(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn();
  }

  /**
   * Feed versions from any server response or push note. Returns true
   * when something new was learned (and refetches were kicked off).
   */
  versionsSeen(selectionVersion: number, dataVersion: number): boolean {
    let advanced = false;
    if (dataVersion > this.dataVersionValue) {
      this.dataVersionValue = dataVersion;
      advanced = true;
    }
    if (selectionVersion > this.selectionVersionValue) {
      this.selectionVersionValue = selectionVersion;
      advanced = true;
      for (const kind of this.kinds) void this.refetch(kind);
    }
    if (advanced) this.emit();
    return advanced;
  }

  private async refetch(kind: string): Promise<void> {
    const wanted = this.selectionVersionValue;
    let doc;
    try {
      doc = await this.api.mask(kind);
    } catch {
      return; // transient failure: the next versions note retries us
    }
    if (doc.selection_version < wanted) return; // stale response, drop it
    const current = this.masks.get(kind);
    if (current !== undefined && current.version >= doc.selection_version) return;
    this.masks.set(kind, {
      mask: runsToMask(doc.runs, doc.n),
      version: doc.selection_version,
    });
    // the server can be ahead of the last push note; follow it
    if (doc.selection_version > this.selectionVersionValue) {
      this.selectionVersionValue = doc.selection_version;
    }
    this.emit();
  }

  /** The mask for a kind, only if it is current; null while catching up. */
  maskFor(kind: string): Uint8Array | null {
    const entry = this.masks.get(kind);
    if (entry === undefined || entry.version !== this.selectionVersionValue) return null;
    return entry.mask;
  }

  /** True once every kind has a mask at the current version. */
  coherent(): boolean {
    return this.kinds.every((kind) => this.maskFor(kind) !== null);
  }
}
