/**
 * Variant gallery: every result is content-hashed; a repeated hash gets an
 * "identical" badge, which is how seed determinism becomes visible.
 */
import { contentHash } from "./hash.js";
import type { MotionJson } from "./types.js";

export interface GalleryEntry {
  id: number;
  label: string;
  seed: number | null;
  motion: MotionJson;
  hash: string;
  duplicateOf: number | null;
}

export class Gallery {
  entries: GalleryEntry[] = [];
  private nextId = 1;

  add(label: string, motion: MotionJson, seed: number | null = null): GalleryEntry {
    const hash = contentHash(motion);
    const twin = this.entries.find((e) => e.hash === hash);
    const entry: GalleryEntry = {
      id: this.nextId++,
      label,
      seed,
      motion,
      hash,
      duplicateOf: twin ? twin.id : null,
    };
    this.entries.push(entry);
    return entry;
  }

  hasDuplicateBadge(entryId: number): boolean {
    const entry = this.entries.find((e) => e.id === entryId);
    return !!entry && entry.duplicateOf !== null;
  }

  clear(): void {
    this.entries = [];
  }
}
