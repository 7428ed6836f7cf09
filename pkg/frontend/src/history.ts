/** In-memory, append-only session history; cleared on page reload. */

export interface HistoryEntry {
  readonly question: string;
  readonly answerText: string;
  readonly charStart: number;
  readonly charEnd: number;
  readonly score: number;
  readonly timestamp: number;
  /** dataset context id, or "pasted:<hash>" for free text */
  readonly contextRef: string;
}

/** FNV-1a 32-bit, hex encoded; identifies pasted contexts in the history. */
export function hashText(text: string): string {
  let hash = 0x811c9dc5;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash.toString(16).padStart(8, "0");
}

export class SessionHistory {
  private readonly entries: HistoryEntry[] = [];

  add(entry: HistoryEntry): void {
    this.entries.push(Object.freeze({ ...entry }));
  }

  /** Insertion order; rendering must preserve it. */
  all(): readonly HistoryEntry[] {
    return this.entries;
  }

  get length(): number {
    return this.entries.length;
  }
}
