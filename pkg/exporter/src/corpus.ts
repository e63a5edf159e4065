/**
 * Reader for the corpus JSONL format consumed by the graph pipeline.
 *
 * Each line is either a document's event list or a labeled pair; the
 * exporter only needs the events (it emits one row per ordered event
 * pair), but pair lines are still validated structurally so a corrupt
 * corpus fails here rather than downstream.
 */

export interface EventRecord {
  idx: number;
  type: string;
  surface: string;
}

export interface DocumentRecord {
  docId: string;
  events: EventRecord[];
}

export class CorpusFormatError extends Error {
  constructor(message: string, public readonly line: number) {
    super(`line ${line}: ${message}`);
    this.name = "CorpusFormatError";
  }
}

export function parseCorpus(text: string): DocumentRecord[] {
  const docs: DocumentRecord[] = [];
  const seen = new Set<string>();
  const lines = text.split("\n");
  for (let n = 0; n < lines.length; n++) {
    const line = lines[n].trim();
    if (!line) continue;
    let obj: any;
    try {
      obj = JSON.parse(line);
    } catch (err) {
      throw new CorpusFormatError(`invalid JSON (${(err as Error).message})`, n + 1);
    }
    if (obj && typeof obj === "object" && "events" in obj) {
      const docId = String(obj.doc ?? "");
      if (!docId) throw new CorpusFormatError("event line missing 'doc' id", n + 1);
      if (seen.has(docId)) throw new CorpusFormatError(`duplicate document '${docId}'`, n + 1);
      if (!Array.isArray(obj.events) || obj.events.length === 0) {
        throw new CorpusFormatError(`document '${docId}' has no events`, n + 1);
      }
      const events: EventRecord[] = obj.events.map((e: any) => ({
        idx: Number(e.idx),
        type: String(e.type ?? ""),
        surface: String(e.surface ?? ""),
      }));
      const indices = events.map((e) => e.idx).sort((a, b) => a - b);
      for (let k = 0; k < indices.length; k++) {
        if (indices[k] !== k) {
          throw new CorpusFormatError(
            `document '${docId}' order indices must be contiguous from 0`, n + 1);
        }
      }
      events.sort((a, b) => a.idx - b.idx);
      seen.add(docId);
      docs.push({ docId, events });
    } else if (obj && typeof obj === "object" && "pair" in obj) {
      const p = obj.pair;
      if (typeof p !== "object" || p === null || !("doc" in p) || !("i" in p) || !("j" in p)) {
        throw new CorpusFormatError("malformed pair line", n + 1);
      }
    } else {
      throw new CorpusFormatError("line is neither an event line nor a pair line", n + 1);
    }
  }
  return docs;
}

/** Ordered distinct pairs of a document, row-major: (0,1), (0,2), ..., (N-1,N-2). */
export function orderedPairs(n: number): Array<[number, number]> {
  const out: Array<[number, number]> = [];
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < n; j++) {
      if (i !== j) out.push([i, j]);
    }
  }
  return out;
}
