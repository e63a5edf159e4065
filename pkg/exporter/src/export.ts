/**
 * Export job: one logits row per ordered event pair of every document,
 * preceded by the header line carrying label order and provenance.
 */

import { DocumentRecord, orderedPairs, parseCorpus } from "./corpus.js";
import { ModelContractError, SequenceClassifier, loadClassifier } from "./classifier.js";

export interface ExportJob {
  modelRef: string;
  corpusText: string;
  labels: string[];
  outStream: { write(chunk: string): unknown };
  /** Template for event markers; {K} is the event slot (1 or 2). */
  markerOpen?: string;
  markerClose?: string;
  batchSize?: number;
  deviceHint?: string;
}

export const DEFAULT_MARKER_OPEN = "[EV{K}]";
export const DEFAULT_MARKER_CLOSE = "[/EV{K}]";

/**
 * Sentence for one ordered pair: every event surface in document order,
 * with the source event wrapped in slot-1 markers and the target event in
 * slot-2 markers.  Swapping (i, j) swaps the markers, so the two
 * directions are two distinct forward passes.
 */
export function markedInput(
  doc: DocumentRecord, i: number, j: number,
  open = DEFAULT_MARKER_OPEN, close = DEFAULT_MARKER_CLOSE,
): string {
  const slot = (k: number) => ({
    open: open.replaceAll("{K}", String(k)),
    close: close.replaceAll("{K}", String(k)),
  });
  const parts = doc.events.map((e) => {
    if (e.idx === i) return `${slot(1).open} ${e.surface} ${slot(1).close}`;
    if (e.idx === j) return `${slot(2).open} ${e.surface} ${slot(2).close}`;
    return e.surface;
  });
  return parts.join(" ");
}

export function checkHead(model: SequenceClassifier, labels: string[]): void {
  const head = model.headLabels();
  if (head.length !== labels.length) {
    throw new ModelContractError(
      `classifier head width ${head.length} != label set size ${labels.length}`);
  }
  for (let k = 0; k < labels.length; k++) {
    if (head[k] !== labels[k]) {
      throw new ModelContractError(
        `classifier head order [${head.join(", ")}] does not echo the requested ` +
        `label set [${labels.join(", ")}]`);
    }
  }
}

export interface ExportStats {
  documents: number;
  rows: number;
}

export function runExport(job: ExportJob): ExportStats {
  if (job.labels.length < 2) {
    throw new ModelContractError("label set needs at least 2 labels");
  }
  const model = loadClassifier(job.modelRef, job.labels);
  checkHead(model, job.labels);  // echo check, before any inference
  const docs = parseCorpus(job.corpusText);
  const batchSize = Math.max(1, job.batchSize ?? 64);

  job.outStream.write(JSON.stringify({
    label_set: job.labels,
    provenance: `exporter:${job.modelRef}`,
  }) + "\n");

  let rows = 0;
  for (const doc of docs) {
    const pairs = orderedPairs(doc.events.length);
    for (let start = 0; start < pairs.length; start += batchSize) {
      const batch = pairs.slice(start, start + batchSize);
      const texts = batch.map(([i, j]) =>
        markedInput(doc, i, j, job.markerOpen, job.markerClose));
      const logits = model.logits(texts);
      if (logits.length !== batch.length) {
        throw new ModelContractError(
          `classifier returned ${logits.length} rows for a batch of ${batch.length}`);
      }
      for (let k = 0; k < batch.length; k++) {
        const row = logits[k];
        if (row.length !== job.labels.length || row.some((v) => !Number.isFinite(v))) {
          throw new ModelContractError(
            `bad logits row for pair (${doc.docId}, ${batch[k][0]}, ${batch[k][1]})`);
        }
        job.outStream.write(JSON.stringify({
          doc: doc.docId, i: batch[k][0], j: batch[k][1], logits: row,
        }) + "\n");
        rows++;
      }
    }
  }
  return { documents: docs.length, rows };
}
