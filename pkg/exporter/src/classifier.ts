/**
 * Sequence classifiers the exporter can drive.
 *
 * A classifier consumes marked sentences (one per ordered event pair) and
 * returns one raw logit row per input; the softmax stays on the consuming
 * side so it exists exactly once in the pipeline.
 *
 * Two stub models ship here for contract testing and offline runs:
 *   stub:constant  - every row is [1, 0, 0, ...]
 *   stub:hash      - deterministic logits hashed from the marked input
 *
 * Real fine-tuned models plug in by implementing this interface; see
 * README.md for the adapter recipe (not a tested code path).
 */

export interface SequenceClassifier {
  /** Label order of the output head; must echo the requested label set. */
  headLabels(): string[];
  /** One logit row (width = label count) per input text. */
  logits(texts: string[]): number[][];
}

export class ModelContractError extends Error {
  constructor(message: string) {
    super(message);
    this.name = "ModelContractError";
  }
}

export function constantStub(labels: string[]): SequenceClassifier {
  return {
    headLabels: () => [...labels],
    logits: (texts) => texts.map(() => labels.map((_, k) => (k === 0 ? 1 : 0))),
  };
}

/** FNV-1a over the text plus head index, folded into [-2, 2]. */
function hashedLogit(text: string, head: number): number {
  let h = 0x811c9dc5 ^ head;
  for (let c = 0; c < text.length; c++) {
    h ^= text.charCodeAt(c);
    h = Math.imul(h, 0x01000193);
  }
  return ((h >>> 0) / 0xffffffff) * 4 - 2;
}

export function hashStub(labels: string[]): SequenceClassifier {
  return {
    headLabels: () => [...labels],
    logits: (texts) =>
      texts.map((t) => labels.map((_, k) => hashedLogit(t, k))),
  };
}

export function loadClassifier(modelRef: string, labels: string[]): SequenceClassifier {
  if (modelRef === "stub:constant") return constantStub(labels);
  if (modelRef === "stub:hash") return hashStub(labels);
  throw new ModelContractError(
    `no loader for model '${modelRef}'; built-in references are stub:constant and ` +
    `stub:hash (real models plug in through the SequenceClassifier interface, ` +
    `see README.md)`);
}
