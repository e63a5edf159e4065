#!/usr/bin/env node
/**
 * CLI: read a corpus, run the referenced classifier over every ordered
 * event pair, write the probability interchange file (header + logit rows).
 *
 *   node dist/cli.js --model stub:hash --corpus corpus.jsonl \
 *     --labels BEFORE,AFTER,EQUAL,VAGUE --out probs.jsonl
 */

import * as fs from "node:fs";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";
import { CorpusFormatError } from "./corpus.js";
import { ModelContractError } from "./classifier.js";
import { DEFAULT_MARKER_CLOSE, DEFAULT_MARKER_OPEN, runExport } from "./export.js";

async function main(): Promise<number> {
  const argv = await yargs(hideBin(process.argv))
    .option("model", { type: "string", demandOption: true,
                       describe: "model reference (stub:constant | stub:hash | adapter id)" })
    .option("corpus", { type: "string", demandOption: true, describe: "corpus JSONL path" })
    .option("labels", { type: "string", demandOption: true,
                        describe: "comma-separated label order of the classifier head" })
    .option("out", { type: "string", demandOption: true, describe: "output path" })
    .option("batch-size", { type: "number", default: 64 })
    .option("marker-open", { type: "string", default: DEFAULT_MARKER_OPEN })
    .option("marker-close", { type: "string", default: DEFAULT_MARKER_CLOSE })
    .option("device", { type: "string", describe: "device hint passed to real adapters" })
    .strict()
    .parse();

  if (!fs.existsSync(argv.corpus)) {
    process.stderr.write(JSON.stringify({ error: "missing-file", detail: argv.corpus }) + "\n");
    return 3;
  }
  const corpusText = fs.readFileSync(argv.corpus, "utf-8");
  const labels = argv.labels.split(",").map((s) => s.trim()).filter(Boolean);
  const outStream = fs.createWriteStream(argv.out, { encoding: "utf-8" });
  try {
    const stats = runExport({
      modelRef: argv.model,
      corpusText,
      labels,
      outStream,
      markerOpen: argv["marker-open"],
      markerClose: argv["marker-close"],
      batchSize: argv["batch-size"],
      deviceHint: argv.device,
    });
    await new Promise<void>((resolve, reject) =>
      outStream.end((err: unknown) => (err ? reject(err) : resolve())));
    process.stdout.write(
      `exported ${stats.rows} pair row(s) over ${stats.documents} document(s) to ${argv.out}\n`);
    return 0;
  } catch (err) {
    outStream.end();
    if (err instanceof CorpusFormatError) {
      process.stderr.write(JSON.stringify({ error: "format", detail: err.message }) + "\n");
      return 4;
    }
    if (err instanceof ModelContractError) {
      process.stderr.write(JSON.stringify({ error: "model-contract", detail: err.message }) + "\n");
      return 5;
    }
    if (err instanceof Error && /heap|allocation|memory/i.test(err.message)) {
      process.stderr.write(JSON.stringify({
        error: "out-of-memory",
        detail: `${err.message}; try a smaller --batch-size (current ${argv["batch-size"]})`,
      }) + "\n");
      return 7;
    }
    throw err;
  }
}

main().then((code) => process.exit(code));
