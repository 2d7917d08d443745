/** Command line: train on a directory of internal-format records and
 * export weight, history and golden-embedding artifacts. */
import * as fs from "fs";
import * as path from "path";
import { parseArgs } from "util";

import { initBackend } from "./backend";
import { VaeModel } from "./model";
import { loadCorpus } from "./records";
import { exportGolden, exportWeights, train, writeHistory,
         DEFAULT_TRAIN } from "./train";
import { DEFAULT_ARCH } from "./weights";

async function main(): Promise<number> {
  const { values, positionals } = parseArgs({
    allowPositionals: true,
    options: {
      corpus: { type: "string" },
      out: { type: "string", default: "artifacts" },
      epochs: { type: "string", default: String(DEFAULT_TRAIN.epochs) },
      batch: { type: "string", default: String(DEFAULT_TRAIN.batchSize) },
      lr: { type: "string", default: String(DEFAULT_TRAIN.learningRate) },
      beta: { type: "string", default: String(DEFAULT_TRAIN.beta) },
      seed: { type: "string", default: "0" },
      "golden-count": { type: "string", default: "0" },
    },
  });

  if (positionals[0] !== "train" || !values.corpus) {
    console.error("usage: cli.js train --corpus DIR [--out DIR] "
      + "[--epochs N] [--batch N] [--lr F] [--beta F] [--seed N] "
      + "[--golden-count N]");
    return 2;
  }

  const backend = await initBackend();
  console.log(`backend: ${backend}`);

  const { records, skipped } = loadCorpus(values.corpus);
  console.log(`corpus: ${records.length} records`
    + (skipped.length ? `, ${skipped.length} skipped` : ""));

  const cfg = {
    epochs: parseInt(values.epochs!, 10),
    batchSize: parseInt(values.batch!, 10),
    learningRate: parseFloat(values.lr!),
    beta: parseFloat(values.beta!),
    seed: parseInt(values.seed!, 10),
  };

  const outDir = values.out!;
  fs.mkdirSync(outDir, { recursive: true });

  const t0 = Date.now();
  const model = new VaeModel(DEFAULT_ARCH, cfg.seed);
  const { history } = train(records, cfg, model, (h) => {
    console.log(`epoch ${h.epoch}: recon ${h.recon.toFixed(4)} `
      + `kl ${h.kl.toFixed(4)} total ${h.total.toFixed(4)}`);
  });
  const minutes = ((Date.now() - t0) / 60000).toFixed(1);

  if (history.length > 0) {
    const first = history[0];
    const last = history[history.length - 1];
    console.log(`trained ${cfg.epochs} epochs in ${minutes} min: `
      + `total ${first.total.toFixed(4)} -> ${last.total.toFixed(4)}`);
  } else {
    console.log("zero epochs requested: exporting initialization");
  }

  exportWeights(model, path.join(outDir, "weights.crw1"));
  writeHistory(path.join(outDir, "history.csv"), history);
  const goldenCount = parseInt(values["golden-count"]!, 10);
  if (goldenCount > 0) {
    const subset = records.slice(0, goldenCount);
    exportGolden(model, subset, outDir);
    console.log(`golden embeddings: ${subset.length} records`);
  }
  console.log(`artifacts in ${outDir}`);
  return 0;
}

main().then((code) => { process.exitCode = code; },
            (err) => { console.error(err); process.exitCode = 1; });
