/**
 * Training loop and artifact export.
 *
 * Adam on reconstruction + beta * KL with reparameterized sampling during
 * training (z = mu + exp(logVar/2) * eps, eps seeded per step, so a fixed
 * seed reproduces the run). Exports the encoder as a CRW1 weight file, a
 * per-epoch loss history, and golden mean-vectors computed with the
 * inference-mode forward pass (running batch-norm statistics, no
 * sampling) for cross-runtime verification.
 */
import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

import { DivergedLoss, klTerm, reconTerm, totalLoss } from "./loss";
import { INPUT_CH, INPUT_LEN, VaeModel } from "./model";
import { gaussianArray, uniformPrng } from "./random";
import { EcgRecord, toTimeMajor } from "./records";
import { DEFAULT_ARCH, writeWeights } from "./weights";

export interface TrainConfig {
  epochs: number;
  batchSize: number;
  learningRate: number;
  beta: number;
  seed: number;
}

export const DEFAULT_TRAIN: TrainConfig = {
  epochs: 30,
  batchSize: 32,
  learningRate: 1e-3,
  beta: 0.1,
  seed: 0,
};

export interface EpochStats {
  epoch: number;
  recon: number;
  kl: number;
  total: number;
}

function shuffled(n: number, rand: () => number): number[] {
  const idx = [...Array(n).keys()];
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  return idx;
}

function toBatch(records: EcgRecord[], indices: number[]): tf.Tensor3D {
  const b = indices.length;
  const data = new Float32Array(b * INPUT_LEN * INPUT_CH);
  indices.forEach((ri, bi) => {
    data.set(toTimeMajor(records[ri]), bi * INPUT_LEN * INPUT_CH);
  });
  return tf.tensor3d(data, [b, INPUT_LEN, INPUT_CH]);
}

function checkRecords(records: EcgRecord[]): void {
  if (records.length === 0) {
    throw new Error("training corpus is empty");
  }
  for (const r of records) {
    if (r.nSamples !== INPUT_LEN) {
      throw new Error(
        `record ${r.recordId}: ${r.nSamples} samples, expected ${INPUT_LEN} `
        + "(preprocess records before training)");
    }
  }
}

export function train(records: EcgRecord[], cfg: TrainConfig = DEFAULT_TRAIN,
                      model?: VaeModel,
                      onEpoch?: (stats: EpochStats) => void): { model: VaeModel; history: EpochStats[] } {
  checkRecords(records);
  const m = model ?? new VaeModel(DEFAULT_ARCH, cfg.seed);
  const optimizer = tf.train.adam(cfg.learningRate);
  const rand = uniformPrng(cfg.seed * 2654435761 + 97);
  const history: EpochStats[] = [];
  let step = 0;

  for (let epoch = 0; epoch < cfg.epochs; epoch++) {
    const order = shuffled(records.length, rand);
    let sumRecon = 0;
    let sumKl = 0;
    let sumTotal = 0;
    let seen = 0;

    for (let start = 0; start < order.length; start += cfg.batchSize) {
      const indices = order.slice(start, start + cfg.batchSize);
      const x = toBatch(records, indices);
      const epsSeed = cfg.seed * 1000003 + step;
      const epsData = gaussianArray(indices.length * m.arch.latentDim, epsSeed);
      let parts: { recon: number; kl: number } | null = null;

      const { value, grads } = tf.variableGrads(() => {
        const { mu, logVar } = m.encode(x, true);
        const eps = tf.tensor2d(epsData, [indices.length, m.arch.latentDim]);
        const z = tf.add(mu, tf.mul(tf.exp(tf.mul(logVar, 0.5)), eps)) as tf.Tensor2D;
        const xHat = m.decode(z);
        const recon = reconTerm(x, xHat);
        const kl = klTerm(mu, logVar);
        parts = { recon: recon.dataSync()[0], kl: kl.dataSync()[0] };
        return totalLoss(recon, kl, cfg.beta);
      }, m.trainable);

      const total = value.dataSync()[0];
      if (!Number.isFinite(total)) {
        throw new DivergedLoss(`step ${step}: loss ${total}`);
      }
      // variableGrads returns a NamedTensorMap; applyGradients accepts it
      // at runtime even though its declared parameter type is narrower
      optimizer.applyGradients(
        grads as unknown as Parameters<typeof optimizer.applyGradients>[0]);
      tf.dispose(grads);
      value.dispose();
      x.dispose();

      sumRecon += parts!.recon * indices.length;
      sumKl += parts!.kl * indices.length;
      sumTotal += total * indices.length;
      seen += indices.length;
      step += 1;
    }

    const stats = {
      epoch,
      recon: sumRecon / seen,
      kl: sumKl / seen,
      total: sumTotal / seen,
    };
    history.push(stats);
    if (onEpoch) onEpoch(stats);
  }

  optimizer.dispose();
  return { model: m, history };
}

/** Inference-mode mean vectors for a set of records. */
export function embedAll(model: VaeModel, records: EcgRecord[]): Float32Array[] {
  return records.map((r) => tf.tidy(() => {
    const x = toBatch([r], [0]);
    const { mu } = model.encode(x, false);
    return mu.dataSync().slice() as Float32Array;
  }));
}

export function writeHistory(file: string, history: EpochStats[]): void {
  const lines = ["epoch,recon,kl,total"];
  for (const h of history) {
    lines.push(`${h.epoch},${h.recon},${h.kl},${h.total}`);
  }
  fs.writeFileSync(file, lines.join("\n") + "\n");
}

export interface GoldenPaths {
  ids: string;
  mu: string;
}

/** Golden file pair: record ids (TSV) and raw float32 mu rows. */
export function exportGolden(model: VaeModel, records: EcgRecord[],
                             outDir: string): GoldenPaths {
  if (records.length === 0) {
    throw new Error("empty golden subset");
  }
  const vectors = embedAll(model, records);
  const idsPath = path.join(outDir, "golden_ids.tsv");
  const muPath = path.join(outDir, "golden_mu.f32");
  fs.writeFileSync(idsPath,
                   records.map((r) => r.recordId).join("\n") + "\n");
  const flat = new Float32Array(vectors.length * model.arch.latentDim);
  vectors.forEach((v, i) => flat.set(v, i * model.arch.latentDim));
  fs.writeFileSync(muPath, Buffer.from(flat.buffer));
  return { ids: idsPath, mu: muPath };
}

export function exportWeights(model: VaeModel, file: string): void {
  writeWeights(file, model.arch, model.exportEncoderTensors());
}
