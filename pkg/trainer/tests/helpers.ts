/** Test utilities: an independent CRE1 encoder (so the reader is checked
 * against a second implementation of the format) and synthetic records. */
import { INPUT_CH, INPUT_LEN } from "../src/model";

export function encodeRecord(opts: {
  recordId: string;
  fs?: number;
  nSamples?: number;
  age?: number | null;
  source?: number;
  sex?: number;
  label?: number;
  signals?: Float32Array;
}): Buffer {
  const fs = opts.fs ?? 400;
  const nSamples = opts.nSamples ?? INPUT_LEN;
  const signals = opts.signals
    ?? new Float32Array(INPUT_CH * nSamples);
  const idBytes = Buffer.from(opts.recordId, "utf8");

  const head = Buffer.alloc(4 + 2 + 2 + idBytes.length + 1 + 2 + 4 + 1 + 4 + 1);
  let p = 0;
  p += head.write("CRE1", p, "latin1");
  p = head.writeUInt16LE(1, p);
  p = head.writeUInt16LE(idBytes.length, p);
  p += idBytes.copy(head, p);
  p = head.writeUInt8(opts.source ?? 3, p);
  p = head.writeUInt16LE(fs, p);
  p = head.writeUInt32LE(nSamples, p);
  p = head.writeUInt8(opts.sex ?? 2, p);
  p = head.writeFloatLE(opts.age === null || opts.age === undefined
    ? NaN : opts.age, p);
  p = head.writeUInt8(opts.label ?? 2, p);

  return Buffer.concat([head, Buffer.from(signals.buffer.slice(
    signals.byteOffset, signals.byteOffset + signals.byteLength))]);
}

/** Deterministic pseudo-ECG content: sums of sinusoids per lead. */
export function syntheticSignals(seed: number,
                                 nSamples = INPUT_LEN): Float32Array {
  const out = new Float32Array(INPUT_CH * nSamples);
  for (let c = 0; c < INPUT_CH; c++) {
    const f1 = 1.0 + ((seed * 7 + c) % 5);
    const f2 = 8.0 + ((seed * 13 + 3 * c) % 11);
    for (let t = 0; t < nSamples; t++) {
      const x = t / 400.0;
      out[c * nSamples + t] =
        0.6 * Math.sin(2 * Math.PI * f1 * x + seed)
        + 0.3 * Math.sin(2 * Math.PI * f2 * x + c);
    }
  }
  return out;
}
