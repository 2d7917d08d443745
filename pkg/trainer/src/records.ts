/**
 * Reader for the internal ECG record format ("CRE1").
 *
 * Little-endian layout: magic "CRE1", u16 version, u16 id length + UTF-8
 * id, u8 source, u16 fs, u32 sample count, u8 sex, f32 age (NaN = absent),
 * u8 label, then 12 x S float32 samples in row-major lead order.
 */
import * as fs from "fs";
import * as path from "path";

export interface EcgRecord {
  recordId: string;
  source: number;
  fs: number;
  nSamples: number;
  sex: number;
  age: number | null;
  label: number;
  /** row-major (12, nSamples) millivolts */
  signals: Float32Array;
}

export const LEADS = 12;
const MAGIC = "CRE1";

export class RecordParseError extends Error {}

export function parseRecord(buf: Buffer, name = "<buffer>"): EcgRecord {
  let pos = 0;
  const need = (n: number) => {
    if (pos + n > buf.length) {
      throw new RecordParseError(`${name}: truncated at byte ${buf.length}`);
    }
  };

  need(4);
  if (buf.toString("latin1", 0, 4) !== MAGIC) {
    throw new RecordParseError(`${name}: bad magic`);
  }
  pos = 4;
  need(2);
  const version = buf.readUInt16LE(pos); pos += 2;
  if (version !== 1) {
    throw new RecordParseError(`${name}: unsupported version ${version}`);
  }
  need(2);
  const idLen = buf.readUInt16LE(pos); pos += 2;
  need(idLen);
  const recordId = buf.toString("utf8", pos, pos + idLen); pos += idLen;
  need(1 + 2 + 4 + 1 + 4 + 1);
  const source = buf.readUInt8(pos); pos += 1;
  const fsHz = buf.readUInt16LE(pos); pos += 2;
  const nSamples = buf.readUInt32LE(pos); pos += 4;
  const sex = buf.readUInt8(pos); pos += 1;
  const age = buf.readFloatLE(pos); pos += 4;
  const label = buf.readUInt8(pos); pos += 1;

  const nFloats = LEADS * nSamples;
  need(4 * nFloats);
  const signals = new Float32Array(nFloats);
  for (let i = 0; i < nFloats; i++) {
    signals[i] = buf.readFloatLE(pos + 4 * i);
  }

  return {
    recordId, source, fs: fsHz, nSamples, sex,
    age: Number.isNaN(age) ? null : age,
    label, signals,
  };
}

export function loadRecord(file: string): EcgRecord {
  return parseRecord(fs.readFileSync(file), path.basename(file));
}

export interface CorpusLoad {
  records: EcgRecord[];
  skipped: { file: string; reason: string }[];
}

/** Load every .cre file in a directory, skipping unparseable ones. */
export function loadCorpus(dir: string): CorpusLoad {
  const records: EcgRecord[] = [];
  const skipped: { file: string; reason: string }[] = [];
  const files = fs.readdirSync(dir).filter((f) => f.endsWith(".cre")).sort();
  for (const f of files) {
    try {
      records.push(loadRecord(path.join(dir, f)));
    } catch (err) {
      const reason = err instanceof Error ? err.message : String(err);
      console.warn(`skipping ${f}: ${reason}`);
      skipped.push({ file: f, reason });
    }
  }
  return { records, skipped };
}

/** (12, S) row-major -> (S, 12) time-major, the layout the model consumes. */
export function toTimeMajor(rec: EcgRecord): Float32Array {
  const { nSamples, signals } = rec;
  const out = new Float32Array(nSamples * LEADS);
  for (let c = 0; c < LEADS; c++) {
    for (let t = 0; t < nSamples; t++) {
      out[t * LEADS + c] = signals[c * nSamples + t];
    }
  }
  return out;
}
