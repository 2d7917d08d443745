/**
 * Writer (and test reader) for the portable encoder weight file ("CRW1").
 *
 * Little-endian: magic, u16 version, descriptor (u8 block count, u16 per
 * block channels, u8 kernel, u8 stride, u16 latent dim), u32 tensor count,
 * then per tensor u16 name length + UTF-8 name, u8 ndim, u32 dims and the
 * float32 data. Tensors are written sorted by name.
 */
import * as fs from "fs";

export interface Architecture {
  blockChannels: number[];
  kernel: number;
  stride: number;
  latentDim: number;
}

export const DEFAULT_ARCH: Architecture = {
  blockChannels: [32, 64, 128, 256],
  kernel: 5,
  stride: 2,
  latentDim: 256,
};

export interface TensorEntry {
  shape: number[];
  data: Float32Array;
}

export type TensorTable = Map<string, TensorEntry>;

const MAGIC = "CRW1";

export function serializeWeights(arch: Architecture, tensors: TensorTable): Buffer {
  const parts: Buffer[] = [];
  const push = (b: Buffer) => parts.push(b);

  push(Buffer.from(MAGIC, "latin1"));
  const head = Buffer.alloc(2 + 1 + 2 * arch.blockChannels.length + 2 + 2);
  let p = 0;
  p = head.writeUInt16LE(1, p);
  p = head.writeUInt8(arch.blockChannels.length, p);
  for (const c of arch.blockChannels) p = head.writeUInt16LE(c, p);
  p = head.writeUInt8(arch.kernel, p);
  p = head.writeUInt8(arch.stride, p);
  p = head.writeUInt16LE(arch.latentDim, p);
  push(head);

  const names = [...tensors.keys()].sort();
  const count = Buffer.alloc(4);
  count.writeUInt32LE(names.length, 0);
  push(count);

  for (const name of names) {
    const { shape, data } = tensors.get(name)!;
    const nameBytes = Buffer.from(name, "utf8");
    const meta = Buffer.alloc(2 + nameBytes.length + 1 + 4 * shape.length);
    let q = 0;
    q = meta.writeUInt16LE(nameBytes.length, q);
    q += nameBytes.copy(meta, q);
    q = meta.writeUInt8(shape.length, q);
    for (const d of shape) q = meta.writeUInt32LE(d, q);
    push(meta);
    push(Buffer.from(new Float32Array(data).buffer));
  }
  return Buffer.concat(parts);
}

export function writeWeights(file: string, arch: Architecture,
                             tensors: TensorTable): void {
  fs.writeFileSync(file, serializeWeights(arch, tensors));
}

/** Reader used by the round-trip tests. */
export function readWeights(file: string): { arch: Architecture; tensors: TensorTable } {
  const buf = fs.readFileSync(file);
  let pos = 0;
  if (buf.toString("latin1", 0, 4) !== MAGIC) {
    throw new Error(`${file}: bad magic`);
  }
  pos = 4;
  const version = buf.readUInt16LE(pos); pos += 2;
  if (version !== 1) throw new Error(`${file}: unsupported version`);
  const nBlocks = buf.readUInt8(pos); pos += 1;
  const blockChannels: number[] = [];
  for (let i = 0; i < nBlocks; i++) {
    blockChannels.push(buf.readUInt16LE(pos)); pos += 2;
  }
  const kernel = buf.readUInt8(pos); pos += 1;
  const stride = buf.readUInt8(pos); pos += 1;
  const latentDim = buf.readUInt16LE(pos); pos += 2;
  const count = buf.readUInt32LE(pos); pos += 4;

  const tensors: TensorTable = new Map();
  for (let i = 0; i < count; i++) {
    const nameLen = buf.readUInt16LE(pos); pos += 2;
    const name = buf.toString("utf8", pos, pos + nameLen); pos += nameLen;
    const ndim = buf.readUInt8(pos); pos += 1;
    const shape: number[] = [];
    for (let d = 0; d < ndim; d++) {
      shape.push(buf.readUInt32LE(pos)); pos += 4;
    }
    const n = shape.reduce((a, b) => a * b, 1);
    const data = new Float32Array(n);
    for (let j = 0; j < n; j++) data[j] = buf.readFloatLE(pos + 4 * j);
    pos += 4 * n;
    tensors.set(name, { shape, data });
  }
  return { arch: { blockChannels, kernel, stride, latentDim }, tensors };
}
