/**
 * The ECG variational autoencoder.
 *
 * Encoder: four residual blocks (conv k5 s2 -> BN -> ReLU -> conv k5 s1 ->
 * BN, plus a 1x1 s2 projection on the skip path, ReLU after the add) with
 * channels 32/64/128/256, then global average pooling over time and two
 * affine heads for the mean and log-variance of a 256-dim latent Gaussian.
 *
 * Padding is explicit and symmetric (kernel//2 zeros each side, none on
 * the 1x1 projection) and batch-norm inference uses running statistics
 * with eps 1e-5. Both conventions are part of the exported weight-file
 * contract, so the consuming runtime reproduces this forward pass exactly.
 *
 * The decoder (training only, never exported) mirrors coarsely: a dense
 * projection to 175 time steps, then four upsample+conv stages back to
 * 2800 x 12.
 */
import * as tf from "@tensorflow/tfjs";

import { gaussianArray } from "./random";
import { Architecture, DEFAULT_ARCH, TensorTable } from "./weights";

export const INPUT_LEN = 2800;
export const INPUT_CH = 12;
export const BN_EPS = 1e-5;
export const BN_MOMENTUM = 0.9;

const DECODER_CHANNELS = [32, 32, 24, 16];

interface ConvVars {
  kernel: tf.Variable; // [k, inC, outC]
  bias: tf.Variable;   // [outC]
}

interface BnVars {
  gamma: tf.Variable;
  beta: tf.Variable;
  runningMean: tf.Variable;  // not trainable
  runningVar: tf.Variable;   // not trainable
}

interface Block {
  conv1: ConvVars;
  bn1: BnVars;
  conv2: ConvVars;
  bn2: BnVars;
  skip: ConvVars;
}

interface DenseVars {
  kernel: tf.Variable; // [in, out]
  bias: tf.Variable;
}

/** Deterministic gaussian initializer: every variable gets its own seed. */
class SeededInit {
  private counter: number;

  constructor(baseSeed: number) {
    this.counter = baseSeed * 7919 + 1;
  }

  normal(shape: number[], std: number): tf.Tensor {
    const n = shape.reduce((a, b) => a * b, 1);
    return tf.tensor(gaussianArray(n, this.counter++, std), shape);
  }
}

function convVars(init: SeededInit, k: number, inC: number, outC: number,
                  trainable: tf.Variable[]): ConvVars {
  const std = 1.0 / Math.sqrt(k * inC);
  const kernel = tf.variable(init.normal([k, inC, outC], std));
  const bias = tf.variable(tf.zeros([outC]));
  trainable.push(kernel, bias);
  return { kernel, bias };
}

function bnVars(c: number, trainable: tf.Variable[]): BnVars {
  const gamma = tf.variable(tf.ones([c]));
  const beta = tf.variable(tf.zeros([c]));
  trainable.push(gamma, beta);
  return {
    gamma,
    beta,
    runningMean: tf.variable(tf.zeros([c]), false),
    runningVar: tf.variable(tf.ones([c]), false),
  };
}

function denseVars(init: SeededInit, inDim: number, outDim: number,
                   trainable: tf.Variable[]): DenseVars {
  const kernel = tf.variable(init.normal([inDim, outDim], 1.0 / Math.sqrt(inDim)));
  const bias = tf.variable(tf.zeros([outDim]));
  trainable.push(kernel, bias);
  return { kernel, bias };
}

/**
 * conv1d as im2col + matMul (valid padding applied explicitly).
 *
 * Built from pad/slice/reshape/concat/matMul only: those all have
 * gradients on every backend, unlike the fused conv kernels whose
 * backprop is not implemented on wasm. Supports the strides this model
 * uses (1 and 2).
 */
function conv(x: tf.Tensor3D, v: ConvVars, stride: number, pad: number): tf.Tensor3D {
  const k = v.kernel.shape[0] as number;
  const inC = v.kernel.shape[1] as number;
  const outC = v.kernel.shape[2] as number;
  const [b, len] = [x.shape[0], x.shape[1]];

  let xp = pad > 0
    ? tf.pad(x, [[0, 0], [pad, pad], [0, 0]]) as tf.Tensor3D
    : x;
  let lp = len + 2 * pad;
  const lOut = Math.floor((lp - k) / stride) + 1;

  const taps: tf.Tensor3D[] = [];
  if (stride === 1) {
    for (let j = 0; j < k; j++) {
      taps.push(tf.slice(xp, [0, j, 0], [b, lOut, inC]) as tf.Tensor3D);
    }
  } else if (stride === 2) {
    if (lp % 2 === 1) {
      // one trailing zero so the parity reshape is exact; by construction
      // of lOut the extra sample is never read
      xp = tf.pad(xp, [[0, 0], [0, 1], [0, 0]]) as tf.Tensor3D;
      lp += 1;
    }
    const half = lp / 2;
    const groups = tf.reshape(xp, [b, half, 2, inC]);
    const even = tf.reshape(tf.slice(groups, [0, 0, 0, 0], [b, half, 1, inC]),
                            [b, half, inC]) as tf.Tensor3D;
    const odd = tf.reshape(tf.slice(groups, [0, 0, 1, 0], [b, half, 1, inC]),
                           [b, half, inC]) as tf.Tensor3D;
    for (let j = 0; j < k; j++) {
      const stream = j % 2 === 0 ? even : odd;
      const offset = (j - (j % 2)) / 2;
      taps.push(tf.slice(stream, [0, offset, 0], [b, lOut, inC]) as tf.Tensor3D);
    }
  } else {
    throw new Error(`unsupported stride ${stride}`);
  }

  const patches = tf.reshape(tf.concat(taps, 2), [b * lOut, k * inC]);
  const w = tf.reshape(v.kernel, [k * inC, outC]);
  const y = tf.reshape(tf.matMul(patches, w as unknown as tf.Tensor2D),
                       [b, lOut, outC]);
  return tf.add(y, v.bias) as tf.Tensor3D;
}

function batchNorm(x: tf.Tensor3D, bn: BnVars, training: boolean): tf.Tensor3D {
  if (training) {
    const { mean, variance } = tf.moments(x, [0, 1]);
    // running statistics live outside the gradient flow
    tf.tidy(() => {
      bn.runningMean.assign(
        tf.add(tf.mul(bn.runningMean, BN_MOMENTUM),
               tf.mul(mean, 1 - BN_MOMENTUM)));
      bn.runningVar.assign(
        tf.add(tf.mul(bn.runningVar, BN_MOMENTUM),
               tf.mul(variance, 1 - BN_MOMENTUM)));
    });
    const norm = tf.div(tf.sub(x, mean), tf.sqrt(tf.add(variance, BN_EPS)));
    return tf.add(tf.mul(norm, bn.gamma), bn.beta) as tf.Tensor3D;
  }
  const norm = tf.div(tf.sub(x, bn.runningMean),
                      tf.sqrt(tf.add(bn.runningVar, BN_EPS)));
  return tf.add(tf.mul(norm, bn.gamma), bn.beta) as tf.Tensor3D;
}

function upsample2(x: tf.Tensor3D): tf.Tensor3D {
  const [b, l, c] = x.shape;
  const expanded = tf.reshape(x, [b, l, 1, c]);
  const tiled = tf.tile(expanded, [1, 1, 2, 1]);
  return tf.reshape(tiled, [b, l * 2, c]) as tf.Tensor3D;
}

export class VaeModel {
  readonly arch: Architecture;
  readonly trainable: tf.Variable[] = [];
  private blocks: Block[] = [];
  private headMu: DenseVars;
  private headLogVar: DenseVars;
  private decoderDense: DenseVars;
  private decoderConvs: ConvVars[] = [];
  private readonly bottleneckLen: number;

  constructor(arch: Architecture = DEFAULT_ARCH, seed = 0) {
    this.arch = arch;
    const init = new SeededInit(seed);

    let inC = INPUT_CH;
    let len = INPUT_LEN;
    for (const outC of arch.blockChannels) {
      this.blocks.push({
        conv1: convVars(init, arch.kernel, inC, outC, this.trainable),
        bn1: bnVars(outC, this.trainable),
        conv2: convVars(init, arch.kernel, outC, outC, this.trainable),
        bn2: bnVars(outC, this.trainable),
        skip: convVars(init, 1, inC, outC, this.trainable),
      });
      inC = outC;
      len = Math.floor((len - 1) / arch.stride) + 1;
    }
    this.bottleneckLen = len;

    const last = arch.blockChannels[arch.blockChannels.length - 1];
    this.headMu = denseVars(init, last, arch.latentDim, this.trainable);
    this.headLogVar = denseVars(init, last, arch.latentDim, this.trainable);

    this.decoderDense = denseVars(
      init, arch.latentDim, this.bottleneckLen * DECODER_CHANNELS[0],
      this.trainable);
    let decIn = DECODER_CHANNELS[0];
    const decOut = [...DECODER_CHANNELS.slice(1), INPUT_CH];
    for (const outC of decOut) {
      this.decoderConvs.push(
        convVars(init, arch.kernel, decIn, outC, this.trainable));
      decIn = outC;
    }
  }

  /** Per-block output shapes for a given batch size (testing aid). */
  ladder(batch: number): number[][] {
    let len = INPUT_LEN;
    return this.arch.blockChannels.map((c) => {
      len = Math.floor((len - 1) / this.arch.stride) + 1;
      return [batch, len, c];
    });
  }

  encode(x: tf.Tensor3D, training: boolean): { mu: tf.Tensor2D; logVar: tf.Tensor2D } {
    const pad = Math.floor(this.arch.kernel / 2);
    let h = x;
    for (const b of this.blocks) {
      let y = conv(h, b.conv1, this.arch.stride, pad);
      y = batchNorm(y, b.bn1, training);
      y = tf.relu(y);
      y = conv(y, b.conv2, 1, pad);
      y = batchNorm(y, b.bn2, training);
      const s = conv(h, b.skip, this.arch.stride, 0);
      h = tf.relu(tf.add(y, s)) as tf.Tensor3D;
    }
    const pooled = tf.mean(h, 1) as tf.Tensor2D; // [B, C]
    const mu = tf.add(tf.matMul(pooled, this.headMu.kernel as unknown as tf.Tensor2D),
                      this.headMu.bias) as tf.Tensor2D;
    const logVar = tf.add(tf.matMul(pooled, this.headLogVar.kernel as unknown as tf.Tensor2D),
                          this.headLogVar.bias) as tf.Tensor2D;
    return { mu, logVar };
  }

  decode(z: tf.Tensor2D): tf.Tensor3D {
    const pad = Math.floor(this.arch.kernel / 2);
    const b = z.shape[0];
    let h = tf.add(tf.matMul(z, this.decoderDense.kernel as unknown as tf.Tensor2D),
                   this.decoderDense.bias);
    let x = tf.reshape(h, [b, this.bottleneckLen, DECODER_CHANNELS[0]]) as tf.Tensor3D;
    this.decoderConvs.forEach((cv, i) => {
      x = upsample2(x);
      x = conv(x, cv, 1, pad);
      if (i < this.decoderConvs.length - 1) {
        x = tf.relu(x);
      }
    });
    return x;
  }

  /** Encoder tensors in the layout the weight file declares. */
  exportEncoderTensors(): TensorTable {
    const out: TensorTable = new Map();
    const putConv = (name: string, v: ConvVars) => {
      const t = tf.transpose(v.kernel, [2, 1, 0]); // [k,i,o] -> [o,i,k]
      out.set(`${name}.weight`,
              { shape: t.shape.slice(), data: t.dataSync() as Float32Array });
      out.set(`${name}.bias`,
              { shape: v.bias.shape.slice(), data: v.bias.dataSync() as Float32Array });
      t.dispose();
    };
    const putBn = (name: string, bn: BnVars) => {
      const parts: [string, tf.Variable][] = [
        ["gamma", bn.gamma], ["beta", bn.beta],
        ["running_mean", bn.runningMean], ["running_var", bn.runningVar]];
      for (const [suffix, v] of parts) {
        out.set(`${name}.${suffix}`,
                { shape: v.shape.slice(), data: v.dataSync() as Float32Array });
      }
    };
    const putDense = (name: string, v: DenseVars) => {
      const t = tf.transpose(v.kernel, [1, 0]); // [in,out] -> [out,in]
      out.set(`${name}.weight`,
              { shape: t.shape.slice(), data: t.dataSync() as Float32Array });
      out.set(`${name}.bias`,
              { shape: v.bias.shape.slice(), data: v.bias.dataSync() as Float32Array });
      t.dispose();
    };

    this.blocks.forEach((b, i) => {
      putConv(`blocks.${i}.conv1`, b.conv1);
      putBn(`blocks.${i}.bn1`, b.bn1);
      putConv(`blocks.${i}.conv2`, b.conv2);
      putBn(`blocks.${i}.bn2`, b.bn2);
      putConv(`blocks.${i}.skip`, b.skip);
    });
    putDense("head.mu", this.headMu);
    putDense("head.logvar", this.headLogVar);
    return out;
  }

  dispose(): void {
    for (const v of this.trainable) v.dispose();
    for (const b of this.blocks) {
      b.bn1.runningMean.dispose();
      b.bn1.runningVar.dispose();
      b.bn2.runningMean.dispose();
      b.bn2.runningVar.dispose();
    }
  }
}
