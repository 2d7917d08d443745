/**
 * Training objective: mean squared reconstruction error plus beta times
 * the KL divergence of the latent Gaussian from the standard normal
 * prior, averaged over the batch.
 */
import * as tf from "@tensorflow/tfjs";

export interface LossBreakdown {
  lRecon: number;
  lKl: number;
  beta: number;
  total: number;
}

export class ShapeMismatch extends Error {}
export class DivergedLoss extends Error {}

/** Closed-form KL(q || N(0, I)), summed over latent dims, batch mean. */
export function klTerm(mu: tf.Tensor2D, logVar: tf.Tensor2D): tf.Scalar {
  const perSample = tf.mul(
    -0.5,
    tf.sum(tf.sub(tf.add(1, logVar),
                  tf.add(tf.square(mu), tf.exp(logVar))), 1));
  return tf.mean(perSample) as tf.Scalar;
}

export function reconTerm(x: tf.Tensor3D, xHat: tf.Tensor3D): tf.Scalar {
  if (x.shape.join() !== xHat.shape.join()) {
    throw new ShapeMismatch(
      `reconstruction shape ${xHat.shape} does not match input ${x.shape}`);
  }
  return tf.mean(tf.square(tf.sub(x, xHat))) as tf.Scalar;
}

export function totalLoss(recon: tf.Scalar, kl: tf.Scalar, beta: number): tf.Scalar {
  return tf.add(recon, tf.mul(beta, kl)) as tf.Scalar;
}

/** Numeric breakdown of the objective for a concrete batch. */
export function vaeLoss(x: tf.Tensor3D, xHat: tf.Tensor3D,
                        mu: tf.Tensor2D, logVar: tf.Tensor2D,
                        beta: number): LossBreakdown {
  return tf.tidy(() => {
    const recon = reconTerm(x, xHat);
    const kl = klTerm(mu, logVar);
    const total = totalLoss(recon, kl, beta);
    const [lRecon, lKl, t] =
      [recon.dataSync()[0], kl.dataSync()[0], total.dataSync()[0]];
    if (!Number.isFinite(t)) {
      throw new DivergedLoss(`non-finite loss: recon=${lRecon} kl=${lKl}`);
    }
    return { lRecon, lKl, beta, total: t };
  });
}
