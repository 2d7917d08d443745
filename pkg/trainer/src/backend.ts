/** Compute backend setup: prefer wasm (an order of magnitude faster than
 * the plain JS backend for these convolutions), fall back gracefully. */
import * as tf from "@tensorflow/tfjs";
import "@tensorflow/tfjs-backend-wasm";

let ready: Promise<string> | null = null;

export function initBackend(): Promise<string> {
  if (!ready) {
    ready = (async () => {
      try {
        await tf.setBackend("wasm");
      } catch {
        await tf.setBackend("cpu");
      }
      await tf.ready();
      return tf.getBackend();
    })();
  }
  return ready;
}
