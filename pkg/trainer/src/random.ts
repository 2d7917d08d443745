/** Seeded gaussian noise generated in plain JS (mulberry32 + Box-Muller).
 *
 * Keeping randomness off the compute backend makes runs reproducible and
 * independent of which random kernels a backend implements.
 */

export function uniformPrng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0; a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

export function gaussianArray(n: number, seed: number, std = 1.0): Float32Array {
  const rand = uniformPrng(seed);
  const out = new Float32Array(n);
  for (let i = 0; i < n; i += 2) {
    let u1 = rand();
    while (u1 <= 1e-12) u1 = rand();
    const u2 = rand();
    const r = Math.sqrt(-2.0 * Math.log(u1));
    out[i] = r * Math.cos(2 * Math.PI * u2) * std;
    if (i + 1 < n) out[i + 1] = r * Math.sin(2 * Math.PI * u2) * std;
  }
  return out;
}
