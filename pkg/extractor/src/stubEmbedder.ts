import { createHash } from 'node:crypto';

// "stub-sha256-64d" -> 64; the offline embedder encodes its dim in the id
const STUB_ID = /^stub-sha256-(\d+)d$/;

export function stubDim(embedderId: string): number | null {
  const match = STUB_ID.exec(embedderId);
  if (!match) return null;
  const dim = parseInt(match[1], 10);
  if (dim < 1) return null;
  return dim;
}

/**
 * Deterministic stand-in for a real embedding model: expand
 * sha256(embedderId || input) into dim floats via counter-mode hashing,
 * then L2-normalize. Same bytes in, same unit vector out — which is what
 * makes re-runs byte-identical.
 */
export function stubEmbedding(embedderId: string, input: Buffer, dim: number): Float32Array {
  const seed = createHash('sha256').update(embedderId).update(input).digest();
  const out = new Float32Array(dim);
  let filled = 0;
  let counter = 0;
  while (filled < dim) {
    const block = createHash('sha256')
      .update(seed)
      .update(String(counter++))
      .digest();
    for (let offset = 0; offset + 4 <= block.length && filled < dim; offset += 4) {
      // uint32 -> [-1, 1)
      out[filled++] = (block.readUInt32LE(offset) / 0xffffffff) * 2 - 1;
    }
  }

  let sumSquares = 0;
  for (let i = 0; i < dim; i++) sumSquares += out[i] * out[i];
  const norm = Math.sqrt(sumSquares);
  for (let i = 0; i < dim; i++) out[i] = out[i] / norm;
  return out;
}
