import { createHash } from "node:crypto";

// Deterministic unit vectors hashed from the item payload. Text and image
// items land in one shared space, so text-to-image retrieval works without
// model weights; a real CLIP-style provider can replace this behind the same
// signature.

function digestBlocks(key: string, nBytes: number, seed: number): Buffer {
  const blocks: Buffer[] = [];
  let counter = 0;
  let size = 0;
  while (size < nBytes) {
    const block = createHash("sha256").update(`${seed}|${counter}|${key}`).digest();
    blocks.push(block);
    size += block.length;
    counter += 1;
  }
  return Buffer.concat(blocks).subarray(0, nBytes);
}

export function hashUnitVector(key: string, dim: number, seed = 0): number[] {
  const raw = digestBlocks(key, dim * 4, seed);
  const vec = new Array<number>(dim);
  let normSq = 0;
  for (let i = 0; i < dim; i += 1) {
    // centered uint32 -> (-1, 1)
    const u = raw.readUInt32LE(i * 4);
    const x = (u / 2 ** 32) * 2 - 1;
    vec[i] = x;
    normSq += x * x;
  }
  const norm = Math.sqrt(normSq);
  for (let i = 0; i < dim; i += 1) vec[i] /= norm;
  return vec;
}

export class ItemError extends Error {
  constructor(
    public readonly index: number,
    message: string,
  ) {
    super(message);
  }
}

export function embedItem(
  item: { mode: "b64" | "ref" | "text"; data: string },
  index: number,
  dim: number,
  seed: number,
): number[] {
  if (item.mode === "b64") {
    const decoded = Buffer.from(item.data, "base64");
    if (decoded.length === 0 || decoded.toString("base64").replace(/=+$/, "") !== item.data.replace(/=+$/, "")) {
      throw new ItemError(index, `item ${index}: data is not decodable base64`);
    }
    return hashUnitVector(`image:${decoded.toString("hex")}`, dim, seed);
  }
  if (item.mode === "ref") {
    return hashUnitVector(`image-ref:${item.data}`, dim, seed);
  }
  return hashUnitVector(`text:${item.data}`, dim, seed);
}
