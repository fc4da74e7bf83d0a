/**
 * Run-length mask coding matching the API wire format.
 *
 * A mask travels as alternating run counts over row-major pixel order,
 * starting with a run of zeros (possibly length 0). Counts must sum to
 * width * height.
 */

export interface RleMask {
  width: number;
  height: number;
  runs: number[];
}

export class RleError extends Error {}

/** Decode to a row-major 0/1 buffer of length width * height. */
export function decodeMask(payload: RleMask): Uint8Array {
  const { width, height, runs } = payload;
  const total = width * height;
  let sum = 0;
  for (const r of runs) {
    if (!Number.isInteger(r) || r < 0) {
      throw new RleError(`run lengths must be nonnegative integers, got ${r}`);
    }
    sum += r;
  }
  if (sum !== total) {
    throw new RleError(`run lengths sum to ${sum}, expected ${total}`);
  }
  const out = new Uint8Array(total);
  let pos = 0;
  for (let i = 0; i < runs.length; i++) {
    const value = i % 2;
    if (value === 1) out.fill(1, pos, pos + runs[i]!);
    pos += runs[i]!;
  }
  return out;
}

/** Encode a 0/1 buffer; inverse of decodeMask on canonical payloads. */
export function encodeMask(mask: Uint8Array, width: number, height: number): RleMask {
  if (mask.length !== width * height) {
    throw new RleError(`mask has ${mask.length} pixels, expected ${width * height}`);
  }
  const runs: number[] = [];
  if (mask.length > 0) {
    if (mask[0]! !== 0) runs.push(0); // stream must open with the zero run
    let current = mask[0]!;
    let count = 0;
    for (const px of mask) {
      const bit = px === 0 ? 0 : 1;
      if (bit === current) {
        count += 1;
      } else {
        runs.push(count);
        current = bit;
        count = 1;
      }
    }
    runs.push(count);
  }
  return { width, height, runs };
}

/** Number of set pixels, straight off the runs. */
export function maskArea(payload: RleMask): number {
  let area = 0;
  for (let i = 1; i < payload.runs.length; i += 2) area += payload.runs[i]!;
  return area;
}
