/**
 * reference.ts — scalar float64 reimplementations used to pin the CLI.
 *
 * Deliberately plain loops with no shared code: the point is an
 * independent answer to compare the kernel namespace against. Mirrors
 * the primary package's own reference suite, one value at a time.
 */

// ── Deterministic PRNG ──────────────────────────────────────────────────────

/** mulberry32: tiny seeded generator, uniform in [0, 1). */
export function mulberry32(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

/** Uniform draw in [lo, hi). */
export function uniform(rng: () => number, lo: number, hi: number): number {
  return lo + (hi - lo) * rng();
}

/**
 * Random belief row: n singletons plus composite, normalized to 1 in
 * float64 then rounded to float32 for the boundary.
 */
export function randomBeliefRow(rng: () => number, n: number): number[] {
  const raw = Array.from({ length: n + 1 }, () => 0.05 + rng());
  const total = raw.reduce((acc, v) => acc + v, 0);
  return raw.map((v) => Math.fround(v / total));
}

// ── Belief formation ────────────────────────────────────────────────────────

export function softplus(x: number): number {
  if (x > 0) {
    return x + Math.log1p(Math.exp(-x));
  }
  return Math.log1p(Math.exp(x));
}

export function sigmoid(x: number): number {
  if (x >= 0) {
    return 1.0 / (1.0 + Math.exp(-x));
  }
  const ex = Math.exp(x);
  return ex / (1.0 + ex);
}

/** Logit row to singleton masses plus trailing composite mass. */
export function beliefFromLogits(logits: readonly number[]): number[] {
  const n = logits.length;
  const evidence = logits.map(softplus);
  const strength = n + evidence.reduce((acc, e) => acc + e, 0);
  return [...evidence.map((e) => e / strength), n / strength];
}

// ── Fusion and uncertainty ──────────────────────────────────────────────────

/** Pairwise fusion of two belief rows (singletons..., composite). */
export function fuse(
  rowA: readonly number[],
  rowB: readonly number[],
  renormalize = true,
): number[] {
  const n = rowA.length - 1;
  const aU = rowA[n]!;
  const bU = rowB[n]!;
  const fused: number[] = [];
  for (let k = 0; k < n; k++) {
    fused.push(rowA[k]! * rowB[k]! + (rowA[k]! * bU + rowB[k]! * aU) / n);
  }
  fused.push(aU * bU);
  if (!renormalize) {
    return fused;
  }
  const total = fused.reduce((acc, v) => acc + v, 0);
  return fused.map((v) => v / total);
}

/** Composite mass times the entropy in bits of the singleton masses. */
export function uncertainty(
  beliefRow: readonly number[],
  rawSingletons = false,
): number {
  const n = beliefRow.length - 1;
  const u = beliefRow[n]!;
  let singles = beliefRow.slice(0, n);
  if (!rawSingletons) {
    const total = singles.reduce((acc, v) => acc + v, 0);
    if (total === 0.0) {
      return 0.0;
    }
    singles = singles.map((v) => v / total);
  }
  let entropy = 0.0;
  for (const s of singles) {
    if (s > 0.0) {
      entropy -= s * Math.log2(s);
    }
  }
  return u * entropy;
}

// ── Ranking and weighting ───────────────────────────────────────────────────

/** 1-based rank per position; ties resolved by position ascending. */
export function rankOrder(values: readonly number[], descending = false): number[] {
  const indices = Array.from(values, (_, i) => i);
  indices.sort((x, y) => {
    const diff = descending ? values[y]! - values[x]! : values[x]! - values[y]!;
    return diff !== 0 ? diff : x - y;
  });
  const ranks = new Array<number>(values.length);
  indices.forEach((index, position) => {
    ranks[index] = position + 1;
  });
  return ranks;
}

export function dynamicWeight(
  epsilon: number,
  epoch: number,
  totalEpochs: number,
  ordinal: number,
  count: number,
): number {
  const progress = (2.0 * epoch) / totalEpochs - 1.0;
  const position = (2.0 * ordinal) / count - 1.0;
  return epsilon * sigmoid(progress * position);
}

export function weightedLoss(
  losses: readonly number[],
  uncertainties: readonly number[],
  epsilon: number,
  epoch: number,
  totalEpochs: number,
  descending = false,
): number {
  const z = losses.length;
  const ranks = rankOrder(uncertainties, descending);
  let total = 0.0;
  for (let i = 0; i < z; i++) {
    total += dynamicWeight(epsilon, epoch, totalEpochs, ranks[i]!, z) * losses[i]!;
  }
  return total / z;
}

// ── Mixing ──────────────────────────────────────────────────────────────────

/**
 * Box exchange on flat arrays. `channels` is the trailing channel count
 * shared by consecutive entries of one voxel (1 for plain volumes).
 */
export function mixFlat(
  a: readonly number[],
  b: readonly number[],
  mask: readonly number[],
  channels = 1,
): { mixedA: number[]; mixedB: number[] } {
  const mixedA: number[] = [];
  const mixedB: number[] = [];
  for (let i = 0; i < a.length; i++) {
    const keep = mask[Math.floor(i / channels)]! === 1;
    mixedA.push(keep ? a[i]! : b[i]!);
    mixedB.push(keep ? b[i]! : a[i]!);
  }
  return { mixedA, mixedB };
}
