/**
 * kernels.ts — flat function namespace over the evidential fusion CLI.
 *
 * Each wrapper validates dtype and shape on this side of the boundary,
 * writes its inputs as .npy files into a scratch directory, runs one CLI
 * subcommand, and decodes the outputs. Input buffers are never written
 * to, and calls are synchronous, so callers get plain values back.
 *
 * Kernels that operate on trailing class channels (evidence_to_belief,
 * fuse_volumes, uncertainty_volume) accept leading batch axes natively;
 * the per-volume kernels get explicit `_batched` variants that hand the
 * whole batch to the CLI in a single invocation.
 */

import * as path from "node:path";

import {
  BoundaryError,
  TensorView,
  expectDtype,
  expectMinLastDim,
  expectRank,
  expectSameShape,
  tensor,
} from "./arrayview.js";
import { readTensor, runCli, withTempDir, writeTensor } from "./runner.js";

// ── Option types ────────────────────────────────────────────────────────────

export type RankOrder = "ascending" | "descending";

/** Epoch-and-rank schedule for the dynamic weight. */
export interface WeightSchedule {
  /** Peak weight amplitude; defaults to 1.0. */
  epsilon?: number;
  /** Current epoch, 1-based. */
  epoch: number;
  /** Total epochs in the run. */
  totalEpochs: number;
  /** Rank direction; "ascending" puts the most uncertain voxel last. */
  rankOrder?: RankOrder;
}

export interface FusionOptions {
  /** Rescale fused masses to total 1; defaults to true. */
  renormalize?: boolean;
  /** Smallest fused total treated as non-conflicting. */
  conflictEpsilon?: number;
}

export interface UncertaintyOptions {
  /** Score entropy on raw singleton masses instead of renormalized ones. */
  rawSingletons?: boolean;
}

export interface MixedPair {
  mixedA: TensorView;
  mixedB: TensorView;
}

export interface RestoredPair {
  restoredA: TensorView;
  restoredB: TensorView;
}

// ── Shared plumbing ─────────────────────────────────────────────────────────

function scheduleFlags(schedule: WeightSchedule): string[] {
  const flags = [
    "--epoch", String(schedule.epoch),
    "--epochs", String(schedule.totalEpochs),
    "--epsilon", String(schedule.epsilon ?? 1.0),
  ];
  if (schedule.rankOrder !== undefined) {
    flags.push("--order", schedule.rankOrder);
  }
  return flags;
}

function fusionFlags(options: FusionOptions): string[] {
  const flags: string[] = [];
  if (options.renormalize === false) {
    flags.push("--no-renorm");
  }
  if (options.conflictEpsilon !== undefined) {
    flags.push("--conflict-epsilon", String(options.conflictEpsilon));
  }
  return flags;
}

/** Belief-shaped input: float32 with at least three trailing channels. */
function expectBelief(view: TensorView, ranks: readonly number[], what: string): void {
  expectDtype(view, "float32", what);
  expectRank(view, ranks, what);
  expectMinLastDim(view, 3, what);
}

function runFuse(a: TensorView, b: TensorView, options: FusionOptions): TensorView {
  return withTempDir((dir) => {
    const pa = path.join(dir, "a.npy");
    const pb = path.join(dir, "b.npy");
    const out = path.join(dir, "fused.npy");
    writeTensor(pa, a);
    writeTensor(pb, b);
    runCli(["fuse", "--a", pa, "--b", pb, "--out", out, ...fusionFlags(options)]);
    return readTensor(out);
  });
}

function runUncertainty(belief: TensorView, options: UncertaintyOptions): TensorView {
  return withTempDir((dir) => {
    const src = path.join(dir, "belief.npy");
    const out = path.join(dir, "u.npy");
    writeTensor(src, belief);
    const flags = options.rawSingletons ? ["--raw-singletons"] : [];
    runCli(["uncertainty", "--belief", src, "--out", out, ...flags]);
    return readTensor(out);
  });
}

function runRank(u: TensorView, order: RankOrder, batched: boolean): TensorView {
  return withTempDir((dir) => {
    const src = path.join(dir, "u.npy");
    const out = path.join(dir, "ranks.npy");
    writeTensor(src, u);
    const flags = ["--order", order];
    if (batched) {
      flags.push("--batched");
    }
    runCli(["rank", "--u", src, "--out", out, ...flags]);
    return readTensor(out);
  });
}

function runWeightedLoss(
  loss: TensorView,
  u: TensorView,
  schedule: WeightSchedule,
  batched: boolean,
): number[] {
  return withTempDir((dir) => {
    const pl = path.join(dir, "loss.npy");
    const pu = path.join(dir, "u.npy");
    writeTensor(pl, loss);
    writeTensor(pu, u);
    const flags = [...scheduleFlags(schedule)];
    if (batched) {
      flags.push("--batched");
    }
    const summary = runCli(["weighted-loss", "--loss", pl, "--u", pu, ...flags]);
    return summary.stats["weighted_loss"] as number[];
  });
}

function runMix(
  a: TensorView,
  b: TensorView,
  mask: TensorView,
  batched: boolean,
): MixedPair {
  return withTempDir((dir) => {
    const pa = path.join(dir, "a.npy");
    const pb = path.join(dir, "b.npy");
    const pm = path.join(dir, "mask.npy");
    const outA = path.join(dir, "mixed_a.npy");
    const outB = path.join(dir, "mixed_b.npy");
    writeTensor(pa, a);
    writeTensor(pb, b);
    writeTensor(pm, mask);
    const flags = ["--mask", pm];
    if (batched) {
      flags.push("--batched");
    }
    runCli([
      "mix", "--a", pa, "--b", pb, "--out-a", outA, "--out-b", outB, ...flags,
    ]);
    return { mixedA: readTensor(outA), mixedB: readTensor(outB) };
  });
}

function runRestore(
  a: TensorView,
  b: TensorView,
  mask: TensorView,
  batched: boolean,
): RestoredPair {
  return withTempDir((dir) => {
    const pa = path.join(dir, "a.npy");
    const pb = path.join(dir, "b.npy");
    const pm = path.join(dir, "mask.npy");
    const outA = path.join(dir, "restored_a.npy");
    const outB = path.join(dir, "restored_b.npy");
    writeTensor(pa, a);
    writeTensor(pb, b);
    writeTensor(pm, mask);
    const args = [
      "restore", "--a", pa, "--b", pb, "--mask", pm,
      "--out-a", outA, "--out-b", outB,
    ];
    if (batched) {
      args.push("--batched");
    }
    runCli(args);
    return { restoredA: readTensor(outA), restoredB: readTensor(outB) };
  });
}

function checkMixShapes(
  a: TensorView,
  b: TensorView,
  mask: TensorView,
  volumeRanks: readonly number[],
  spatialRank: number,
): void {
  expectDtype(a, "float32", "volume a");
  expectDtype(b, "float32", "volume b");
  expectDtype(mask, "uint8", "mask");
  expectRank(a, volumeRanks, "volume a");
  expectSameShape(a, b, "volume a", "volume b");
  expectRank(mask, [spatialRank], "mask");
  for (let i = 0; i < spatialRank; i++) {
    if (mask.shape[i] !== a.shape[i]) {
      throw new BoundaryError(
        `mask shape (${mask.shape}) does not cover volume shape (${a.shape})`,
      );
    }
  }
}

// ── Belief formation and fusion ─────────────────────────────────────────────

/**
 * Convert raw class logits to belief assignments with a trailing
 * composite channel. Accepts any leading axes; the last axis is the
 * class axis and needs at least two entries.
 */
export function evidence_to_belief(logits: TensorView): TensorView {
  expectDtype(logits, "float32", "logits");
  expectRank(logits, [1, 2, 3, 4], "logits");
  expectMinLastDim(logits, 2, "logits");
  return withTempDir((dir) => {
    const src = path.join(dir, "logits.npy");
    const out = path.join(dir, "belief.npy");
    writeTensor(src, logits);
    runCli(["belief", "--logits", src, "--out", out]);
    return readTensor(out);
  });
}

/** Fuse two single belief assignments (1-D vectors with composite last). */
export function ipaf_fuse(
  a: TensorView,
  b: TensorView,
  options: FusionOptions = {},
): TensorView {
  expectBelief(a, [1], "assignment a");
  expectBelief(b, [1], "assignment b");
  expectSameShape(a, b, "assignment a", "assignment b");
  return runFuse(a, b, options);
}

/** Fuse a batch of assignments, one per leading row. */
export function ipaf_fuse_batched(
  a: TensorView,
  b: TensorView,
  options: FusionOptions = {},
): TensorView {
  expectBelief(a, [2], "assignments a");
  expectBelief(b, [2], "assignments b");
  expectSameShape(a, b, "assignments a", "assignments b");
  return runFuse(a, b, options);
}

/** Fuse two belief volumes of identical shape, channels last. */
export function fuse_volumes(
  a: TensorView,
  b: TensorView,
  options: FusionOptions = {},
): TensorView {
  expectBelief(a, [1, 2, 3, 4], "volume a");
  expectBelief(b, [1, 2, 3, 4], "volume b");
  expectSameShape(a, b, "volume a", "volume b");
  return runFuse(a, b, options);
}

// ── Uncertainty ─────────────────────────────────────────────────────────────

/** Uncertainty score of one belief assignment. */
export function fused_uncertainty(
  belief: TensorView,
  options: UncertaintyOptions = {},
): number {
  expectBelief(belief, [1], "assignment");
  // the CLI writes tensors, so score the row as a one-element batch
  const wrapped = tensor(belief.data, [1, belief.shape[0]!]);
  const result = runUncertainty(wrapped, options);
  return result.data[0]!;
}

/** Uncertainty scores for a batch of assignments, one per row. */
export function fused_uncertainty_batched(
  beliefs: TensorView,
  options: UncertaintyOptions = {},
): TensorView {
  expectBelief(beliefs, [2], "assignments");
  return runUncertainty(beliefs, options);
}

/**
 * Per-voxel uncertainty of a belief volume. The class axis is consumed,
 * so the input needs at least rank 2.
 */
export function uncertainty_volume(
  belief: TensorView,
  options: UncertaintyOptions = {},
): TensorView {
  expectBelief(belief, [2, 3, 4], "belief volume");
  return runUncertainty(belief, options);
}

// ── Ranking and weighting ───────────────────────────────────────────────────

/**
 * Rank voxels by uncertainty. Returns ordinals 1..Z in float32 (exact
 * for any tensor the boundary accepts), same shape as the input.
 */
export function rank_voxels(
  u: TensorView,
  order: RankOrder = "ascending",
): TensorView {
  expectDtype(u, "float32", "uncertainty");
  expectRank(u, [1, 2, 3, 4], "uncertainty");
  return runRank(u, order, false);
}

/** Rank each volume of a batch independently along the leading axis. */
export function rank_voxels_batched(
  u: TensorView,
  order: RankOrder = "ascending",
): TensorView {
  expectDtype(u, "float32", "uncertainty");
  expectRank(u, [2, 3, 4], "uncertainty");
  return runRank(u, order, true);
}

/** Dynamic weight for one rank ordinal, or one weight per ordinal. */
export function dynamic_weight(
  schedule: WeightSchedule,
  ordinal: number,
  count: number,
): number;
export function dynamic_weight(
  schedule: WeightSchedule,
  ordinal: readonly number[],
  count: number,
): number[];
export function dynamic_weight(
  schedule: WeightSchedule,
  ordinal: number | readonly number[],
  count: number,
): number | number[] {
  const ordinals = typeof ordinal === "number" ? [ordinal] : [...ordinal];
  if (ordinals.length === 0) {
    throw new BoundaryError("dynamic_weight needs at least one ordinal");
  }
  if (!Number.isInteger(count) || count < 1) {
    throw new BoundaryError(`voxel count must be a positive integer, got ${count}`);
  }
  for (const s of ordinals) {
    if (!Number.isInteger(s) || s < 1 || s > count) {
      throw new BoundaryError(`rank ordinal ${s} outside 1..${count}`);
    }
  }
  const summary = runCli([
    "weight-at",
    "--rank", ordinals.join(","),
    "--count", String(count),
    ...scheduleFlags(schedule),
  ]);
  const weights = summary.stats["weights"] as number[];
  return typeof ordinal === "number" ? weights[0]! : weights;
}

/** Rank-weighted mean of a per-voxel loss volume. */
export function weighted_loss(
  loss: TensorView,
  u: TensorView,
  schedule: WeightSchedule,
): number {
  expectDtype(loss, "float32", "loss");
  expectDtype(u, "float32", "uncertainty");
  expectRank(loss, [1, 2, 3, 4], "loss");
  expectSameShape(loss, u, "loss", "uncertainty");
  return runWeightedLoss(loss, u, schedule, false)[0]!;
}

/** One weighted loss per leading batch entry. */
export function weighted_loss_batched(
  loss: TensorView,
  u: TensorView,
  schedule: WeightSchedule,
): number[] {
  expectDtype(loss, "float32", "loss");
  expectDtype(u, "float32", "uncertainty");
  expectRank(loss, [2, 3, 4], "loss");
  expectSameShape(loss, u, "loss", "uncertainty");
  return runWeightedLoss(loss, u, schedule, true);
}

// ── Volume mixing ───────────────────────────────────────────────────────────

/**
 * Exchange the mask's zero box between two volumes. Volumes are
 * (W, H, L) or (W, H, L, C); the binary mask is (W, H, L) and
 * broadcasts over channels.
 */
export function mix_pair(a: TensorView, b: TensorView, mask: TensorView): MixedPair {
  checkMixShapes(a, b, mask, [3, 4], 3);
  return runMix(a, b, mask, false);
}

/** Mix volume pairs along the leading axis, one mask per pair. */
export function mix_pair_batched(
  a: TensorView,
  b: TensorView,
  mask: TensorView,
): MixedPair {
  checkMixShapes(a, b, mask, [4], 4);
  return runMix(a, b, mask, true);
}

/** Undo `mix_pair` on prediction volumes using the same mask. */
export function restore_predictions(
  a: TensorView,
  b: TensorView,
  mask: TensorView,
): RestoredPair {
  checkMixShapes(a, b, mask, [3, 4], 3);
  return runRestore(a, b, mask, false);
}

/** Restore prediction pairs along the leading axis, one mask per pair. */
export function restore_predictions_batched(
  a: TensorView,
  b: TensorView,
  mask: TensorView,
): RestoredPair {
  checkMixShapes(a, b, mask, [4], 4);
  return runRestore(a, b, mask, true);
}
