/**
 * evidfuse-client — TypeScript access to the evidential fusion kernels.
 *
 * Everything flows through the `evidfuse` CLI and .npy tensor files;
 * no Python runs in-process.
 */

export {
  BoundaryError,
  Dtype,
  MAX_RANK,
  TensorView,
  dtypeOf,
  f32,
  numel,
  tensor,
  u8,
} from "./arrayview.js";
export { NpyFormatError, decodeNpy, encodeNpy } from "./npy.js";
export {
  CliError,
  CliSummary,
  cliBinary,
  readTensor,
  runCli,
  withTempDir,
  writeTensor,
} from "./runner.js";
export {
  FusionOptions,
  MixedPair,
  RankOrder,
  RestoredPair,
  UncertaintyOptions,
  WeightSchedule,
  dynamic_weight,
  evidence_to_belief,
  fuse_volumes,
  fused_uncertainty,
  fused_uncertainty_batched,
  ipaf_fuse,
  ipaf_fuse_batched,
  mix_pair,
  mix_pair_batched,
  rank_voxels,
  rank_voxels_batched,
  restore_predictions,
  restore_predictions_batched,
  uncertainty_volume,
  weighted_loss,
  weighted_loss_batched,
} from "./kernels.js";
