"""Evidential fusion toolkit for semi-supervised volumetric segmentation.

Dense belief assignments from evidence logits, a conflict-free fusion
rule over pairs of assignments, entropy-scaled uncertainty, rank-based
dynamic loss weighting, box mixing with prediction restoration, and a
small teacher-student training loop that exercises all of it.
"""

from .autodiff import Tensor
from .estimator import EvidentialSegmenter
from .evidence import (
    CONFLICT_EPSILON,
    belief_to_probability,
    evidence_to_belief,
    renormalize,
)
from .exceptions import (
    EvidfuseError,
    NonFiniteError,
    NumericalError,
    TensorCorruptionError,
    TensorEncodingError,
    TensorFormatError,
    TensorIOError,
    TotalConflictError,
    TrainingDivergedError,
    ValidationError,
)
from .fusion import FusionConfig, fuse_volumes, ipaf_fuse
from .mixing import (
    MixMask,
    MixedPair,
    generate_mask,
    mix_pair,
    restore_predictions,
)
from .tensor_io import load_tensor, loads_tensor, save_tensor
from .training import (
    SyntheticDataset,
    ToyModel,
    TrainConfig,
    ce_loss,
    dice_loss,
    ellipsoid_labels,
    ema_update,
    evaluate,
    generate_synthetic,
    grad_check,
    predict_beliefs,
    predict_labels,
    pretrain,
    pseudo_labels,
    self_train,
    voxel_features,
)
from .uncertainty import fused_uncertainty, uncertainty_volume
from .weighting import (
    ASCENDING,
    DESCENDING,
    WeightSchedule,
    dynamic_weight,
    rank_voxels,
    weight_volume,
    weighted_loss,
)

__version__ = "0.1.0"

__all__ = [
    "ASCENDING",
    "CONFLICT_EPSILON",
    "DESCENDING",
    "EvidentialSegmenter",
    "EvidfuseError",
    "FusionConfig",
    "MixMask",
    "MixedPair",
    "NonFiniteError",
    "NumericalError",
    "SyntheticDataset",
    "Tensor",
    "TensorCorruptionError",
    "TensorEncodingError",
    "TensorFormatError",
    "TensorIOError",
    "TotalConflictError",
    "ToyModel",
    "TrainConfig",
    "TrainingDivergedError",
    "ValidationError",
    "WeightSchedule",
    "belief_to_probability",
    "ce_loss",
    "dice_loss",
    "dynamic_weight",
    "ellipsoid_labels",
    "ema_update",
    "evaluate",
    "evidence_to_belief",
    "fuse_volumes",
    "fused_uncertainty",
    "generate_mask",
    "generate_synthetic",
    "grad_check",
    "ipaf_fuse",
    "load_tensor",
    "loads_tensor",
    "mix_pair",
    "predict_beliefs",
    "predict_labels",
    "pretrain",
    "pseudo_labels",
    "rank_voxels",
    "renormalize",
    "restore_predictions",
    "save_tensor",
    "self_train",
    "uncertainty_volume",
    "voxel_features",
    "weight_volume",
    "weighted_loss",
    "__version__",
]
