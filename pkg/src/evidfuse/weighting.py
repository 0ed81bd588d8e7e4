"""Curriculum weighting of per-voxel losses by uncertainty rank.

Every voxel of a sample receives an ordinal ``s`` in 1..Z from a stable
sort of the per-voxel uncertainties, then a weight

    phi(h, s) = epsilon * sigmoid(zeta(h) * sigma(s))

with ``zeta(h) = 2h/H - 1`` sweeping -1..1 over the training epochs and
``sigma(s) = 2s/Z - 1`` spreading the ranks over -1..1. Early in training
(``zeta < 0``) the weight profile favours one end of the ranking, flattens
to ``epsilon/2`` at mid-training, and tilts to the other end at the end.
With the default ascending rank order the most uncertain voxel holds rank
Z, so its weight rises monotonically over epochs: easy voxels dominate
first, hard voxels later.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .validation import check_same_shape, check_volume

ASCENDING = "ascending"
DESCENDING = "descending"
_ORDERS = (ASCENDING, DESCENDING)


@dataclass(frozen=True)
class WeightSchedule:
    """State of the weight function: amplitude, epoch position, rank order.

    ``epoch`` is 1-based and must not exceed ``total_epochs``.
    """

    epsilon: float = 1.0
    epoch: int = 1
    total_epochs: int = 1
    rank_order: str = ASCENDING

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")
        if not 1 <= self.epoch <= self.total_epochs:
            raise ValidationError(
                f"epoch must lie in [1, {self.total_epochs}], got {self.epoch}"
            )
        if self.rank_order not in _ORDERS:
            raise ValidationError(f"rank_order must be one of {_ORDERS}")

    @property
    def epoch_position(self):
        # signed training progress: -1 at the first epoch, +1 at the last
        return 2.0 * self.epoch / self.total_epochs - 1.0


def _sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def rank_voxels(uncertainty, order=ASCENDING):
    """Assign each voxel its 1-based position in the sorted uncertainty list.

    The sort is stable with ties broken by linear (C-order) voxel index, so
    a constant volume yields ranks equal to linear index + 1. Returns an
    int32 array of the input shape holding a permutation of 1..Z.
    """
    if order not in _ORDERS:
        raise ValidationError(f"order must be one of {_ORDERS}")
    u = check_volume(uncertainty, name="uncertainty", dtype=np.float64).ravel()
    if order == ASCENDING:
        perm = np.argsort(u, kind="stable")
    else:
        perm = np.argsort(-u, kind="stable")
    ranks = np.empty(u.size, dtype=np.int32)
    ranks[perm] = np.arange(1, u.size + 1, dtype=np.int32)
    return ranks.reshape(np.shape(uncertainty))


def dynamic_weight(schedule, s, z_total):
    """Weight of the voxel holding ordinal ``s`` out of ``z_total``.

    ``s`` may be a scalar or an array of ordinals; the result is in
    (0, epsilon) elementwise.
    """
    s_arr = np.asarray(s)
    if s_arr.min() < 1 or s_arr.max() > z_total:
        raise ValidationError(f"ordinals must lie in [1, {z_total}]")
    rank_position = 2.0 * s_arr / z_total - 1.0
    phi = schedule.epsilon * _sigmoid(schedule.epoch_position * rank_position)
    return float(phi) if np.isscalar(s) else phi


def weight_volume(uncertainty, schedule):
    """Per-voxel weights for one sample: ranks then ``dynamic_weight``."""
    ranks = rank_voxels(uncertainty, schedule.rank_order)
    return dynamic_weight(schedule, ranks, ranks.size)


def weighted_loss(per_voxel_loss, uncertainty, schedule):
    """Rank-weighted mean of a per-voxel loss volume for one sample.

    Returns ``sum_z phi(h, s(z)) * loss_z / Z``. Losses for a group of
    samples are summed by calling this per sample and adding the results.
    """
    loss = check_volume(per_voxel_loss, name="per_voxel_loss", dtype=np.float64)
    check_same_shape(loss, uncertainty, "per_voxel_loss", "uncertainty")
    phi = weight_volume(uncertainty, schedule)
    return float((phi * loss).sum() / loss.size)
