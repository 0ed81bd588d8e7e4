"""Belief-mass assignments from evidence logits.

A belief assignment spreads unit mass over N singleton classes plus one
composite set covering all classes; the composite mass is the part of the
prediction not committed to any single class and acts as a per-voxel
uncertainty measure. Arrays carry the N singleton masses followed by the
composite mass along their last axis, so a volume of assignments has shape
(W, H, L, N+1).
"""

from __future__ import annotations

import numpy as np

from .exceptions import TotalConflictError, ValidationError
from .validation import check_belief, check_normalized, check_volume

CONFLICT_EPSILON = 1e-12


def _softplus(x):
    # log(1 + e^x), stable for large |x|
    return np.logaddexp(0.0, x)


def evidence_to_belief(logits):
    """Map evidence logits to normalized belief masses.

    Per entry with N logits: evidence ``e = softplus(logit)``, total strength
    ``S = N + sum(e)``, singleton masses ``e / S``, composite mass ``N / S``.
    The composite mass shrinks as total evidence grows, and the N+1 masses
    sum to 1 by construction.

    ``logits`` may have any leading shape; the last axis indexes the N >= 2
    classes. Returns a float32 array with last axis N+1.
    """
    arr = check_volume(logits, name="logits", dtype=np.float64)
    if arr.ndim < 1 or arr.shape[-1] < 2:
        raise ValidationError(
            f"logits: need >= 2 classes on the last axis, got shape {arr.shape}"
        )
    n = arr.shape[-1]
    e = _softplus(arr)
    strength = n + e.sum(axis=-1, keepdims=True)
    singleton = e / strength
    composite = n / strength
    return np.concatenate([singleton, composite], axis=-1).astype(np.float32)


def belief_to_probability(belief):
    """Collapse a normalized assignment to class probabilities.

    The composite mass is split uniformly across the N classes (the
    pignistic redistribution): ``p_n = singleton_n + composite / N``. A
    vacuous assignment therefore maps to the uniform distribution.
    """
    arr = check_normalized(belief, name="belief")
    n = arr.shape[-1] - 1
    return arr[..., :n] + arr[..., n:] / n


def renormalize(belief, conflict_epsilon=CONFLICT_EPSILON):
    """Scale masses so they sum to 1 along the last axis.

    Raises :class:`TotalConflictError` when any entry's total mass is at or
    below ``conflict_epsilon``: there is no distribution to recover then.
    """
    arr = check_belief(belief, name="belief")
    totals = arr.sum(axis=-1, keepdims=True)
    if totals.min() <= conflict_epsilon:
        raise TotalConflictError(
            f"total mass {totals.min():.3g} <= {conflict_epsilon:g}; "
            "assignment carries no usable belief"
        )
    return arr / totals
