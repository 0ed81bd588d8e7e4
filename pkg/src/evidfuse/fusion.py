"""Pairwise combination of belief assignments.

The rule keeps Dempster-style agreement products but departs from the
classical rule in two ways: the interaction between a singleton mass and
the other source's composite mass is damped by 1/N instead of transferred
in full, and conflicting mass is dropped rather than renormalized away.
For masses ``a`` and ``b`` with composite masses ``a_u``, ``b_u``::

    fused_n = a_n * b_n + (1/N) * (a_n * b_u + b_n * a_u)
    fused_u = a_u * b_u

The raw result totals at most 1; the deficit is the discarded conflict.
Because downstream consumers (entropy, losses) expect a distribution, the
default configuration renormalizes the result, with the raw subnormal
variant available via ``renormalize_output=False``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import evidence
from .exceptions import ValidationError
from .validation import check_normalized, check_same_shape


@dataclass(frozen=True)
class FusionConfig:
    """Options for the combination rule.

    ``renormalize_output``: rescale fused masses to total 1.
    ``conflict_epsilon``: totals at or below this are treated as total
    conflict when renormalizing.
    """

    renormalize_output: bool = True
    conflict_epsilon: float = evidence.CONFLICT_EPSILON

    def __post_init__(self):
        if self.conflict_epsilon <= 0:
            raise ValidationError("conflict_epsilon must be > 0")


def _fuse_raw(a, b):
    n = a.shape[-1] - 1
    a_s, a_u = a[..., :n], a[..., n:]
    b_s, b_u = b[..., :n], b[..., n:]
    inv_n = 1.0 / n
    fused_s = a_s * b_s + inv_n * (a_s * b_u + b_s * a_u)
    fused_u = a_u * b_u
    return np.concatenate([fused_s, fused_u], axis=-1)


def ipaf_fuse(a, b, config=None):
    """Combine two normalized assignments for the same voxel.

    Inputs are 1-D mass vectors of equal length N+1. Returns the fused
    vector, renormalized unless the config says otherwise.
    """
    config = config or FusionConfig()
    a = check_normalized(a, name="a")
    b = check_normalized(b, name="b")
    if a.ndim != 1 or b.ndim != 1:
        raise ValidationError("ipaf_fuse expects single assignments (1-D vectors)")
    if a.shape != b.shape:
        raise ValidationError(
            f"class-count mismatch: a has {a.shape[-1] - 1}, b has {b.shape[-1] - 1}"
        )
    fused = _fuse_raw(a, b)
    if config.renormalize_output:
        fused = evidence.renormalize(fused, config.conflict_epsilon)
    return fused


def fuse_volumes(original, restored, config=None):
    """Voxel-wise combination of two assignment volumes of identical shape.

    Both arguments are (..., N+1) mass arrays (typically (W, H, L, N+1));
    the rule is applied independently at every voxel. Returns float32.
    """
    config = config or FusionConfig()
    original = check_normalized(original, name="original")
    restored = check_normalized(restored, name="restored")
    check_same_shape(original, restored, "original", "restored")
    fused = _fuse_raw(original, restored)
    if config.renormalize_output:
        fused = evidence.renormalize(fused, config.conflict_epsilon)
    return fused.astype(np.float32)
