"""Entropy-scaled uncertainty of fused belief assignments.

Each voxel's uncertainty is the Shannon entropy (base 2) of its class-mass
distribution, scaled by its composite mass ``u``::

    U = -u * sum_n( d_n * log2(d_n) )

where ``d`` is the singleton-mass distribution renormalized to sum to 1.
Renormalizing makes the sum a true entropy in [0, log2 N], so
``0 <= U <= u * log2(N)`` always holds and a voxel is maximally uncertain
only when it both carries high composite mass and spreads its class masses
evenly. The variant that feeds the raw (subnormal) singleton masses into
the entropy sum is kept behind ``raw_singletons=True`` for comparison; its
values are not bounded by ``u * log2(N)``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import ValidationError
from .validation import check_normalized


def _entropy_bits(p):
    # sum of -p*log2(p) along the last axis with 0*log(0) := 0
    safe = np.where(p > 0.0, p, 1.0)
    return -(p * np.log2(safe)).sum(axis=-1)


def fused_uncertainty(belief, raw_singletons=False):
    """Uncertainty of one normalized assignment, as a float."""
    arr = check_normalized(belief, name="belief")
    if arr.ndim != 1:
        raise ValidationError("fused_uncertainty expects a single assignment")
    return float(_uncertainty(arr, raw_singletons))


def uncertainty_volume(beliefs, raw_singletons=False):
    """Voxel-wise uncertainty of a (..., N+1) assignment volume.

    Returns a float32 array of the leading shape (e.g. (W, H, L)).
    """
    arr = check_normalized(beliefs, name="beliefs")
    return _uncertainty(arr, raw_singletons).astype(np.float32)


def _uncertainty(arr, raw_singletons):
    n = arr.shape[-1] - 1
    singleton = arr[..., :n]
    composite = arr[..., n]
    if raw_singletons:
        return composite * _entropy_bits(singleton)
    totals = singleton.sum(axis=-1, keepdims=True)
    # All-composite voxels have no class distribution; their entropy term is 0.
    dist = np.divide(singleton, totals, out=np.zeros_like(singleton), where=totals > 0.0)
    return composite * _entropy_bits(dist)
