"""Input validation helpers.

All public entry points funnel their array arguments through these checks so
that a bad call fails with a :class:`~evidfuse.exceptions.ValidationError`
before any arithmetic runs, in the spirit of scikit-learn's ``check_array``.
"""

from __future__ import annotations

import numpy as np

from .exceptions import NonFiniteError, ValidationError

# Element counts are kept below 2**31 so index arithmetic stays in 32 bits.
MAX_ELEMENTS = 2**31 - 1

NORMALIZATION_ATOL = 1e-5


def check_volume(a, name="volume", ndim=None, dtype=None):
    """Validate a dense grid and return it as a contiguous ndarray.

    ``ndim`` may be an int or a tuple of admissible ranks. Float inputs must
    be finite. The array is returned C-contiguous, converted to ``dtype``
    when one is given.
    """
    arr = np.asarray(a)
    if ndim is not None:
        ranks = (ndim,) if isinstance(ndim, int) else tuple(ndim)
        if arr.ndim not in ranks:
            raise ValidationError(
                f"{name}: expected {ranks}-dimensional array, got shape {arr.shape}"
            )
    if arr.size == 0:
        raise ValidationError(f"{name}: empty array")
    if arr.size > MAX_ELEMENTS:
        raise ValidationError(
            f"{name}: {arr.size} elements exceeds the 32-bit limit {MAX_ELEMENTS}"
        )
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    if np.issubdtype(arr.dtype, np.floating) and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name}: contains NaN or Inf")
    return np.ascontiguousarray(arr)


def check_labels(labels, n_classes, name="labels"):
    """Validate an integer class-index grid with values in [0, n_classes)."""
    arr = np.asarray(labels)
    if not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"{name}: expected an integer array, got {arr.dtype}")
    if arr.size == 0:
        raise ValidationError(f"{name}: empty array")
    if arr.min() < 0 or arr.max() >= n_classes:
        raise ValidationError(
            f"{name}: values must lie in [0, {n_classes}), "
            f"got range [{arr.min()}, {arr.max()}]"
        )
    return np.ascontiguousarray(arr)


def check_same_shape(a, b, name_a="a", name_b="b"):
    if np.shape(a) != np.shape(b):
        raise ValidationError(
            f"shape mismatch: {name_a} has {np.shape(a)}, {name_b} has {np.shape(b)}"
        )


def check_belief(b, name="belief"):
    """Validate a mass array whose last axis holds N singleton masses plus
    the composite (uncertainty) mass. Returns a float64 view/copy."""
    arr = check_volume(b, name=name, dtype=np.float64)
    if arr.ndim < 1 or arr.shape[-1] < 3:
        raise ValidationError(
            f"{name}: last axis must hold at least 2 class masses plus the "
            f"composite mass, got shape {arr.shape}"
        )
    if arr.min() < 0.0:
        raise ValidationError(f"{name}: masses must be non-negative")
    return arr


def check_normalized(b, name="belief", atol=NORMALIZATION_ATOL):
    """Validate that the masses along the last axis total 1 per entry."""
    arr = check_belief(b, name=name)
    totals = arr.sum(axis=-1)
    err = np.abs(totals - 1.0).max()
    if err > atol:
        raise ValidationError(
            f"{name}: masses must sum to 1 (max deviation {err:.3g} > {atol:g}); "
            "renormalize first"
        )
    return arr
