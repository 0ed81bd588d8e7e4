"""Bidirectional copy-paste mixing of volume pairs.

A binary mask with one axis-aligned zero box drives the exchange: voxels
where the mask is 1 keep their own sample, voxels inside the box come from
the partner. Applying the same exchange twice restores the originals, and
the same property moves predictions made on mixed inputs back to the
sample that contributed each voxel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .validation import check_same_shape, check_volume


@dataclass(frozen=True)
class MixMask:
    """Binary (W, H, L) mask that is 0 inside one box and 1 elsewhere.

    ``origin``/``size`` locate the zero box when known; a mask adopted from
    a raw array leaves them as None.
    """

    mask: np.ndarray
    origin: tuple | None = None
    size: tuple | None = None

    @property
    def shape(self):
        return self.mask.shape


@dataclass(frozen=True)
class MixedPair:
    """Two cross-pasted volumes plus the mask that produced them."""

    mixed_a: np.ndarray
    mixed_b: np.ndarray
    mask: MixMask
    source_a: int | None = None
    source_b: int | None = None


def generate_mask(shape, zero_size, seed):
    """Place the zero box uniformly at random inside ``shape``.

    The placement is drawn from a generator seeded with ``seed``, so equal
    seeds give equal masks. A zero box spanning the whole volume sits at
    the origin; a size-0 box yields an all-ones mask.
    """
    shape = tuple(int(d) for d in shape)
    zero_size = tuple(int(d) for d in zero_size)
    if len(shape) != 3 or len(zero_size) != 3:
        raise ValidationError("shape and zero_size must be length-3")
    if any(d < 1 for d in shape):
        raise ValidationError(f"bad volume shape {shape}")
    if any(z < 0 for z in zero_size):
        raise ValidationError(f"zero_size must be non-negative, got {zero_size}")
    if any(z > d for z, d in zip(zero_size, shape)):
        raise ValidationError(f"zero_size {zero_size} exceeds volume shape {shape}")

    rng = np.random.default_rng(seed)
    origin = tuple(int(rng.integers(0, d - z + 1)) for d, z in zip(shape, zero_size))
    mask = np.ones(shape, dtype=np.uint8)
    sl = tuple(slice(o, o + z) for o, z in zip(origin, zero_size))
    mask[sl] = 0
    return MixMask(mask=mask, origin=origin, size=zero_size)


def _mask_array(mask, target_shape):
    m = mask.mask if isinstance(mask, MixMask) else np.asarray(mask)
    if m.ndim != 3:
        raise ValidationError(f"mask must be 3-D, got shape {m.shape}")
    if not np.isin(m, (0, 1)).all():
        raise ValidationError("mask values must be 0 or 1")
    if m.shape != target_shape[:3]:
        raise ValidationError(
            f"mask shape {m.shape} does not match volume shape {target_shape}"
        )
    if len(target_shape) == 4:  # broadcast over trailing channels
        m = m[..., None]
    return m


def _exchange(a, b, m):
    # where m == 1 keep the first argument, else take the second
    return np.where(m == 1, a, b)


def mix_pair(a, b, mask, source_a=None, source_b=None):
    """Exchange the masked-out box between two equally shaped volumes.

    Works on intensity grids, label grids, and channelled (W, H, L, K)
    volumes alike; channels share the mask. Returns a :class:`MixedPair`
    with ``mixed_a = a`` outside the box / ``b`` inside, and vice versa.
    """
    a = np.asarray(a)
    b = np.asarray(b)
    check_same_shape(a, b, "a", "b")
    if a.ndim not in (3, 4):
        raise ValidationError(f"volumes must be 3-D or 4-D, got shape {a.shape}")
    m = _mask_array(mask, a.shape)
    mixed_a = _exchange(a, b, m)
    mixed_b = _exchange(b, a, m)
    if not isinstance(mask, MixMask):
        mask = MixMask(mask=np.asarray(mask, dtype=np.uint8))
    return MixedPair(mixed_a=mixed_a, mixed_b=mixed_b, mask=mask,
                     source_a=source_a, source_b=source_b)


def restore_predictions(pred_mixed_a, pred_mixed_b, mask):
    """Reassign predictions on mixed inputs to their source samples.

    Each voxel of ``pred_mixed_a`` outside the box was predicted from
    sample a's content and stays; inside the box the content came from
    sample b, so those voxels are swapped between the two predictions.
    Returns ``(restored_a, restored_b)``.
    """
    pa = np.asarray(pred_mixed_a)
    pb = np.asarray(pred_mixed_b)
    check_same_shape(pa, pb, "pred_mixed_a", "pred_mixed_b")
    if pa.ndim not in (3, 4):
        raise ValidationError(f"predictions must be 3-D or 4-D, got shape {pa.shape}")
    m = _mask_array(mask, pa.shape)
    restored_a = _exchange(pa, pb, m)
    restored_b = _exchange(pb, pa, m)
    return restored_a, restored_b
