"""Desk-scale teacher-student training on synthetic ellipsoid volumes.

Everything here runs the full pipeline end to end: mix a pair of volumes,
predict beliefs for the originals and the mixed versions, restore the
mixed predictions to source coordinates, fuse each restored prediction
with its original, and optimize Dice + cross-entropy on both the fused
and the plain predictions, plus the rank-weighted per-voxel term.

The network is fixed: 10 per-voxel features (intensity, its 6 axis
neighbors, 3 normalized coordinates) -> dense 16 tanh -> dense 16 tanh ->
dense N evidence logits. Training differentiates through softplus,
belief formation, restoration, and fusion via :mod:`evidfuse.autodiff`;
voxel weights and pseudo-labels are constants on the tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    aclip,
    alog,
    asoftplus,
    asum,
    atanh,
    value_of,
)
from .exceptions import TrainingDivergedError, ValidationError
from .mixing import generate_mask, mix_pair
from .uncertainty import uncertainty_volume
from .validation import check_labels, check_volume
from .weighting import ASCENDING, WeightSchedule, weight_volume

N_FEATURES = 10
HIDDEN_UNITS = 16
DICE_SMOOTHING = 1e-5
PROB_FLOOR = 1e-7
DEFAULT_SHAPE = (24, 24, 24)


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by the pretraining and self-training loops.

    The three ``weighted_scale_*`` fields multiply the rank-weighted loss
    terms: one for the pretraining objective, and one each for the
    labeled and unlabeled terms of the self-training objective.
    """

    n_classes: int = 2
    weighted_scale_pretrain: float = 0.8
    weighted_scale_labeled: float = 0.8
    weighted_scale_unlabeled: float = 0.4
    ema_decay: float = 0.99
    learning_rate: float = 0.05
    pretrain_epochs: int = 15
    selftrain_epochs: int = 30
    pairs_per_step: int = 1
    labeled_fraction: float = 0.1
    zero_fraction: float = 2.0 / 3.0
    epsilon: float = 1.0
    rank_order: str = ASCENDING
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValidationError("n_classes must be >= 2")
        for name in ("weighted_scale_pretrain", "weighted_scale_labeled",
                     "weighted_scale_unlabeled"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if not 0.0 < self.ema_decay <= 1.0:
            raise ValidationError("ema_decay must lie in (0, 1]")
        if self.learning_rate <= 0:
            raise ValidationError("learning_rate must be > 0")
        if self.pretrain_epochs < 0 or self.selftrain_epochs < 0:
            raise ValidationError("epoch counts must be >= 0")
        if self.pairs_per_step < 1:
            raise ValidationError("pairs_per_step must be >= 1")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ValidationError("labeled_fraction must lie in (0, 1]")
        if not 0.0 <= self.zero_fraction <= 1.0:
            raise ValidationError("zero_fraction must lie in [0, 1]")
        if self.epsilon <= 0:
            raise ValidationError("epsilon must be > 0")

    def schedule(self, epoch, total_epochs):
        return WeightSchedule(epsilon=self.epsilon, epoch=epoch,
                              total_epochs=total_epochs,
                              rank_order=self.rank_order)


class ToyModel:
    """Per-voxel dense evidence network with a fixed architecture.

    Parameters live as float64 arrays in ``weights`` in the order
    (w1, b1, w2, b2, w3, b3); ``flat()`` / ``load_flat()`` serialize them
    in that same order.
    """

    def __init__(self, n_classes=2, seed=0):
        if n_classes < 2:
            raise ValidationError("n_classes must be >= 2")
        self.n_classes = int(n_classes)
        rng = np.random.default_rng(seed)
        dims = [(N_FEATURES, HIDDEN_UNITS), (HIDDEN_UNITS, HIDDEN_UNITS),
                (HIDDEN_UNITS, self.n_classes)]
        self.weights = []
        for fan_in, fan_out in dims:
            scale = 1.0 / np.sqrt(fan_in)
            self.weights.append(rng.normal(0.0, scale, (fan_in, fan_out)))
            self.weights.append(np.zeros(fan_out))

    @property
    def param_shapes(self):
        return [w.shape for w in self.weights]

    @property
    def n_params(self):
        return sum(w.size for w in self.weights)

    def parameters(self):
        return list(self.weights)

    def set_parameters(self, params):
        if len(params) != len(self.weights):
            raise ValidationError("parameter list length mismatch")
        for i, (old, new) in enumerate(zip(self.weights, params)):
            new = np.asarray(new, dtype=np.float64)
            if new.shape != old.shape:
                raise ValidationError(
                    f"parameter {i} has shape {new.shape}, expected {old.shape}"
                )
            if not np.isfinite(new).all():
                raise ValidationError(f"parameter {i} contains non-finite values")
            self.weights[i] = new.copy()

    def flat(self):
        return np.concatenate([w.ravel() for w in self.weights])

    def load_flat(self, vec):
        vec = np.asarray(vec, dtype=np.float64).ravel()
        if vec.size != self.n_params:
            raise ValidationError(
                f"expected {self.n_params} parameters, got {vec.size}"
            )
        self.set_parameters(unflatten_params(vec, self.param_shapes))

    def copy(self):
        dup = ToyModel(self.n_classes)
        dup.set_parameters(self.weights)
        return dup

    def forward(self, features):
        """Evidence logits (Z, N) for a (Z, 10) float feature matrix."""
        return _forward(self.weights, np.asarray(features, dtype=np.float64))


def unflatten_params(vec, shapes):
    out, at = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(vec[at:at + size].reshape(shape).copy())
        at += size
    return out


def _forward(params, feats):
    w1, b1, w2, b2, w3, b3 = params
    x = Tensor(feats) if isinstance(w1, Tensor) else feats
    h = atanh(x @ w1 + b1)
    h = atanh(h @ w2 + b2)
    return h @ w3 + b3


def voxel_features(volume):
    """(Z, 10) feature rows: intensity, 6 edge-padded neighbors, coords."""
    v = check_volume(volume, name="volume", ndim=3, dtype=np.float64)
    p = np.pad(v, 1, mode="edge")
    planes = [
        v,
        p[:-2, 1:-1, 1:-1], p[2:, 1:-1, 1:-1],
        p[1:-1, :-2, 1:-1], p[1:-1, 2:, 1:-1],
        p[1:-1, 1:-1, :-2], p[1:-1, 1:-1, 2:],
    ]
    axes = [np.linspace(0.0, 1.0, d) for d in v.shape]
    planes.extend(np.meshgrid(*axes, indexing="ij"))
    return np.stack([f.ravel() for f in planes], axis=1)


# -- synthetic data ----------------------------------------------------


@dataclass
class SyntheticDataset:
    """Volumes plus exact geometric labels, split into labeled/unlabeled."""

    volumes: np.ndarray            # (count, W, H, L) float32
    labels: np.ndarray             # (count, W, H, L) uint8
    labeled_indices: tuple = ()
    unlabeled_indices: tuple = ()
    n_classes: int = 2

    def __len__(self):
        return self.volumes.shape[0]

    @property
    def shape(self):
        return self.volumes.shape[1:]


def ellipsoid_labels(shape, center, radii):
    """Binary uint8 grid marking the axis-aligned ellipsoid interior."""
    grids = np.meshgrid(*[np.arange(d, dtype=np.float64) for d in shape],
                        indexing="ij")
    q = sum(((g - c) / r) ** 2 for g, c, r in zip(grids, center, radii))
    return (q <= 1.0).astype(np.uint8)


def generate_synthetic(count, seed, labeled_count=None, shape=DEFAULT_SHAPE,
                       noise_sigma=0.1):
    """Noisy single-ellipsoid volumes with exact labels, binary classes.

    The first ``labeled_count`` samples form the labeled subset (default:
    a tenth of ``count``, at least 2). Equal seeds give equal datasets.
    """
    count = int(count)
    if count < 2:
        raise ValidationError("count must be >= 2")
    if labeled_count is None:
        labeled_count = max(2, round(0.1 * count))
    labeled_count = int(labeled_count)
    if not 2 <= labeled_count <= count:
        raise ValidationError("labeled_count must lie in [2, count]")

    rng = np.random.default_rng(seed)
    volumes = np.empty((count,) + tuple(shape), dtype=np.float32)
    labels = np.empty((count,) + tuple(shape), dtype=np.uint8)
    for i in range(count):
        radii = rng.permutation([4.0, 5.0, 6.0])
        center = [(d - 1) / 2.0 + rng.uniform(-2.5, 2.5) for d in shape]
        inside = ellipsoid_labels(shape, center, radii)
        intensity = rng.uniform(0.9, 1.1)
        noise = rng.normal(0.0, noise_sigma, shape)
        volumes[i] = (inside * intensity + noise).astype(np.float32)
        labels[i] = inside
    return SyntheticDataset(
        volumes=volumes,
        labels=labels,
        labeled_indices=tuple(range(labeled_count)),
        unlabeled_indices=tuple(range(labeled_count, count)),
        n_classes=2,
    )


# -- belief algebra on the tape ----------------------------------------
# These repeat the kernel formulas in a form that runs on both ndarrays
# and Tensors; the unit tests pin them to the float32 kernel modules.


def _belief_parts(logits, n_classes):
    ev = asoftplus(logits)
    total = asum(ev, axis=1, keepdims=True) + float(n_classes)
    return ev / total, float(n_classes) / total


def _pignistic(singleton, composite, n_classes):
    return singleton + composite * (1.0 / n_classes)


def _fuse_parts(a_sing, a_comp, b_sing, b_comp, n_classes):
    inv_n = 1.0 / n_classes
    fused_sing = a_sing * b_sing + (a_sing * b_comp + b_sing * a_comp) * inv_n
    fused_comp = a_comp * b_comp
    total = asum(fused_sing, axis=1, keepdims=True) + fused_comp
    return fused_sing / total, fused_comp / total


def _restore_parts(part_a, part_b, keep):
    # keep is the flattened binary mask (Z, 1); 1 keeps the first branch
    return part_a * keep + part_b * (1.0 - keep)


def _uncertainty_values(singleton, composite):
    sing = np.asarray(value_of(singleton), dtype=np.float32)
    comp = np.asarray(value_of(composite), dtype=np.float32)
    return uncertainty_volume(np.concatenate([sing, comp], axis=1))


# -- losses ------------------------------------------------------------


def _one_hot(labels, n_classes):
    labels = check_labels(np.asarray(labels).ravel(), n_classes)
    return np.eye(n_classes, dtype=np.float64)[labels]


def dice_loss(pred_prob, labels, n_classes=None):
    """Soft Dice against one-hot labels, averaged over classes.

    ``pred_prob`` holds per-voxel probability rows on the last axis;
    ndarray inputs of any leading shape are accepted, Tensor inputs must
    already be (Z, N).
    """
    p, onehot, n = _prob_rows(pred_prob, labels, n_classes)
    inter = asum(p * onehot, axis=0)
    denom = asum(p, axis=0) + onehot.sum(axis=0)
    dice = (2.0 * inter + DICE_SMOOTHING) / (denom + DICE_SMOOTHING)
    return asum(1.0 - dice) / float(n)


def ce_loss(pred_prob, labels, n_classes=None):
    """Mean cross-entropy with probabilities clamped to [1e-7, 1]."""
    p, onehot, _ = _prob_rows(pred_prob, labels, n_classes)
    per_voxel = _per_voxel_ce(p, onehot)
    return asum(per_voxel) / float(onehot.shape[0])


def _per_voxel_ce(prob_rows, onehot):
    p_true = asum(prob_rows * onehot, axis=1)
    return -alog(aclip(p_true, PROB_FLOOR, 1.0))


def _prob_rows(pred_prob, labels, n_classes):
    if isinstance(pred_prob, Tensor):
        if len(pred_prob.shape) != 2:
            raise ValidationError("Tensor predictions must be (Z, N) rows")
        p = pred_prob
        n = pred_prob.shape[1]
    else:
        arr = check_volume(pred_prob, name="pred_prob", dtype=np.float64)
        n = arr.shape[-1]
        p = arr.reshape(-1, n)
    if n_classes is not None and n != n_classes:
        raise ValidationError(f"expected {n_classes} classes, got {n}")
    onehot = _one_hot(labels, n)
    if onehot.shape[0] != (p.shape[0] if isinstance(p, Tensor) else len(p)):
        raise ValidationError("labels do not match prediction voxel count")
    return p, onehot, n


# -- one mixed pair, predicted and fused -------------------------------


@dataclass
class _PairBatch:
    """Constant inputs for one mixed pair of samples."""

    feats_a: np.ndarray
    feats_b: np.ndarray
    feats_mixed_a: np.ndarray
    feats_mixed_b: np.ndarray
    target_a: np.ndarray           # flat int labels for sample a
    target_b: np.ndarray
    keep: np.ndarray               # flat (Z, 1) float mask, 1 = keep own


def _make_pair_batch(vol_a, target_a, vol_b, target_b, zero_size, rng):
    mask = generate_mask(vol_a.shape, zero_size, rng)
    pair = mix_pair(vol_a, vol_b, mask)
    return _PairBatch(
        feats_a=voxel_features(vol_a),
        feats_b=voxel_features(vol_b),
        feats_mixed_a=voxel_features(pair.mixed_a),
        feats_mixed_b=voxel_features(pair.mixed_b),
        target_a=np.asarray(target_a).ravel(),
        target_b=np.asarray(target_b).ravel(),
        keep=mask.mask.ravel().astype(np.float64)[:, None],
    )


def _pair_predictions(params, batch, n_classes):
    """Original, restored, and fused belief parts for both samples."""
    orig_a = _belief_parts(_forward(params, batch.feats_a), n_classes)
    orig_b = _belief_parts(_forward(params, batch.feats_b), n_classes)
    mixed_a = _belief_parts(_forward(params, batch.feats_mixed_a), n_classes)
    mixed_b = _belief_parts(_forward(params, batch.feats_mixed_b), n_classes)
    rest_a = tuple(_restore_parts(x, y, batch.keep)
                   for x, y in zip(mixed_a, mixed_b))
    rest_b = tuple(_restore_parts(x, y, batch.keep)
                   for x, y in zip(mixed_b, mixed_a))
    fused_a = _fuse_parts(*orig_a, *rest_a, n_classes)
    fused_b = _fuse_parts(*orig_b, *rest_b, n_classes)
    return {"orig_a": orig_a, "orig_b": orig_b,
            "fused_a": fused_a, "fused_b": fused_b}


def _sample_terms(orig, fused, target, n_classes, phi):
    """Base loss (fused + original Dice/CE) and the rank-weighted term."""
    onehot = _one_hot(target, n_classes)
    prob_orig = _pignistic(*orig, n_classes)
    prob_fused = _pignistic(*fused, n_classes)
    base = (dice_loss(prob_fused, target, n_classes)
            + ce_loss(prob_fused, target, n_classes)
            + dice_loss(prob_orig, target, n_classes)
            + ce_loss(prob_orig, target, n_classes))
    if phi is None:
        return base, None
    per_voxel = _per_voxel_ce(prob_fused, onehot)
    weighted = asum(per_voxel * phi) / float(phi.size)
    return base, weighted


def _fused_weights(preds, schedule):
    """Per-voxel weights for both samples, detached from the tape."""
    phi_a = weight_volume(_uncertainty_values(*preds["fused_a"]), schedule)
    phi_b = weight_volume(_uncertainty_values(*preds["fused_b"]), schedule)
    return phi_a, phi_b


def _pretrain_objective(params, batch, n_classes, schedule, weighted_scale,
                        weights=None):
    preds = _pair_predictions(params, batch, n_classes)
    phi_a, phi_b = _fused_weights(preds, schedule) if weights is None else weights
    base_a, w_a = _sample_terms(preds["orig_a"], preds["fused_a"],
                                batch.target_a, n_classes, phi_a)
    base_b, w_b = _sample_terms(preds["orig_b"], preds["fused_b"],
                                batch.target_b, n_classes, phi_b)
    base = base_a + base_b
    weighted = w_a + w_b
    return base + weighted_scale * weighted, {
        "base": base, "weighted": weighted}


def _selftrain_objective(params, batch, n_classes, schedule, scale_labeled,
                         scale_unlabeled, weights=None):
    # sample a is the labeled one, sample b carries pseudo-labels
    preds = _pair_predictions(params, batch, n_classes)
    phi_a, phi_b = _fused_weights(preds, schedule) if weights is None else weights
    base_a, w_a = _sample_terms(preds["orig_a"], preds["fused_a"],
                                batch.target_a, n_classes, phi_a)
    base_b, w_b = _sample_terms(preds["orig_b"], preds["fused_b"],
                                batch.target_b, n_classes, phi_b)
    total = base_a + base_b + scale_labeled * w_a + scale_unlabeled * w_b
    return total, {"labeled": base_a, "unlabeled": base_b,
                   "weighted_labeled": w_a, "weighted_unlabeled": w_b}


# -- optimization ------------------------------------------------------


def _tape_params(weights):
    return [Tensor(w) for w in weights]


def _apply_step(model, tape_params, learning_rate, scale=1.0):
    step = learning_rate * scale
    model.weights = [w - step * p.grad
                     for w, p in zip(model.weights, tape_params)]


def _check_finite_loss(value, epoch, pair, stage):
    if not np.isfinite(value):
        raise TrainingDivergedError(
            f"{stage} objective became {value} at epoch {epoch}, pair {pair}"
        )


def _zero_size(shape, fraction):
    return tuple(int(round(d * fraction)) for d in shape)


def _mean(values):
    return float(np.mean(values)) if values else 0.0


def pretrain(dataset, cfg, callback=None):
    """Train a fresh model on the labeled subset; returns the model.

    ``callback``, when given, receives one dict per epoch with the mean
    objective and its components. With ``pretrain_epochs`` 0 the
    initialized model is returned untouched.
    """
    labeled = list(dataset.labeled_indices)
    if len(labeled) < 2:
        raise ValidationError("pretraining needs at least 2 labeled samples")
    model = ToyModel(n_classes=cfg.n_classes, seed=cfg.seed)
    rng = np.random.default_rng([cfg.seed, 0])
    zero_size = _zero_size(dataset.shape, cfg.zero_fraction)
    pairs = [(labeled[i], labeled[(i + 1) % len(labeled)])
             for i in range(len(labeled))]

    for epoch in range(1, cfg.pretrain_epochs + 1):
        schedule = cfg.schedule(epoch, cfg.pretrain_epochs)
        totals, bases, weighteds = [], [], []
        for start in range(0, len(pairs), cfg.pairs_per_step):
            group = pairs[start:start + cfg.pairs_per_step]
            params = _tape_params(model.weights)
            objective = None
            for i, j in group:
                batch = _make_pair_batch(
                    dataset.volumes[i], dataset.labels[i],
                    dataset.volumes[j], dataset.labels[j], zero_size, rng)
                loss, parts = _pretrain_objective(
                    params, batch, cfg.n_classes, schedule,
                    cfg.weighted_scale_pretrain)
                objective = loss if objective is None else objective + loss
                totals.append(float(value_of(loss)))
                bases.append(float(value_of(parts["base"])))
                weighteds.append(float(value_of(parts["weighted"])))
                _check_finite_loss(totals[-1], epoch, (i, j), "pretraining")
            objective.backward()
            _apply_step(model, params, cfg.learning_rate, 1.0 / len(group))
        if callback is not None:
            callback({"stage": "pretrain", "epoch": epoch,
                      "objective": _mean(totals), "base": _mean(bases),
                      "weighted": _mean(weighteds)})
    return model


def pseudo_labels(model, volume):
    """Hard argmax labels from the model's pignistic probabilities."""
    feats = voxel_features(volume)
    sing, comp = _belief_parts(model.forward(feats), model.n_classes)
    probs = _pignistic(sing, comp, model.n_classes)
    return np.argmax(probs, axis=1).astype(np.uint8)


def self_train(init, dataset, cfg, callback=None):
    """Teacher-student loop from a pretrained model.

    Both networks start as copies of ``init``. Each epoch the teacher
    labels every unlabeled sample once; each unlabeled sample is then
    mixed with a labeled partner, the student descends the combined
    objective, and the teacher follows by exponential moving average.
    Returns ``(student, teacher)``.
    """
    labeled = list(dataset.labeled_indices)
    unlabeled = list(dataset.unlabeled_indices)
    if not labeled or not unlabeled:
        raise ValidationError(
            "self-training needs both labeled and unlabeled samples")
    if init.n_classes != cfg.n_classes:
        raise ValidationError("model and config disagree on n_classes")
    student = init.copy()
    teacher = init.copy()
    rng = np.random.default_rng([cfg.seed, 1])
    zero_size = _zero_size(dataset.shape, cfg.zero_fraction)

    for epoch in range(1, cfg.selftrain_epochs + 1):
        schedule = cfg.schedule(epoch, cfg.selftrain_epochs)
        guesses = {j: pseudo_labels(teacher, dataset.volumes[j])
                   for j in unlabeled}
        totals, parts_log = [], {"labeled": [], "unlabeled": [],
                                 "weighted_labeled": [], "weighted_unlabeled": []}
        for start in range(0, len(unlabeled), cfg.pairs_per_step):
            group = unlabeled[start:start + cfg.pairs_per_step]
            params = _tape_params(student.weights)
            objective = None
            for pos, j in enumerate(group, start=start):
                i = labeled[pos % len(labeled)]
                batch = _make_pair_batch(
                    dataset.volumes[i], dataset.labels[i],
                    dataset.volumes[j], guesses[j], zero_size, rng)
                loss, parts = _selftrain_objective(
                    params, batch, cfg.n_classes, schedule,
                    cfg.weighted_scale_labeled, cfg.weighted_scale_unlabeled)
                objective = loss if objective is None else objective + loss
                totals.append(float(value_of(loss)))
                for key in parts_log:
                    parts_log[key].append(float(value_of(parts[key])))
                _check_finite_loss(totals[-1], epoch, (i, j), "self-training")
            objective.backward()
            _apply_step(student, params, cfg.learning_rate, 1.0 / len(group))
            teacher.set_parameters(ema_update(
                teacher.parameters(), student.parameters(), cfg.ema_decay))
        if callback is not None:
            record = {"stage": "selftrain", "epoch": epoch,
                      "objective": _mean(totals)}
            record.update({k: _mean(v) for k, v in parts_log.items()})
            callback(record)
    return student, teacher


def ema_update(teacher_params, student_params, decay):
    """Elementwise ``decay * teacher + (1 - decay) * student``."""
    if not 0.0 <= decay <= 1.0:
        raise ValidationError("decay must lie in [0, 1]")
    return [decay * np.asarray(t, dtype=np.float64)
            + (1.0 - decay) * np.asarray(s, dtype=np.float64)
            for t, s in zip(teacher_params, student_params)]


# -- inference and metrics ---------------------------------------------


def predict_beliefs(model, volume):
    """Belief volume (W, H, L, N+1) float32 for one intensity volume."""
    volume = check_volume(volume, name="volume", ndim=3, dtype=np.float32)
    sing, comp = _belief_parts(model.forward(voxel_features(volume)),
                               model.n_classes)
    flat = np.concatenate([sing, comp], axis=1)
    return flat.reshape(volume.shape + (model.n_classes + 1,)).astype(np.float32)


def predict_labels(model, volume):
    """Argmax pignistic labels (W, H, L) uint8 for one volume."""
    volume = check_volume(volume, name="volume", ndim=3, dtype=np.float32)
    return pseudo_labels(model, volume).reshape(volume.shape)


def _overlap_scores(pred, truth, n_classes):
    dices, jaccards = [], []
    for c in range(1, n_classes):
        p = pred == c
        g = truth == c
        inter = int(np.logical_and(p, g).sum())
        total = int(p.sum()) + int(g.sum())
        union = total - inter
        dices.append(1.0 if total == 0 else 2.0 * inter / total)
        jaccards.append(1.0 if union == 0 else inter / union)
    return float(np.mean(dices)), float(np.mean(jaccards))


def evaluate(model, dataset):
    """Mean overlap of argmax predictions with the dataset labels.

    Scores average over foreground classes, then over samples; a class
    empty in both prediction and truth counts as a perfect 1.0.
    """
    if len(dataset) == 0:
        raise ValidationError("cannot evaluate on an empty dataset")
    dices, jaccards = [], []
    for i in range(len(dataset)):
        pred = predict_labels(model, dataset.volumes[i])
        d, j = _overlap_scores(pred, dataset.labels[i], model.n_classes)
        dices.append(d)
        jaccards.append(j)
    return {"dice": float(np.mean(dices)), "jaccard": float(np.mean(jaccards)),
            "count": len(dataset)}


# -- gradient verification ---------------------------------------------

_GRAD_LOSSES = ("dice", "ce", "weighted", "pretrain", "selftrain")


def grad_check(model, batch, loss_name="pretrain", cfg=None, fd_step=1e-3):
    """Max deviation of tape gradients from central finite differences.

    ``batch`` is a small SyntheticDataset; the check runs on its first
    labeled pair (plus the first unlabeled sample for the self-training
    objective, labeled by the model itself). The deviation for each
    parameter is ``|tape - fd| / max(|tape| + |fd|, 1)``, so components
    below unit magnitude are compared absolutely; central differences at
    step 1e-3 carry noise far above float precision, which a pure ratio
    would amplify on near-zero gradients.
    """
    if loss_name not in _GRAD_LOSSES:
        raise ValidationError(f"loss_name must be one of {_GRAD_LOSSES}")
    cfg = cfg or TrainConfig(n_classes=model.n_classes)
    if len(batch.labeled_indices) < 2:
        raise ValidationError("grad_check needs 2 labeled samples")
    i, j = batch.labeled_indices[:2]
    rng = np.random.default_rng([cfg.seed, 2])
    zero_size = _zero_size(batch.shape, cfg.zero_fraction)
    schedule = cfg.schedule(1, max(1, cfg.selftrain_epochs))

    if loss_name == "selftrain":
        if not batch.unlabeled_indices:
            raise ValidationError("selftrain check needs an unlabeled sample")
        u = batch.unlabeled_indices[0]
        pair = _make_pair_batch(batch.volumes[i], batch.labels[i],
                                batch.volumes[u],
                                pseudo_labels(model, batch.volumes[u]),
                                zero_size, rng)
    else:
        pair = _make_pair_batch(batch.volumes[i], batch.labels[i],
                                batch.volumes[j], batch.labels[j],
                                zero_size, rng)

    # weights frozen once so every evaluation sees identical constants
    frozen = _fused_weights(
        _pair_predictions(model.weights, pair, cfg.n_classes), schedule)

    def objective(params):
        if loss_name == "dice":
            orig = _belief_parts(_forward(params, pair.feats_a), cfg.n_classes)
            return dice_loss(_pignistic(*orig, cfg.n_classes), pair.target_a,
                             cfg.n_classes)
        if loss_name == "ce":
            orig = _belief_parts(_forward(params, pair.feats_a), cfg.n_classes)
            return ce_loss(_pignistic(*orig, cfg.n_classes), pair.target_a,
                           cfg.n_classes)
        if loss_name == "weighted":
            preds = _pair_predictions(params, pair, cfg.n_classes)
            _, weighted = _sample_terms(preds["orig_a"], preds["fused_a"],
                                        pair.target_a, cfg.n_classes,
                                        frozen[0])
            return weighted
        if loss_name == "pretrain":
            return _pretrain_objective(
                params, pair, cfg.n_classes, schedule,
                cfg.weighted_scale_pretrain, weights=frozen)[0]
        return _selftrain_objective(
            params, pair, cfg.n_classes, schedule,
            cfg.weighted_scale_labeled, cfg.weighted_scale_unlabeled,
            weights=frozen)[0]

    tape_params = _tape_params(model.weights)
    objective(tape_params).backward()
    tape_grad = np.concatenate([p.grad.ravel() for p in tape_params])

    flat = model.flat()
    shapes = model.param_shapes

    def loss_at(vec):
        return float(value_of(objective(unflatten_params(vec, shapes))))

    worst = 0.0
    for k in range(flat.size):
        bumped = flat.copy()
        bumped[k] = flat[k] + fd_step
        hi = loss_at(bumped)
        bumped[k] = flat[k] - fd_step
        lo = loss_at(bumped)
        fd = (hi - lo) / (2.0 * fd_step)
        denom = max(abs(tape_grad[k]) + abs(fd), 1.0)
        worst = max(worst, abs(tape_grad[k] - fd) / denom)
    return worst
