"""Scikit-learn style front door for the teacher-student pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .evidence import belief_to_probability
from .exceptions import ValidationError
from .training import (
    SyntheticDataset,
    TrainConfig,
    _overlap_scores,
    evaluate,
    predict_beliefs,
    predict_labels,
    pretrain,
    self_train,
)
from .weighting import ASCENDING


class EvidentialSegmenter(BaseEstimator):
    """Semi-supervised volumetric segmenter over the fusion pipeline.

    ``fit`` takes a stack of volumes ``X`` with one label grid per
    volume in ``y``; samples whose labels are entirely -1 are treated as
    unlabeled, following the scikit-learn semi-supervised convention.
    With no unlabeled samples only the pretraining stage runs.
    """

    def __init__(self, n_classes=2, weighted_scale_pretrain=0.8,
                 weighted_scale_labeled=0.8, weighted_scale_unlabeled=0.4,
                 ema_decay=0.99, learning_rate=0.05, pretrain_epochs=15,
                 selftrain_epochs=30, epsilon=1.0, rank_order=ASCENDING,
                 zero_fraction=2.0 / 3.0, seed=0):
        self.n_classes = n_classes
        self.weighted_scale_pretrain = weighted_scale_pretrain
        self.weighted_scale_labeled = weighted_scale_labeled
        self.weighted_scale_unlabeled = weighted_scale_unlabeled
        self.ema_decay = ema_decay
        self.learning_rate = learning_rate
        self.pretrain_epochs = pretrain_epochs
        self.selftrain_epochs = selftrain_epochs
        self.epsilon = epsilon
        self.rank_order = rank_order
        self.zero_fraction = zero_fraction
        self.seed = seed

    def _config(self):
        return TrainConfig(
            n_classes=self.n_classes,
            weighted_scale_pretrain=self.weighted_scale_pretrain,
            weighted_scale_labeled=self.weighted_scale_labeled,
            weighted_scale_unlabeled=self.weighted_scale_unlabeled,
            ema_decay=self.ema_decay,
            learning_rate=self.learning_rate,
            pretrain_epochs=self.pretrain_epochs,
            selftrain_epochs=self.selftrain_epochs,
            epsilon=self.epsilon,
            rank_order=self.rank_order,
            zero_fraction=self.zero_fraction,
            seed=self.seed,
        )

    @staticmethod
    def _dataset_from(X, y, n_classes):
        X = np.asarray(X, dtype=np.float32)
        y = np.asarray(y)
        if X.ndim != 4:
            raise ValidationError(
                f"X must be (samples, W, H, L), got shape {X.shape}")
        if y.shape != X.shape:
            raise ValidationError(
                f"y shape {y.shape} does not match X shape {X.shape}")
        if not np.issubdtype(y.dtype, np.integer):
            raise ValidationError("y must hold integer labels")
        labeled, unlabeled = [], []
        for i in range(len(X)):
            flags = y[i] < 0
            if flags.all():
                unlabeled.append(i)
            elif flags.any():
                raise ValidationError(
                    f"sample {i} mixes labeled and unlabeled voxels")
            else:
                labeled.append(i)
        if len(labeled) < 2:
            raise ValidationError("fit needs at least 2 labeled samples")
        labels = np.where(y < 0, 0, y).astype(np.uint8)
        return SyntheticDataset(
            volumes=X, labels=labels,
            labeled_indices=tuple(labeled),
            unlabeled_indices=tuple(unlabeled),
            n_classes=n_classes,
        )

    def fit(self, X, y):
        cfg = self._config()
        dataset = self._dataset_from(X, y, cfg.n_classes)
        history = []
        pretrained = pretrain(dataset, cfg, callback=history.append)
        if dataset.unlabeled_indices and cfg.selftrain_epochs > 0:
            student, teacher = self_train(pretrained, dataset, cfg,
                                          callback=history.append)
        else:
            student, teacher = pretrained.copy(), pretrained.copy()
        self.pretrained_ = pretrained
        self.student_ = student
        self.teacher_ = teacher
        self.history_ = history
        self.n_classes_ = cfg.n_classes
        return self

    def _require_fitted(self):
        if not hasattr(self, "student_"):
            raise NotFittedError(
                "this EvidentialSegmenter instance is not fitted yet")

    @staticmethod
    def _volume_stack(X):
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 4:
            raise ValidationError(
                f"X must be (samples, W, H, L), got shape {X.shape}")
        return X

    def predict(self, X):
        """Argmax label grid per sample, shape (samples, W, H, L) uint8."""
        self._require_fitted()
        X = self._volume_stack(X)
        return np.stack([predict_labels(self.student_, v) for v in X])

    def predict_proba(self, X):
        """Pignistic class probabilities, shape (samples, W, H, L, N)."""
        self._require_fitted()
        X = self._volume_stack(X)
        out = []
        for v in X:
            beliefs = predict_beliefs(self.student_, v)
            out.append(belief_to_probability(beliefs))
        return np.stack(out)

    def predict_beliefs(self, X):
        """Raw belief volumes, shape (samples, W, H, L, N+1) float32."""
        self._require_fitted()
        X = self._volume_stack(X)
        return np.stack([predict_beliefs(self.student_, v) for v in X])

    def score(self, X, y):
        """Mean Dice of predictions against fully labeled volumes."""
        self._require_fitted()
        X = self._volume_stack(X)
        y = np.asarray(y)
        if y.shape != X.shape:
            raise ValidationError(
                f"y shape {y.shape} does not match X shape {X.shape}")
        if (np.asarray(y) < 0).any():
            raise ValidationError("score requires fully labeled volumes")
        dices = []
        for i in range(len(X)):
            pred = predict_labels(self.student_, X[i])
            d, _ = _overlap_scores(pred, y[i], self.n_classes_)
            dices.append(d)
        return float(np.mean(dices))

    def evaluate(self, dataset):
        """Overlap metrics of the fitted student on a SyntheticDataset."""
        self._require_fitted()
        return evaluate(self.student_, dataset)
