"""Scikit-learn compatible classifier facade over the engine.

`SurvivalCnnClassifier` trains the configured network on in-memory image
arrays via fit/predict_proba, so the model composes with the usual sklearn
tooling (clone, grid search, pipelines operating on 4-d image batches).
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import ops
from .data import augment as _augment_image
from .nets import ModelConfig, ModelVariant, build_model, count_params, forward
from .tensor import Tensor
from .train import run_training

__all__ = ["SurvivalCnnClassifier"]


def _check_images(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 4:
        raise ValueError(f"X must be (n_samples, channels, height, width), got shape {X.shape}")
    if X.shape[2] != X.shape[3]:
        raise ValueError(f"images must be square, got {X.shape[2]}x{X.shape[3]}")
    if not np.isfinite(X).all():
        raise ValueError("X contains non-finite values")
    return X


def _check_labels(y, n: int) -> np.ndarray:
    y = np.asarray(y).reshape(-1)
    if y.shape[0] != n:
        raise ValueError(f"{y.shape[0]} labels for {n} samples")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("y must contain only 0 (survival) and 1 (death)")
    return y.astype(np.int64)


class SurvivalCnnClassifier(BaseEstimator, ClassifierMixin):
    """Binary survival classifier with the fit/predict estimator contract.

    Parameters mirror the experiment configuration; training runs the same
    loop as the CLI trainer.  `fit` expects X of shape (n, C, S, S) with C of
    1 or 2 and S compatible with the chosen architecture.
    """

    def __init__(
        self,
        variant: str = "aggres_cnn",
        use_fcn: bool = True,
        epochs: int = 25,
        batch_size: int = 8,
        lr: float = 0.0006,
        seed: int = 0,
        stem_channels: int = 16,
        stage_channels: tuple[int, ...] = (32, 64, 128, 256),
        blocks_per_stage: int = 2,
        cardinality: int = 32,
        fcn_down_channels: tuple[int, ...] = (32, 64, 128, 256),
        augment: bool = False,
        rebalance: bool = False,
    ):
        self.variant = variant
        self.use_fcn = use_fcn
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.seed = seed
        self.stem_channels = stem_channels
        self.stage_channels = stage_channels
        self.blocks_per_stage = blocks_per_stage
        self.cardinality = cardinality
        self.fcn_down_channels = fcn_down_channels
        self.augment = augment
        self.rebalance = rebalance

    def _model_config(self, channels: int, size: int) -> ModelConfig:
        return ModelConfig(
            variant=ModelVariant(self.variant),
            input_channels=channels,
            input_size=size,
            stem_channels=self.stem_channels,
            stage_channels=tuple(self.stage_channels),
            blocks_per_stage=self.blocks_per_stage,
            cardinality=self.cardinality,
            use_fcn=self.use_fcn,
            fcn_down_channels=tuple(self.fcn_down_channels),
        )

    def fit(self, X, y):
        X = _check_images(X)
        y = _check_labels(y, X.shape[0])
        if set(np.unique(y)) != {0, 1}:
            raise ValueError("fit requires both classes to be present")
        cfg = self._model_config(X.shape[1], X.shape[2])
        self.model_ = build_model(cfg, rng=np.random.default_rng(self.seed))

        def batches(epoch: int):
            rng = np.random.default_rng([self.seed, 1 + epoch])
            idx = np.arange(len(y))
            if self.rebalance:
                pos = idx[y == 1]
                neg = idx[y == 0]
                if len(pos) != len(neg):
                    minority = pos if len(pos) < len(neg) else neg
                    extra = rng.integers(0, len(minority), size=abs(len(pos) - len(neg)))
                    idx = np.concatenate([idx, minority[extra]])
            order = rng.permutation(len(idx))
            for start in range(0, len(idx), self.batch_size):
                chunk = idx[order[start : start + self.batch_size]]
                batch = X[chunk]
                if self.augment:
                    batch = np.stack(
                        [
                            _augment_image(Tensor(img), int(rng.integers(0, 2**63))).data
                            for img in batch
                        ]
                    )
                yield Tensor(batch), y[chunk]

        self.history_ = run_training(self.model_, batches, self.epochs, self.lr)
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = int(np.prod(X.shape[1:]))
        return self

    def predict_proba(self, X) -> np.ndarray:
        self._require_fitted()
        X = _check_images(X)
        out = []
        for start in range(0, X.shape[0], self.batch_size):
            probs = forward(self.model_, Tensor(X[start : start + self.batch_size]))
            out.append(probs.data)
        return np.concatenate(out, axis=0).astype(np.float64)

    def predict(self, X) -> np.ndarray:
        probs = self.predict_proba(X)
        return self.classes_[probs.argmax(axis=1)]

    def param_count(self) -> int:
        self._require_fitted()
        return count_params(self.model_).total

    def _require_fitted(self) -> None:
        if not hasattr(self, "model_"):
            raise RuntimeError("estimator is not fitted; call fit first")
