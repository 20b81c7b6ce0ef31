"""scikit-learn style wrappers around the enhancement model and the UDCP estimator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from . import metrics, physics
from .network import GupdmModel, ModelConfig, enhance_image
from .trainer import TrainConfig, train
from .validation import check_images, check_pairs


class GUPDMEnhancer(TransformerMixin, BaseEstimator):
    """Underwater image enhancer trained with the alternating schedule.

    ``fit(X, y)`` takes degraded images ``X`` and clean references ``y``
    (sequences of (H, W, 3) arrays in [0, 1]); ``transform`` / ``predict``
    return enhanced images of the same shape.
    """

    def __init__(
        self,
        epochs=200,
        batch_size=8,
        image_size=256,
        rho0=1e-4,
        rho1=1e-4,
        rho2=1e-6,
        t0=10,
        t1=11,
        m_variants=4,
        n_variants=4,
        channels=16,
        code_dim=64,
        n_kernels=4,
        lambda1=0.04,
        lambda2=0.02,
        strategy="d",
        random_state=0,
    ):
        self.epochs = epochs
        self.batch_size = batch_size
        self.image_size = image_size
        self.rho0 = rho0
        self.rho1 = rho1
        self.rho2 = rho2
        self.t0 = t0
        self.t1 = t1
        self.m_variants = m_variants
        self.n_variants = n_variants
        self.channels = channels
        self.code_dim = code_dim
        self.n_kernels = n_kernels
        self.lambda1 = lambda1
        self.lambda2 = lambda2
        self.strategy = strategy
        self.random_state = random_state

    def _configs(self):
        seed = 0 if self.random_state is None else int(self.random_state)
        model_cfg = ModelConfig(channels=self.channels, code_dim=self.code_dim, n_kernels=self.n_kernels, seed=seed)
        train_cfg = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size, image_size=self.image_size,
            rho0=self.rho0, rho1=self.rho1, rho2=self.rho2, t0=self.t0, t1=self.t1,
            m_variants=self.m_variants, n_variants=self.n_variants, seed=seed,
            lambda1=self.lambda1, lambda2=self.lambda2, strategy=self.strategy,
        )
        return model_cfg, train_cfg

    def fit(self, X, y):
        X, y = check_pairs(X, y)
        model_cfg, train_cfg = self._configs()
        result = train((X, y), GupdmModel(model_cfg), train_cfg)
        self.model_ = result.model
        self.history_ = result.history
        self.n_steps_ = len(result.history)
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_images(X)
        return [enhance_image(self.model_, img) for img in X]

    def predict(self, X):
        return self.transform(X)

    def score(self, X, y):
        """Mean PSNR (dB) of the enhanced images against ``y``."""
        X, y = check_pairs(X, y)
        return float(np.mean([metrics.psnr(e, r) for e, r in zip(self.transform(X), y)]))


class UDCPTransmission(TransformerMixin, BaseEstimator):
    """Green/blue dark-channel transmission estimate; stateless."""

    def __init__(self, patch=None, t_floor=physics.T_FLOOR, fraction=0.001):
        self.patch = patch
        self.t_floor = t_floor
        self.fraction = fraction

    def fit(self, X, y=None):
        check_images(X)
        self.n_features_in_ = 3
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        out = []
        for img in check_images(X):
            A = np.maximum(physics.estimate_atmosphere(img, self.fraction, self.patch), 1e-3)
            out.append(physics.estimate_transmission_udcp(img, A, self.patch, self.t_floor)[:, :, 0])
        return out
