"""scikit-learn style wrapper around the training loop and generator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from .data.sample import Sample
from .metrics import si_mse
from .training import TrainConfig, train
from .validation import check_images, check_targets


class IntrinsicDecomposer(BaseEstimator, TransformerMixin):
    """Learn to split images into albedo and shading.

    ``fit`` takes images ``X`` of shape ``(n, H, W, 3)`` and targets ``y`` of
    shape ``(n, 2, H, W, 3)`` holding albedo then shading. ``transform``
    returns the same layout as ``y``. Training images are rebuilt as
    ``albedo * shading`` so the ground truth is consistent.
    """

    def __init__(self, iterations=2000, batch_size=5, warmup_iters=400, disc_per_gen=3, lam=1e-4,
                 lr_start=1e-4, lr_end=1e-6, crop_size=20, width=16, n_blocks=4, target="shading",
                 seed=0):
        self.iterations = iterations
        self.batch_size = batch_size
        self.warmup_iters = warmup_iters
        self.disc_per_gen = disc_per_gen
        self.lam = lam
        self.lr_start = lr_start
        self.lr_end = lr_end
        self.crop_size = crop_size
        self.width = width
        self.n_blocks = n_blocks
        self.target = target
        self.seed = seed

    def _config(self) -> TrainConfig:
        return TrainConfig(**{k: v for k, v in self.get_params().items()})

    def fit(self, X, y):
        X = check_images(X)
        albedo, shading = check_targets(y, X)
        config = self._config()
        samples = [Sample(f"s{k:05d}", f"s{k:05d}", a * s, a, s) for k, (a, s) in enumerate(zip(albedo, shading))]
        self.result_ = train(config, samples)
        self.generator_ = self.result_.bundle.generator
        self.n_features_in_ = 3
        return self

    def _check_fitted(self):
        if not hasattr(self, "generator_"):
            raise NotFittedError("IntrinsicDecomposer is not fitted yet; call fit first")

    def transform(self, X):
        self._check_fitted()
        X = check_images(X)
        out = np.empty((X.shape[0], 2) + X.shape[1:])
        for k, img in enumerate(X):
            pair = self.generator_.decompose(img)
            out[k, 0] = pair.albedo
            out[k, 1] = pair.shading
        return out

    predict = transform

    def score(self, X, y):
        """Negative mean si-MSE averaged over albedo and shading."""
        pred = self.transform(X)
        albedo, shading = check_targets(y, check_images(X))
        errs = [(si_mse(a, pa) + si_mse(s, ps)) / 2 for a, s, pa, ps in zip(albedo, shading, pred[:, 0], pred[:, 1])]
        return -float(np.mean(errs))
