"""Input checks shared by the estimator and the CLI."""

from __future__ import annotations

import numpy as np


def check_images(X, name: str = "X", min_side: int = 3) -> np.ndarray:
    """Validate a stack of ``(n, H, W, 3)`` images with finite values in ``[0, 1]``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    if X.ndim != 4 or X.shape[-1] != 3:
        raise ValueError(f"{name} must have shape (n, H, W, 3), got {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if min(X.shape[1:3]) < min_side:
        raise ValueError(f"{name} images must be at least {min_side}x{min_side}")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    if X.min() < 0 or X.max() > 1:
        raise ValueError(f"{name} values must lie in [0, 1]")
    return X


def check_targets(y, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split ``(n, 2, H, W, 3)`` targets into albedo and shading stacks."""
    y = np.asarray(y, dtype=np.float64)
    expected = (X.shape[0], 2) + X.shape[1:]
    if y.shape != expected:
        raise ValueError(f"y must have shape {expected}, got {y.shape}")
    if not np.all(np.isfinite(y)) or y.min() < 0:
        raise ValueError("y must be finite and non-negative")
    return y[:, 0], y[:, 1]


def check_product(image, albedo, shading, tol: float = 1e-6) -> float:
    """Raise if ``image`` and ``albedo * shading`` differ by more than ``tol``."""
    err = float(np.max(np.abs(np.asarray(image) - np.asarray(albedo) * np.asarray(shading))))
    if not err <= tol:
        raise ValueError(f"product invariant violated: max |I - A*S| = {err:.3g} > {tol:g}")
    return err
