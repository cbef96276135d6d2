from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Sample:
    """One frame with its dense ground truth; ``image == albedo * shading``."""

    id: str
    scene: str
    image: np.ndarray
    albedo: np.ndarray
    shading: np.ndarray

    def product_error(self) -> float:
        return float(np.max(np.abs(self.image - self.albedo * self.shading)))


def recompose(albedo, shading, value_max: float = 1.0) -> tuple[np.ndarray, int]:
    """``albedo * shading`` clipped to ``[0, value_max]``; returns the clip count."""
    albedo = np.asarray(albedo, dtype=np.float64)
    shading = np.asarray(shading, dtype=np.float64)
    if albedo.shape != shading.shape:
        raise ValueError(f"shape mismatch: {albedo.shape} vs {shading.shape}")
    if np.any(albedo < 0) or np.any(shading < 0):
        raise ValueError("albedo and shading must be non-negative")
    prod = albedo * shading
    clipped = int(np.count_nonzero(prod > value_max))
    return np.minimum(prod, value_max), clipped
