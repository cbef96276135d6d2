"""Geometric augmentation: scale, rotate, mirror, crop (in that order).

The transform is defined on a canvas that bounds the scaled and rotated
source. Each canvas pixel is mapped back into the source; a crop is valid
when all four of its corners land inside the source support, which for a
convex region guarantees the whole crop does. Albedo and shading are
resampled bilinearly and the image is rebuilt as their product.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .sample import Sample

_TOL = 1e-9


class CropError(ValueError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    crop_size: int = 32
    scale_range: tuple = (0.8, 1.2)
    max_angle: float = 15.0  # degrees
    mirror_prob: float = 0.5

    def __post_init__(self):
        lo, hi = self.scale_range
        if not 0 < lo <= hi:
            raise ValueError("scale_range must satisfy 0 < lo <= hi")
        if self.crop_size < 1 or self.max_angle < 0 or not 0 <= self.mirror_prob <= 1:
            raise ValueError("invalid augmentation config")

    def min_source_size(self) -> int:
        """Smallest square source that fits a centred crop under every draw."""
        t = math.radians(self.max_angle)
        reach = (self.crop_size - 1) * (math.cos(t) + math.sin(t)) / self.scale_range[0]
        return int(math.ceil(reach - _TOL)) + 1


@dataclass(frozen=True)
class Transform:
    scale: float = 1.0
    angle: float = 0.0  # degrees
    mirror: bool = False
    offset: tuple | None = None  # (row, col) of the crop on the canvas; None = centred


def _canvas_shape(h, w, scale, angle) -> tuple[int, int]:
    c, s = abs(math.cos(math.radians(angle))), abs(math.sin(math.radians(angle)))
    wc = scale * ((w - 1) * c + (h - 1) * s)
    hc = scale * ((w - 1) * s + (h - 1) * c)
    return int(math.floor(hc + _TOL)) + 1, int(math.floor(wc + _TOL)) + 1


def source_coords(rows, cols, src_shape, tf: Transform, canvas_shape) -> tuple[np.ndarray, np.ndarray]:
    """Map canvas pixel coordinates back to (row, col) in the source."""
    h, w = src_shape
    hc, wc = canvas_shape
    x = np.asarray(cols, dtype=np.float64) - (wc - 1) / 2
    y = np.asarray(rows, dtype=np.float64) - (hc - 1) / 2
    if tf.mirror:
        x = -x
    t = math.radians(tf.angle)
    ct, st = math.cos(t), math.sin(t)
    xs = (ct * x + st * y) / tf.scale + (w - 1) / 2
    ys = (-st * x + ct * y) / tf.scale + (h - 1) / 2
    return ys, xs


def valid_offsets(src_shape, tf: Transform, crop: int) -> tuple[np.ndarray, tuple[int, int]]:
    """All integer crop offsets on the canvas whose crop lies in the source."""
    h, w = src_shape
    hc, wc = _canvas_shape(h, w, tf.scale, tf.angle)
    if crop > hc or crop > wc:
        return np.empty((0, 2), dtype=int), (hc, wc)
    oy, ox = np.meshgrid(np.arange(hc - crop + 1), np.arange(wc - crop + 1), indexing="ij")
    oy, ox = oy.ravel(), ox.ravel()
    ok = np.ones(oy.shape, dtype=bool)
    for dy in (0, crop - 1):
        for dx in (0, crop - 1):
            ys, xs = source_coords(oy + dy, ox + dx, src_shape, tf, (hc, wc))
            ok &= (ys >= -_TOL) & (ys <= h - 1 + _TOL) & (xs >= -_TOL) & (xs <= w - 1 + _TOL)
    return np.stack([oy[ok], ox[ok]], axis=1), (hc, wc)


def _resample(img, ys, xs):
    h, w = img.shape[:2]
    ys = np.clip(ys, 0, h - 1)
    xs = np.clip(xs, 0, w - 1)
    return np.stack([map_coordinates(img[..., k], [ys, xs], order=1, mode="nearest")
                     for k in range(img.shape[2])], axis=-1)


def apply_transform(sample: Sample, tf: Transform, crop: int) -> Sample:
    h, w = sample.albedo.shape[:2]
    offsets, canvas = valid_offsets((h, w), tf, crop)
    if tf.offset is None:
        target = np.array([(canvas[0] - crop) // 2, (canvas[1] - crop) // 2])
        if not len(offsets) or not np.any(np.all(offsets == target, axis=1)):
            raise CropError(_fit_message(crop, h, w, tf))
        oy, ox = map(int, target)
    else:
        oy, ox = tf.offset
        if not len(offsets) or not np.any(np.all(offsets == (oy, ox), axis=1)):
            raise CropError(f"crop at {tf.offset} leaves the valid region; " + _fit_message(crop, h, w, tf))
    rr, cc = np.mgrid[oy:oy + crop, ox:ox + crop]
    ys, xs = source_coords(rr, cc, (h, w), tf, canvas)
    albedo = _resample(sample.albedo, ys, xs)
    shading = _resample(sample.shading, ys, xs)
    return Sample(sample.id, sample.scene, albedo * shading, albedo, shading)


def _fit_message(crop, h, w, tf: Transform) -> str:
    t = math.radians(abs(tf.angle))
    need = int(math.ceil((crop - 1) * (math.cos(t) + math.sin(t)) / tf.scale - _TOL)) + 1
    return f"crop {crop} does not fit a {h}x{w} source at scale {tf.scale:.3f}, angle {tf.angle:.2f}; need at least {need}x{need}"


def draw_transform(rng: np.random.Generator, config: AugmentConfig) -> Transform:
    scale = float(rng.uniform(*config.scale_range))
    angle = float(rng.uniform(-config.max_angle, config.max_angle))
    mirror = bool(rng.random() < config.mirror_prob)
    return Transform(scale, angle, mirror)


def augment(sample: Sample, seed, config: AugmentConfig = AugmentConfig()) -> Sample:
    """Randomly transform ``sample``; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    tf = draw_transform(rng, config)
    h, w = sample.albedo.shape[:2]
    offsets, _ = valid_offsets((h, w), tf, config.crop_size)
    if not len(offsets):
        raise CropError(_fit_message(config.crop_size, h, w, tf)
                        + f" (config worst case {config.min_source_size()})")
    oy, ox = offsets[rng.integers(len(offsets))]
    return apply_transform(sample, Transform(tf.scale, tf.angle, tf.mirror, (int(oy), int(ox))), config.crop_size)
