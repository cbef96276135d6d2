"""8/16-bit RGB PNG reading and writing backed by pypng."""

from __future__ import annotations

import os

import numpy as np
import png


class ImageFormatError(ValueError):
    pass


def load_image(path) -> np.ndarray:
    """Read an RGB PNG into an ``H x W x 3`` float64 array in ``[0, 1]``."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    reader = png.Reader(filename=str(path))
    width, height, rows, info = reader.read()
    depth = info["bitdepth"]
    if depth not in (8, 16):
        raise ImageFormatError(f"{path}: unsupported bit depth {depth}")
    if info.get("greyscale") or info.get("alpha") or info.get("palette"):
        raise ImageFormatError(f"{path}: only plain RGB PNGs are supported")
    arr = np.array([np.asarray(r) for r in rows], dtype=np.float64).reshape(height, width, 3)
    return arr / (2 ** depth - 1)


def quantize(image: np.ndarray, bitdepth: int = 16) -> np.ndarray:
    """Map ``[0, 1]`` floats to integers, rounding half to even."""
    if bitdepth not in (8, 16):
        raise ImageFormatError(f"unsupported bit depth {bitdepth}")
    top = 2 ** bitdepth - 1
    q = np.rint(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * top)
    return q.astype(np.uint16 if bitdepth == 16 else np.uint8)


def save_image(path, image: np.ndarray, bitdepth: int = 16):
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ImageFormatError(f"expected H x W x 3 image, got shape {image.shape}")
    h, w, _ = image.shape
    q = quantize(image, bitdepth)
    writer = png.Writer(width=w, height=h, greyscale=False, bitdepth=bitdepth)
    with open(path, "wb") as fh:
        writer.write(fh, q.reshape(h, w * 3).tolist())
