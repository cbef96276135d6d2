from .augment import AugmentConfig, CropError, Transform, apply_transform, augment
from .dataset import (
    DatasetError,
    SplitSpec,
    batch_order,
    load_dataset,
    read_manifest,
    read_split,
    split_dataset,
    write_dataset,
    write_split,
)
from .pngio import ImageFormatError, load_image, quantize, save_image
from .sample import Sample, recompose
from .synth import SynthConfig, synth_dataset, synth_mondrian

__all__ = [
    "AugmentConfig", "CropError", "Transform", "apply_transform", "augment",
    "DatasetError", "SplitSpec", "batch_order", "load_dataset", "read_manifest", "read_split",
    "split_dataset", "write_dataset", "write_split",
    "ImageFormatError", "load_image", "quantize", "save_image",
    "Sample", "recompose", "SynthConfig", "synth_dataset", "synth_mondrian",
]
