"""Sintel-layout dataset trees, manifests, splits and batch ordering.

Layout::

    <root>/<scene>/clean/frame_0000.png
    <root>/<scene>/albedo/frame_0000.png
    <root>/<scene>/shading/frame_0000.png
    <root>/manifest.txt        id<TAB>scene<TAB>clean<TAB>albedo<TAB>shading
    <root>/split_train.txt     one sample id per line (optional)
    <root>/split_test.txt

The image is always rebuilt from albedo and shading at load time, so loaded
samples satisfy the product invariant exactly.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .pngio import load_image, save_image
from .sample import Sample, recompose

MANIFEST = "manifest.txt"
_FRAME = re.compile(r"frame_(\d{4})\.png$")


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class SplitSpec:
    mode: str = "scene"  # scene | image
    seed: int = 0
    fraction: float = 0.5

    def __post_init__(self):
        if self.mode not in ("scene", "image"):
            raise ValueError("split mode must be 'scene' or 'image'")
        if not 0 < self.fraction < 1:
            raise ValueError("fraction must lie in (0, 1)")


def split_dataset(samples, spec: SplitSpec) -> tuple[list[Sample], list[Sample]]:
    """Partition ``samples`` into (train, test); ``fraction`` goes to train."""
    samples = list(samples)
    rng = np.random.default_rng(spec.seed)
    if spec.mode == "scene":
        scenes = sorted({s.scene for s in samples})
        if len(scenes) < 2:
            raise DatasetError("scene split needs at least 2 scenes")
        order = [scenes[k] for k in rng.permutation(len(scenes))]
        n_train = min(max(1, int(round(spec.fraction * len(scenes)))), len(scenes) - 1)
        train_scenes = set(order[:n_train])
        train = [s for s in samples if s.scene in train_scenes]
        test = [s for s in samples if s.scene not in train_scenes]
        return train, test
    if len(samples) < 2:
        raise DatasetError("image split needs at least 2 samples")
    ids = sorted(s.id for s in samples)
    order = [ids[k] for k in rng.permutation(len(ids))]
    n_train = min(max(1, int(round(spec.fraction * len(ids)))), len(ids) - 1)
    train_ids = set(order[:n_train])
    return [s for s in samples if s.id in train_ids], [s for s in samples if s.id not in train_ids]


def _rel_paths(sample: Sample) -> tuple[str, str, str]:
    frame = sample.id.rsplit("/", 1)[-1]
    if not frame.endswith(".png"):
        frame += ".png"
    return tuple(f"{sample.scene}/{kind}/{frame}" for kind in ("clean", "albedo", "shading"))


def write_dataset(root, samples, bitdepth: int = 16):
    """Write samples as a Sintel-layout tree with a manifest."""
    root = Path(root)
    lines = ["# id\tscene\tclean\talbedo\tshading"]
    for smp in samples:
        paths = _rel_paths(smp)
        for rel, img in zip(paths, (smp.image, smp.albedo, smp.shading)):
            (root / rel).parent.mkdir(parents=True, exist_ok=True)
            save_image(root / rel, img, bitdepth)
        lines.append("\t".join((smp.id, smp.scene, *paths)))
    (root / MANIFEST).write_text("\n".join(lines) + "\n")


def write_split(root, name: str, samples):
    Path(root, f"split_{name}.txt").write_text("".join(f"{s.id}\n" for s in samples))


def read_split(root, name: str) -> list[str]:
    path = Path(root, f"split_{name}.txt")
    if not path.exists():
        raise DatasetError(f"missing split file {path}")
    return [ln.strip() for ln in path.read_text().splitlines() if ln.strip()]


def _scan(root: Path):
    """Manifest entries for a tree without a manifest file."""
    entries = []
    for scene_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        adir = scene_dir / "albedo"
        if not adir.is_dir():
            continue
        for f in sorted(os.listdir(adir)):
            if _FRAME.search(f):
                scene = scene_dir.name
                entries.append((f"{scene}/{f[:-4]}", scene, f"{scene}/clean/{f}",
                                f"{scene}/albedo/{f}", f"{scene}/shading/{f}"))
    return entries


def read_manifest(root) -> list[tuple[str, ...]]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} does not exist")
    path = root / MANIFEST
    if not path.exists():
        return _scan(root)
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise DatasetError(f"{path}:{lineno}: expected 5 tab-separated fields")
        entries.append(tuple(parts))
    return entries


def load_dataset(root, ids=None) -> list[Sample]:
    """Load samples (optionally only ``ids``), recomposing each image."""
    root = Path(root)
    entries = read_manifest(root)
    if ids is not None:
        wanted = set(ids)
        missing = wanted - {e[0] for e in entries}
        if missing:
            raise DatasetError(f"ids not in dataset: {sorted(missing)[:5]}")
        entries = [e for e in entries if e[0] in wanted]
    if not entries:
        raise DatasetError(f"no samples found under {root}")
    samples = []
    for sid, scene, _clean, apath, spath in entries:
        try:
            albedo = load_image(root / apath)
            shading = load_image(root / spath)
        except FileNotFoundError as exc:
            raise DatasetError(f"missing file for {sid}: {exc}") from None
        image, _ = recompose(albedo, shading)
        samples.append(Sample(sid, scene, image, albedo, shading))
    return samples


def batch_order(n: int, batch_size: int, seed: int, epoch: int) -> list[np.ndarray]:
    """Index batches for one epoch; a pure function of ``(seed, epoch)``.

    The last short batch is dropped unless it is the only one.
    """
    if n < 1 or batch_size < 1:
        raise ValueError("need at least one sample and a positive batch size")
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    if n < batch_size:
        return [perm]
    return [perm[k:k + batch_size] for k in range(0, n - batch_size + 1, batch_size)]
