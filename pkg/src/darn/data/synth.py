"""Synthetic "Mondrian world" scenes with dense albedo/shading ground truth.

Albedo is piecewise constant (axis-aligned rectangles over a background);
shading is a smooth blend of radial and linear lobes kept inside
``[0.2, 1.0]``. Frames of one scene share the rectangle layout and lights,
with the viewport and lights drifting slightly from frame to frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sample import Sample, recompose

SHADING_MIN = 0.2
SHADING_MAX = 1.0
DRIFT_MARGIN = 8


@dataclass(frozen=True)
class SynthConfig:
    n_rects: int = 8
    shading_mode: str = "gray"  # gray | colored
    n_lobes: int = 3
    max_shading_grad: float = 0.08  # cap on |forward difference| of shading

    def __post_init__(self):
        if self.shading_mode not in ("gray", "colored"):
            raise ValueError("shading_mode must be 'gray' or 'colored'")
        if self.n_rects < 0 or self.n_lobes < 1:
            raise ValueError("n_rects must be >= 0 and n_lobes >= 1")


def _albedo(rng, h, w, cfg: SynthConfig) -> np.ndarray:
    ch, cw = h + 2 * DRIFT_MARGIN, w + 2 * DRIFT_MARGIN
    canvas = np.empty((ch, cw, 3))
    canvas[:] = rng.uniform(0.1, 0.9, size=3)
    for _ in range(cfg.n_rects):
        rh = int(rng.integers(max(2, ch // 8), max(3, ch // 2)))
        rw = int(rng.integers(max(2, cw // 8), max(3, cw // 2)))
        y0 = int(rng.integers(0, ch - rh + 1))
        x0 = int(rng.integers(0, cw - rw + 1))
        canvas[y0:y0 + rh, x0:x0 + rw] = rng.uniform(0.1, 0.9, size=3)
    return canvas


def _lobes(rng, cfg: SynthConfig):
    lobes = []
    for _ in range(cfg.n_lobes):
        kind = "radial" if rng.random() < 0.6 else "linear"
        lobes.append({
            "kind": kind,
            "center": rng.uniform(-0.2, 1.2, size=2),
            "sigma": rng.uniform(0.3, 0.8),
            "angle": rng.uniform(0, 2 * np.pi),
            "weight": rng.uniform(0.5, 1.0),
            "velocity": rng.uniform(-0.01, 0.01, size=2),
        })
    return lobes


def _shading(rng_tint, lobes, h, w, frame, cfg: SynthConfig) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    u, v = xx / max(w - 1, 1), yy / max(h - 1, 1)
    field = np.zeros((h, w))
    for lb in lobes:
        cx, cy = lb["center"] + frame * lb["velocity"]
        if lb["kind"] == "radial":
            field += lb["weight"] * np.exp(-((u - cx) ** 2 + (v - cy) ** 2) / (2 * lb["sigma"] ** 2))
        else:
            d = np.cos(lb["angle"]) * (u - cx) + np.sin(lb["angle"]) * (v - cy)
            field += lb["weight"] * (0.5 + 0.5 * np.tanh(d / lb["sigma"]))
    span = field.max() - field.min()
    norm = (field - field.min()) / span if span > 0 else np.zeros_like(field)

    if cfg.shading_mode == "colored":
        tint = rng_tint.uniform(0.7, 1.0, size=3)
    else:
        tint = np.ones(3)
    amp = SHADING_MAX - SHADING_MIN
    base = norm[..., None] * tint
    steep = max(np.abs(np.diff(base, axis=0)).max(initial=0.0), np.abs(np.diff(base, axis=1)).max(initial=0.0))
    if steep * amp > cfg.max_shading_grad:
        amp = cfg.max_shading_grad / steep
    return SHADING_MIN + amp * base


def synth_mondrian(seed: int, h: int, w: int, config: SynthConfig = SynthConfig(),
                   frame: int = 0, scene: str | None = None) -> Sample:
    """Render one frame of the scene identified by ``seed``.

    Deterministic in ``(seed, h, w, config, frame)``.
    """
    if h < 16 or w < 16:
        raise ValueError("synthetic images must be at least 16x16")
    rng = np.random.default_rng([seed, 0])
    canvas = _albedo(rng, h, w, config)
    lobes = _lobes(rng, config)
    direction = rng.choice([-1, 1], size=2)
    tint_rng = np.random.default_rng([seed, 1])

    shift = frame % (DRIFT_MARGIN + 1)
    oy = DRIFT_MARGIN + int(direction[0]) * shift // 2
    ox = DRIFT_MARGIN + int(direction[1]) * shift
    albedo = canvas[oy:oy + h, ox:ox + w].copy()
    shading = _shading(tint_rng, lobes, h, w, frame, config)
    scene = scene if scene is not None else f"scene_{seed:04d}"
    return Sample(f"{scene}/frame_{frame:04d}", scene, recompose(albedo, shading)[0], albedo, shading)


def synth_dataset(seed: int, count: int, size: int, config: SynthConfig = SynthConfig(),
                  frames_per_scene: int = 10) -> list[Sample]:
    """``count`` samples grouped into scenes of ``frames_per_scene`` frames."""
    if count < 1 or frames_per_scene < 1:
        raise ValueError("count and frames_per_scene must be positive")
    master = np.random.default_rng(seed)
    n_scenes = -(-count // frames_per_scene)
    scene_seeds = master.integers(0, 2 ** 31 - 1, size=n_scenes)
    samples = []
    for k in range(count):
        s, f = divmod(k, frames_per_scene)
        samples.append(synth_mondrian(int(scene_seeds[s]), size, size, config, frame=f, scene=f"scene_{s:03d}"))
    return samples
