"""Adversarial training: ADAM, log-linear LR decay, warmup and D/G alternation.

Time is counted in scheduler ticks. Each tick consumes one batch and performs
exactly one kind of update. An *iteration* is one generator update, so a run
of ``iterations`` with ``warmup_iters`` warmup takes
``warmup_iters + (iterations - warmup_iters) * (disc_per_gen + 1)`` ticks.
"""

from __future__ import annotations

import csv
import dataclasses
import enum
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import losses
from .checkpoint import ModelBundle, load_checkpoint, save_checkpoint
from .data.augment import AugmentConfig, Transform, apply_transform, augment
from .data.dataset import batch_order
from .metrics import MetricsReport, average_reports, evaluate_pairs
from .model import Discriminator, DiscriminatorConfig, Generator, GeneratorConfig


class NumericalError(FloatingPointError):
    pass


class Phase(enum.Enum):
    GENERATOR_ONLY = "generator_only"
    DISCRIMINATOR = "discriminator_update"
    GENERATOR = "generator_update"


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 2000
    batch_size: int = 5
    warmup_iters: int = 400
    disc_per_gen: int = 3
    lam: float = losses.DEFAULT_LAMBDA
    lr_start: float = 1e-4
    lr_end: float = 1e-6
    seed: int = 0
    crop_size: int = 20
    width: int = 16
    n_blocks: int = 4
    target: str = "shading"
    checkpoint_every: float = 0.1  # fraction of iterations
    augment: bool = True  # False: deterministic centred crops only

    def __post_init__(self):
        for name in ("iterations", "batch_size", "disc_per_gen", "crop_size", "width", "n_blocks"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if not 0 <= self.warmup_iters <= self.iterations:
            raise ValueError("warmup_iters must lie in [0, iterations]")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not 0 < self.lr_end <= self.lr_start:
            raise ValueError("need 0 < lr_end <= lr_start")
        if self.target not in ("shading", "albedo"):
            raise ValueError("target must be 'shading' or 'albedo'")

    @property
    def total_ticks(self) -> int:
        return self.warmup_iters + (self.iterations - self.warmup_iters) * (self.disc_per_gen + 1)

    def generator_config(self) -> GeneratorConfig:
        return GeneratorConfig(width=self.width, n_blocks=self.n_blocks, target=self.target)

    def discriminator_config(self) -> DiscriminatorConfig:
        return DiscriminatorConfig(patch_size=self.crop_size)


# -- optimiser -----------------------------------------------------------------

@dataclass
class OptState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, state: OptState, lr: float):
    """One bias-corrected ADAM update of ``params`` (name -> Tensor) in place."""
    for name, g in grads.items():
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].data.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / (1 - b1 ** t)
        v_hat = v / (1 - b2 ** t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.data.dtype)


def lr_schedule(iteration: int, config: TrainConfig) -> float:
    """Geometric interpolation from ``lr_start`` (iteration 0) to ``lr_end`` (last)."""
    if config.iterations <= 1:
        return config.lr_start
    frac = min(max(iteration, 0), config.iterations - 1) / (config.iterations - 1)
    return float(config.lr_start * (config.lr_end / config.lr_start) ** frac)


def gan_schedule(tick: int, config: TrainConfig) -> Phase:
    if tick < config.warmup_iters:
        return Phase.GENERATOR_ONLY
    k = (tick - config.warmup_iters) % (config.disc_per_gen + 1)
    return Phase.DISCRIMINATOR if k < config.disc_per_gen else Phase.GENERATOR


# -- training loop -------------------------------------------------------------

LOG_COLUMNS = ("tick", "iteration", "phase", "data", "grad", "adv", "total", "disc_a", "disc_s", "lr")


@dataclass
class TrainResult:
    bundle: ModelBundle
    log: list
    checkpoint: Optional[Path] = None
    checkpoints: list = field(default_factory=list)

    def log_csv(self) -> str:
        return format_log(self.log)


def format_log(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(LOG_COLUMNS)
    for row in rows:
        w.writerow(["" if row.get(c) is None else (repr(row[c]) if isinstance(row[c], float) else row[c])
                    for c in LOG_COLUMNS])
    return buf.getvalue()


def _seed_int(seed: int, tag: int) -> int:
    return int(np.random.default_rng([seed, tag]).integers(2 ** 31 - 1))


def _nchw(arrs, dtype) -> np.ndarray:
    return np.stack(arrs).transpose(0, 3, 1, 2).astype(dtype)


class _BatchStream:
    """Augmented batches in an order fixed by ``(seed, epoch)``."""

    def __init__(self, samples, config: TrainConfig, dtype):
        self.samples = list(samples)
        self.config = config
        self.aug = AugmentConfig(crop_size=config.crop_size)
        self.dtype = dtype
        self.epoch = 0
        self.queue: list = []

    def next(self, tick: int):
        if not self.queue:
            self.queue = batch_order(len(self.samples), self.config.batch_size, self.config.seed, self.epoch)
            self.epoch += 1
        idx = self.queue.pop(0)
        if self.config.augment:
            aug = [augment(self.samples[i], [self.config.seed, tick, k], self.aug) for k, i in enumerate(idx)]
        else:
            aug = [apply_transform(self.samples[i], Transform(), self.config.crop_size) for i in idx]
        return (_nchw([s.image for s in aug], self.dtype),
                _nchw([s.albedo for s in aug], self.dtype),
                _nchw([s.shading for s in aug], self.dtype))


def _grads(params: dict) -> dict:
    return {n: p.grad for n, p in params.items()}


def _zero(params: dict):
    for p in params.values():
        p.zero_grad()


def _check_finite(value: float, what: str, tick: int):
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what} at tick {tick}")


def build_models(config: TrainConfig, dtype=np.float32) -> ModelBundle:
    gen = Generator(config.generator_config(), seed=_seed_int(config.seed, 1), dtype=dtype)
    dcfg = config.discriminator_config()
    da = Discriminator(dcfg, seed=_seed_int(config.seed, 2), dtype=dtype)
    ds = Discriminator(dcfg, seed=_seed_int(config.seed, 3), dtype=dtype)
    return ModelBundle(gen, da, ds, {"train": dataclasses.asdict(config)})


def train(config: TrainConfig, samples: Sequence, out_dir=None, dtype=np.float32,
          progress: Optional[Callable[[str], None]] = None,
          on_tick: Optional[Callable[[int, Phase, ModelBundle], None]] = None) -> TrainResult:
    """Run the full schedule on ``samples``; deterministic given ``config.seed``.

    With ``out_dir`` set, periodic checkpoints, ``model.darn`` and
    ``train_log.csv`` are written there. ``on_tick(tick, phase, bundle)`` is
    called after every update. A non-finite loss raises
    :class:`NumericalError` and leaves earlier checkpoints untouched.
    """
    if not samples:
        raise ValueError("training set is empty")
    bundle = build_models(config, dtype)
    gen, da, ds = bundle.generator, bundle.disc_albedo, bundle.disc_shading
    gp, dap, dsp = gen.named_parameters(), da.named_parameters(), ds.named_parameters()
    opt_g, opt_a, opt_s = OptState(), OptState(), OptState()
    stream = _BatchStream(samples, config, dtype)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    every = max(1, int(round(config.iterations * config.checkpoint_every)))

    log, saved = [], []
    iteration = 0
    for tick in range(config.total_ticks):
        phase = gan_schedule(tick, config)
        lr = lr_schedule(iteration, config)
        image, a_gt, s_gt = stream.next(tick)
        row = {"tick": tick, "iteration": iteration, "phase": phase.value, "lr": lr}

        if phase is Phase.DISCRIMINATOR:
            a, s = gen.forward(image, training=True, frozen=True, update_stats=False)
            _zero(dap)
            _zero(dsp)
            la = losses.discriminator_loss(a_gt, a, da)
            ls = losses.discriminator_loss(s_gt, s, ds)
            _check_finite(la.item() + ls.item(), "discriminator loss", tick)
            la.backward()
            ls.backward()
            adam_step(dap, _grads(dap), opt_a, lr)
            adam_step(dsp, _grads(dsp), opt_s, lr)
            row.update(disc_a=la.item(), disc_s=ls.item())
        else:
            _zero(gp)
            a, s = gen.forward(image, training=True)
            d = losses.data_loss(a, s, a_gt, s_gt)
            g = losses.gradient_loss(a, s, a_gt, s_gt)
            lam = config.lam if phase is Phase.GENERATOR else 0.0
            adv = losses.adversarial_loss(a, s, da, ds) if lam else None
            br = losses.total_loss(d, g, adv, lam)
            _check_finite(br.total, "generator loss", tick)
            br.tensor.backward()
            adam_step(gp, _grads(gp), opt_g, lr)
            row.update(data=br.data, grad=br.grad, adv=br.adv if adv is not None else None, total=br.total)
            iteration += 1
            if progress is not None and iteration % 100 == 0:
                progress(f"iter {iteration}/{config.iterations} tick {tick + 1}/{config.total_ticks} "
                         f"loss {br.total:.6f} lr {lr:.3e}")
            if out is not None and iteration % every == 0 and iteration < config.iterations:
                path = out / f"checkpoint_{iteration:05d}.darn"
                save_checkpoint(path, bundle)
                saved.append(path)
        log.append(row)
        if on_tick is not None:
            on_tick(tick, phase, bundle)

    result = TrainResult(bundle, log, checkpoints=saved)
    if out is not None:
        result.checkpoint = out / "model.darn"
        save_checkpoint(result.checkpoint, bundle)
        (out / "train_log.csv").write_text(format_log(log))
    return result


# -- evaluation ----------------------------------------------------------------

def _as_bundle(checkpoint) -> ModelBundle:
    return checkpoint if isinstance(checkpoint, ModelBundle) else load_checkpoint(checkpoint)


def evaluate(checkpoint, samples, expect: Optional[GeneratorConfig] = None) -> MetricsReport:
    """Eval-mode decomposition of every sample scored through the metric suite."""
    bundle = _as_bundle(checkpoint)
    gen = bundle.generator
    if expect is not None and gen.config != expect:
        raise ValueError(f"checkpoint architecture {gen.config} does not match {expect}")
    items = []
    for smp in samples:
        pair = gen.decompose(smp.image)
        items.append((smp.id, smp.albedo, pair.albedo, smp.shading, pair.shading))
    return evaluate_pairs(items)


def evaluate_two_fold(checkpoints, test_sets, expect: Optional[GeneratorConfig] = None) -> MetricsReport:
    """Average of two reports from models trained on reciprocal splits."""
    if len(checkpoints) != 2 or len(test_sets) != 2:
        raise ValueError("two-fold evaluation needs two checkpoints and two test sets")
    reports = [evaluate(c, t, expect) for c, t in zip(checkpoints, test_sets)]
    return average_reports(*reports)
