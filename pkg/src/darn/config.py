"""Run configuration: plain-text ``key = value`` files plus overrides.

Grammar: one ``key = value`` per line, ``#`` starts a comment, keys are
dotted (``train.lambda``). Resolution order, highest first: command-line
flag, config file, the ``DARN_SEED`` environment variable (seed only),
built-in default. Unknown keys are rejected.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .data.dataset import SplitSpec
from .data.synth import SynthConfig
from .training import TrainConfig

SEED_ENV = "DARN_SEED"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Option:
    type: type
    default: Any
    doc: str
    check: Optional[Callable[[Any], bool]] = None
    rule: str = ""


def _pos(v):
    return v > 0


def _nonneg(v):
    return v >= 0


SCHEMA: dict[str, Option] = {
    "seed": Option(int, 0, "master seed"),
    "train.iterations": Option(int, 2000, "generator iterations", _pos, "> 0"),
    "train.batch_size": Option(int, 5, "samples per batch", _pos, "> 0"),
    "train.warmup": Option(int, 400, "generator-only iterations before the adversarial term", _nonneg, ">= 0"),
    "train.disc_per_gen": Option(int, 3, "discriminator updates per generator update", _pos, "> 0"),
    "train.lambda": Option(float, 1e-4, "adversarial weight", _nonneg, ">= 0"),
    "train.lr_start": Option(float, 1e-4, "initial learning rate", _pos, "> 0"),
    "train.lr_end": Option(float, 1e-6, "final learning rate", _pos, "> 0"),
    "train.crop_size": Option(int, 20, "training crop and discriminator patch side", _pos, "> 0"),
    "train.checkpoint_every": Option(float, 0.1, "checkpoint cadence as a fraction of iterations",
                                     lambda v: 0 < v <= 1, "in (0, 1]"),
    "model.width": Option(int, 16, "generator feature channels", _pos, "> 0"),
    "model.blocks": Option(int, 4, "residual blocks", _pos, "> 0"),
    "model.target": Option(str, "shading", "regressed component", lambda v: v in ("shading", "albedo"),
                           "shading|albedo"),
    "data.count": Option(int, 250, "synthetic samples", _pos, "> 0"),
    "data.size": Option(int, 32, "synthetic image side", lambda v: v >= 16, ">= 16"),
    "data.frames_per_scene": Option(int, 10, "synthetic frames per scene", _pos, "> 0"),
    "data.n_rects": Option(int, 8, "rectangles per synthetic scene", _nonneg, ">= 0"),
    "data.n_lobes": Option(int, 3, "shading lobes per synthetic scene", _pos, "> 0"),
    "data.shading_mode": Option(str, "gray", "synthetic shading colour", lambda v: v in ("gray", "colored"),
                                "gray|colored"),
    "data.split_mode": Option(str, "scene", "split mode", lambda v: v in ("scene", "image"), "scene|image"),
    "data.split_seed": Option(int, 0, "split seed"),
    "data.fraction": Option(float, 0.8, "fraction of scenes (or images) used for training",
                            lambda v: 0 < v < 1, "in (0, 1)"),
    "eval.folds": Option(int, 1, "1, or 2 for reciprocal two-fold averaging", lambda v: v in (1, 2), "1|2"),
}


def _convert(key: str, raw: str, where: str):
    opt = SCHEMA[key]
    try:
        if opt.type is int:
            value = int(raw)
        elif opt.type is float:
            value = float(raw)
        else:
            value = raw.strip().strip('"')
    except ValueError:
        raise ConfigError(f"{where}: {key}: expected {opt.type.__name__}, got {raw!r}") from None
    if opt.check is not None and not opt.check(value):
        raise ConfigError(f"{where}: {key}: value {value!r} violates {opt.rule}")
    return value


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {k: o.default for k, o in SCHEMA.items()})
    sources: dict = field(default_factory=lambda: {k: "default" for k in SCHEMA})

    def __getitem__(self, key):
        return self.values[key]

    def train_config(self) -> TrainConfig:
        v = self.values
        try:
            return TrainConfig(
                iterations=v["train.iterations"], batch_size=v["train.batch_size"],
                warmup_iters=v["train.warmup"], disc_per_gen=v["train.disc_per_gen"],
                lam=v["train.lambda"], lr_start=v["train.lr_start"], lr_end=v["train.lr_end"],
                seed=v["seed"], crop_size=v["train.crop_size"], width=v["model.width"],
                n_blocks=v["model.blocks"], target=v["model.target"],
                checkpoint_every=v["train.checkpoint_every"],
            )
        except ValueError as exc:
            raise ConfigError(f"invalid training configuration: {exc}") from None

    def synth_config(self) -> SynthConfig:
        v = self.values
        return SynthConfig(n_rects=v["data.n_rects"], shading_mode=v["data.shading_mode"], n_lobes=v["data.n_lobes"])

    def split_spec(self) -> SplitSpec:
        v = self.values
        return SplitSpec(v["data.split_mode"], v["data.split_seed"], v["data.fraction"])

    def dump(self) -> str:
        lines = []
        section = None
        for key in SCHEMA:
            head = key.split(".")[0] if "." in key else ""
            if head != section:
                if lines:
                    lines.append("")
                section = head
            lines.append(f"# {SCHEMA[key].doc} ({self.sources[key]})")
            lines.append(f"{key} = {self.values[key]!r}" if SCHEMA[key].type is float
                         else f"{key} = {self.values[key]}")
        return "\n".join(lines) + "\n"

    def write(self, path):
        Path(path).write_text(self.dump())


def parse_lines(text: str, origin: str = "<config>") -> dict[str, tuple[str, int]]:
    """Raw ``{key: (value, line)}`` from config text; rejects unknown keys."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{origin}:{lineno}: expected 'key = value', got {body!r}")
        key, raw = (s.strip() for s in body.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{origin}:{lineno}: unknown key {key!r}")
        if not raw:
            raise ConfigError(f"{origin}:{lineno}: {key}: missing value")
        out[key] = (raw, lineno)
    return out


def parse_config(path=None, overrides: Optional[dict] = None, env: Optional[dict] = None) -> RunConfig:
    """Resolve a :class:`RunConfig` from defaults, env, an optional file and overrides."""
    env = os.environ if env is None else env
    cfg = RunConfig()
    if env.get(SEED_ENV):
        cfg.values["seed"] = _convert("seed", env[SEED_ENV], f"environment {SEED_ENV}")
        cfg.sources["seed"] = "env"
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file {p} does not exist")
        for key, (raw, lineno) in parse_lines(p.read_text(), str(p)).items():
            cfg.values[key] = _convert(key, raw, f"{p}:{lineno}")
            cfg.sources[key] = f"file line {lineno}"
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        if key not in SCHEMA:
            raise ConfigError(f"override: unknown key {key!r}")
        cfg.values[key] = _convert(key, str(raw), "override")
        cfg.sources[key] = "flag"
    if cfg.values["train.lr_end"] > cfg.values["train.lr_start"]:
        raise ConfigError("train.lr_end: must not exceed train.lr_start")
    if cfg.values["train.warmup"] > cfg.values["train.iterations"]:
        raise ConfigError("train.warmup: must not exceed train.iterations")
    return cfg
