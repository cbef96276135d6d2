"""Generator with a division head, and the patch discriminators."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import RunningStats, Tensor, ShapeError
from .engine import ops

EPS_DIV = 1e-3
# The projection starts near zero so the regressed component starts near
# softplus(0) everywhere instead of collapsing onto the division floor.
PROJ_GAIN = 0.1
TARGETS = ("shading", "albedo")


@dataclass(frozen=True)
class GeneratorConfig:
    width: int = 64
    n_blocks: int = 10
    target: str = "shading"

    def __post_init__(self):
        if self.width < 1 or self.n_blocks < 0:
            raise ValueError("width must be positive and n_blocks non-negative")
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}, got {self.target!r}")


@dataclass(frozen=True)
class DiscriminatorConfig:
    patch_size: int = 32
    channels: tuple = (16, 32, 64)
    hidden: int = 64

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.patch_size < 2 ** len(self.channels):
            raise ValueError("patch_size too small for the number of pooling stages")

    @property
    def flat_size(self) -> int:
        side = self.patch_size
        for _ in self.channels:
            side = (side + 1) // 2
        return side * side * self.channels[-1]


@dataclass
class DecompositionPair:
    """Albedo and shading images, ``H x W x 3``."""

    albedo: np.ndarray
    shading: np.ndarray

    def recompose(self) -> np.ndarray:
        return self.albedo * self.shading

    def max_product_error(self, image: np.ndarray) -> float:
        return float(np.max(np.abs(np.asarray(image) - self.recompose())))


def positivity_map(raw, eps: float = EPS_DIV) -> Tensor:
    """Strictly increasing map onto ``(eps, inf)``: ``softplus(raw) + eps``."""
    return ops.softplus_shifted(raw, eps)


def _he_normal(rng, shape, fan_in, dtype):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


@dataclass
class BlockParams:
    conv1: Tensor
    bn1_gamma: Tensor
    bn1_beta: Tensor
    conv2: Tensor
    bn2_gamma: Tensor
    bn2_beta: Tensor
    stats1: RunningStats = field(default_factory=RunningStats)
    stats2: RunningStats = field(default_factory=RunningStats)


def residual_block(x, p: BlockParams, training: bool = True, update_stats: bool = True) -> Tensor:
    """``relu(bn(conv(relu(bn(conv(x))))) + x)``; the skip joins before the last relu."""
    x = ops.as_tensor(x)
    if x.shape[1] != p.conv1.shape[1]:
        raise ShapeError(f"block expects {p.conv1.shape[1]} channels, got {x.shape[1]}")
    h = ops.conv2d(x, p.conv1)
    h = ops.relu(ops.batch_norm(h, p.bn1_gamma, p.bn1_beta, training, p.stats1, update_stats=update_stats))
    h = ops.conv2d(h, p.conv2)
    h = ops.batch_norm(h, p.bn2_gamma, p.bn2_beta, training, p.stats2, update_stats=update_stats)
    return ops.relu(ops.add(h, x))


def _frozen(t: Tensor, frozen: bool) -> Tensor:
    return Tensor(t.data) if frozen else t


class Generator:
    """Fully convolutional residual generator.

    The network regresses one component (``config.target``), maps it through
    :func:`positivity_map`, and obtains the other component by dividing the
    input by it, so ``image == albedo * shading`` holds by construction.
    """

    def __init__(self, config: GeneratorConfig = GeneratorConfig(), seed: int = 0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        f = config.width
        self.lift_w = Tensor(_he_normal(rng, (f, 3, 3, 3), 27, dtype), requires_grad=True, name="lift.w")
        self.lift_b = Tensor(np.zeros(f, dtype), requires_grad=True, name="lift.b")
        self.blocks: list[BlockParams] = []
        for k in range(config.n_blocks):
            self.blocks.append(
                BlockParams(
                    conv1=Tensor(_he_normal(rng, (f, f, 3, 3), 9 * f, dtype), requires_grad=True),
                    bn1_gamma=Tensor(np.ones(f, dtype), requires_grad=True),
                    bn1_beta=Tensor(np.zeros(f, dtype), requires_grad=True),
                    conv2=Tensor(_he_normal(rng, (f, f, 3, 3), 9 * f, dtype), requires_grad=True),
                    bn2_gamma=Tensor(np.ones(f, dtype), requires_grad=True),
                    bn2_beta=Tensor(np.zeros(f, dtype), requires_grad=True),
                )
            )
        self.proj_w = Tensor(PROJ_GAIN * _he_normal(rng, (3, f, 3, 3), 9 * f, dtype), requires_grad=True, name="proj.w")
        self.proj_b = Tensor(np.zeros(3, dtype), requires_grad=True, name="proj.b")

    # -- parameter access ----------------------------------------------------
    def named_parameters(self) -> dict[str, Tensor]:
        out = {"lift.w": self.lift_w, "lift.b": self.lift_b}
        for k, b in enumerate(self.blocks):
            for attr in ("conv1", "bn1_gamma", "bn1_beta", "conv2", "bn2_gamma", "bn2_beta"):
                out[f"block{k}.{attr}"] = getattr(b, attr)
        out["proj.w"] = self.proj_w
        out["proj.b"] = self.proj_b
        return out

    def set_parameter(self, name: str, tensor: Tensor):
        """Replace the parameter called ``name`` (as in :meth:`named_parameters`)."""
        if name not in self.named_parameters():
            raise KeyError(name)
        if name.startswith("block"):
            k, attr = name[len("block"):].split(".")
            setattr(self.blocks[int(k)], attr, tensor)
        else:
            setattr(self, name.replace(".", "_"), tensor)

    def named_buffers(self) -> dict[str, RunningStats]:
        out = {}
        for k, b in enumerate(self.blocks):
            out[f"block{k}.stats1"] = b.stats1
            out[f"block{k}.stats2"] = b.stats2
        return out

    def reset_running_stats(self):
        f = self.config.width
        for stats in self.named_buffers().values():
            stats.reset(f, np.float64)

    # -- forward -------------------------------------------------------------
    def forward(self, image, training: bool = True, frozen: bool = False, update_stats: bool = True):
        """Map a ``(B, 3, H, W)`` batch to ``(albedo, shading)`` tensors."""
        image = ops.as_tensor(image)
        if image.ndim != 4 or image.shape[1] != 3:
            raise ShapeError(f"expected (B, 3, H, W) input, got {image.shape}")
        if image.shape[2] < 3 or image.shape[3] < 3:
            raise ShapeError("input must be at least 3x3")
        if not np.all(np.isfinite(image.data)):
            raise ValueError("input contains non-finite values")

        h = ops.conv2d(image, _frozen(self.lift_w, frozen), _frozen(self.lift_b, frozen))
        h = ops.relu(h)
        for b in self.blocks:
            bp = b if not frozen else BlockParams(
                *(Tensor(getattr(b, a).data) for a in ("conv1", "bn1_gamma", "bn1_beta", "conv2", "bn2_gamma", "bn2_beta")),
                stats1=b.stats1,
                stats2=b.stats2,
            )
            h = residual_block(h, bp, training, update_stats)
        raw = ops.conv2d(h, _frozen(self.proj_w, frozen), _frozen(self.proj_b, frozen))
        regressed = positivity_map(raw)
        divided = ops.div(image, regressed)
        if self.config.target == "shading":
            return divided, regressed
        return regressed, divided

    __call__ = forward

    def decompose(self, image: np.ndarray, training: bool = False) -> DecompositionPair:
        """Decompose one ``H x W x 3`` image (eval mode by default)."""
        image = np.asarray(image, dtype=np.float64)
        batch = image.transpose(2, 0, 1)[None]
        a, s = self.forward(batch, training=training, frozen=True, update_stats=False)
        return DecompositionPair(a.data[0].transpose(1, 2, 0), s.data[0].transpose(1, 2, 0))


class Discriminator:
    """Conv/relu/max-pool stages followed by two affine layers and a sigmoid."""

    def __init__(self, config: DiscriminatorConfig = DiscriminatorConfig(), seed: int = 0, dtype=np.float32):
        self.config = config
        rng = np.random.default_rng(seed)
        self.convs: list[tuple[Tensor, Tensor]] = []
        cin = 3
        for cout in config.channels:
            w = Tensor(_he_normal(rng, (cout, cin, 3, 3), 9 * cin, dtype), requires_grad=True)
            b = Tensor(np.zeros(cout, dtype), requires_grad=True)
            self.convs.append((w, b))
            cin = cout
        d = config.flat_size
        self.fc1_w = Tensor(_he_normal(rng, (d, config.hidden), d, dtype), requires_grad=True)
        self.fc1_b = Tensor(np.zeros(config.hidden, dtype), requires_grad=True)
        self.fc2_w = Tensor((rng.standard_normal((config.hidden, 1)) / np.sqrt(config.hidden)).astype(dtype),
                            requires_grad=True)
        self.fc2_b = Tensor(np.zeros(1, dtype), requires_grad=True)

    def named_parameters(self) -> dict[str, Tensor]:
        out = {}
        for k, (w, b) in enumerate(self.convs):
            out[f"conv{k}.w"] = w
            out[f"conv{k}.b"] = b
        out.update({"fc1.w": self.fc1_w, "fc1.b": self.fc1_b, "fc2.w": self.fc2_w, "fc2.b": self.fc2_b})
        return out

    def forward(self, patch, frozen: bool = False) -> Tensor:
        """Probability that each patch in a ``(B, 3, P, P)`` batch is ground truth."""
        patch = ops.as_tensor(patch)
        p = self.config.patch_size
        if patch.ndim != 4 or patch.shape[1:] != (3, p, p):
            raise ShapeError(f"discriminator expects (B, 3, {p}, {p}) patches, got {patch.shape}")
        h = patch
        for w, b in self.convs:
            h = ops.conv2d(h, _frozen(w, frozen), _frozen(b, frozen))
            h = ops.max_pool(ops.relu(h))
        h = ops.flatten(h)
        h = ops.relu(ops.affine(h, _frozen(self.fc1_w, frozen), _frozen(self.fc1_b, frozen)))
        logit = ops.affine(h, _frozen(self.fc2_w, frozen), _frozen(self.fc2_b, frozen))
        return ops.reshape(ops.sigmoid(logit), (patch.shape[0],))

    __call__ = forward


def generator_forward(image: np.ndarray, generator: Generator, training: bool = False) -> DecompositionPair:
    return generator.decompose(image, training=training)


def discriminator_forward(patch: np.ndarray, discriminator: Discriminator) -> float:
    patch = np.asarray(patch)
    return float(discriminator.forward(patch.transpose(2, 0, 1)[None], frozen=True).data[0])

