"""Generator and discriminator objectives.

All squared norms are reduced by the mean over pixels and channels (and
batch), so the adversarial weight keeps its meaning across crop sizes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import ShapeError, Tensor, as_tensor
from .engine import ops

logger = logging.getLogger(__name__)

P_FLOOR = 1e-7
DEFAULT_LAMBDA = 1e-4


def _check_same(*tensors):
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"shape mismatch: {sorted(shapes)}")


def _mse(a: Tensor, b: Tensor) -> Tensor:
    return ops.reduce(ops.square(ops.sub(a, b)), "mean")


def data_loss(albedo, shading, albedo_gt, shading_gt) -> Tensor:
    """Mean squared error on albedo plus mean squared error on shading."""
    albedo, shading, albedo_gt, shading_gt = map(as_tensor, (albedo, shading, albedo_gt, shading_gt))
    _check_same(albedo, shading, albedo_gt, shading_gt)
    return ops.add(_mse(albedo, albedo_gt), _mse(shading, shading_gt))


def image_gradient(c) -> tuple[Tensor, Tensor]:
    """Forward differences along the last two (row, column) axes.

    The last column of ``dx`` and the last row of ``dy`` are zero.
    """
    c = as_tensor(c)
    if c.shape[-1] < 2 or c.shape[-2] < 2:
        raise ShapeError("image_gradient needs at least 2x2 spatial extent")
    lead = [(0, 0)] * (c.ndim - 2)
    ell = (slice(None),) * (c.ndim - 2)
    dx = ops.sub(c[ell + (slice(None), slice(1, None))], c[ell + (slice(None), slice(None, -1))])
    dy = ops.sub(c[ell + (slice(1, None), slice(None))], c[ell + (slice(None, -1), slice(None))])
    dx = ops.pad(dx, lead + [(0, 0), (0, 1)])
    dy = ops.pad(dy, lead + [(0, 1), (0, 0)])
    return dx, dy


def gradient_loss(albedo, shading, albedo_gt, shading_gt) -> Tensor:
    """Squared error between image gradients of predictions and ground truth."""
    albedo, shading, albedo_gt, shading_gt = map(as_tensor, (albedo, shading, albedo_gt, shading_gt))
    _check_same(albedo, shading, albedo_gt, shading_gt)
    total = None
    for pred, gt in ((albedo, albedo_gt), (shading, shading_gt)):
        for dp, dg in zip(image_gradient(pred), image_gradient(gt)):
            term = _mse(dp, dg)
            total = term if total is None else ops.add(total, term)
    return total


def safe_log(p, floor: float = P_FLOOR) -> Tensor:
    p = as_tensor(p)
    n = int(np.count_nonzero(p.data < floor))
    if n:
        logger.debug("clamped %d probabilities to %g before log", n, floor)
    return ops.log(ops.clip_min(p, floor))


def adversarial_from_probs(p_albedo, p_shading) -> Tensor:
    """Batch mean of ``-log p_albedo - log p_shading``."""
    la = safe_log(p_albedo)
    ls = safe_log(p_shading)
    return ops.mul(ops.reduce(ops.add(la, ls), "mean"), -1.0)


def adversarial_loss(albedo, shading, disc_albedo, disc_shading) -> Tensor:
    """Generator-side adversarial term; discriminator weights stay frozen."""
    pa = disc_albedo.forward(albedo, frozen=True)
    ps = disc_shading.forward(shading, frozen=True)
    return adversarial_from_probs(pa, ps)


def discriminator_loss_from_probs(p_real, p_fake) -> Tensor:
    """Batch mean of ``-log p_real - log(1 - p_fake)``."""
    lr = safe_log(p_real)
    lf = safe_log(ops.sub(1.0, as_tensor(p_fake)))
    return ops.mul(ops.reduce(ops.add(lr, lf), "mean"), -1.0)


def discriminator_loss(c_gt, c_pred, disc) -> Tensor:
    """Binary cross-entropy for one discriminator; ``c_pred`` is detached."""
    c_pred = as_tensor(c_pred).detach()
    return discriminator_loss_from_probs(disc.forward(c_gt), disc.forward(c_pred))


@dataclass
class LossBreakdown:
    data: float
    grad: float
    adv: float
    total: float
    lam: float
    tensor: Optional[Tensor] = None

    def as_row(self) -> dict:
        return {"data": self.data, "grad": self.grad, "adv": self.adv, "total": self.total}


def total_loss(data, grad, adv, lam: float = DEFAULT_LAMBDA) -> LossBreakdown:
    """``data + grad + lam * adv``; ``lam == 0`` drops the adversarial term."""
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    data, grad = as_tensor(data), as_tensor(grad)
    adv = as_tensor(adv) if adv is not None else Tensor(0.0)
    total = ops.add(data, grad)
    if lam:
        total = ops.add(total, ops.mul(adv, lam))
    return LossBreakdown(data.item(), grad.item(), adv.item(), total.item(), lam, total)
