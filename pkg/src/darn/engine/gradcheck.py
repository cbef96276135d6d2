"""Central finite-difference validation of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import Tensor


@dataclass
class GradCheckReport:
    max_rel_err: float
    passed: bool
    resamples: int = 0
    worst: Optional[tuple] = None  # (input index, flat coordinate)
    per_input: list = field(default_factory=list)

    def __bool__(self):
        return self.passed


def _relative_errors(analytic, numeric, abs_floor):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor)
    return np.abs(analytic - numeric) / denom


def _single_check(fn, arrays, wrt, step, abs_floor, max_coords, rng):
    leaves = [Tensor(a.copy(), requires_grad=(i in wrt)) for i, a in enumerate(arrays)]
    out = fn(*leaves)
    if out.size != 1:
        raise ValueError("function under test must return a scalar tensor")
    out.backward()

    worst, worst_at, per_input = 0.0, None, []
    for i in wrt:
        base = arrays[i]
        analytic = leaves[i].grad if leaves[i].grad is not None else np.zeros_like(base)
        coords = np.arange(base.size)
        if max_coords is not None and base.size > max_coords:
            coords = np.sort(rng.choice(base.size, size=max_coords, replace=False))
        numeric = np.empty(len(coords))
        flat = base.reshape(-1)
        for k, idx in enumerate(coords):
            orig = flat[idx]
            flat[idx] = orig + step
            fp = fn(*[Tensor(a) for a in arrays]).item()
            flat[idx] = orig - step
            fm = fn(*[Tensor(a) for a in arrays]).item()
            flat[idx] = orig
            numeric[k] = (fp - fm) / (2 * step)
        errs = _relative_errors(analytic.reshape(-1)[coords], numeric, abs_floor)
        m = float(errs.max()) if errs.size else 0.0
        per_input.append(m)
        if m > worst:
            worst, worst_at = m, (i, int(coords[int(errs.argmax())]))
    return worst, worst_at, per_input


def finite_diff_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    wrt: Optional[Sequence[int]] = None,
    step: float = 1e-4,
    tolerance: float = 1e-4,
    abs_floor: float = 1e-6,
    max_resamples: int = 5,
    resample_scale: float = 1e-2,
    max_coords: Optional[int] = None,
    seed: int = 0,
) -> GradCheckReport:
    """Compare the gradient of scalar ``fn(*tensors)`` to central differences.

    Inputs are promoted to float64. A failed comparison is assumed to come
    from sampling a non-differentiable point (relu kink, pooling tie) and
    the inputs are jittered by ``resample_scale`` and retried, up to
    ``max_resamples`` times; the count is reported. A genuine adjoint bug
    fails on every resample.
    """
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    wrt = list(range(len(arrays))) if wrt is None else list(wrt)
    rng = np.random.default_rng(seed)

    resamples = 0
    while True:
        worst, worst_at, per_input = _single_check(fn, arrays, wrt, step, abs_floor, max_coords, rng)
        passed = worst < tolerance
        if passed or resamples >= max_resamples:
            return GradCheckReport(worst, passed, resamples, worst_at, per_input)
        resamples += 1
        for i in wrt:
            arrays[i] = arrays[i] + resample_scale * rng.standard_normal(arrays[i].shape)
