"""Scale-invariant and scale-aware error metrics for intrinsic decompositions.

Images are ``H x W x C`` arrays. Squared norms fold the channels in and are
divided by the pixel count ``N = H * W``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

FAMILIES = ("si_mse", "si_lmse", "dssim", "mse")
CSV_COLUMNS = (
    "si_mse_A", "si_mse_S", "si_lmse_A", "si_lmse_S",
    "dssim_A", "dssim_S", "mse_A", "mse_S", "rs_mse",
)


class DegeneratePredictionError(ValueError):
    """The prediction is identically zero, so no scale can be fitted."""


def _pixels(c: np.ndarray) -> int:
    return c.shape[0] * c.shape[1] if c.ndim >= 2 else c.size


def _pair(gt, pred):
    gt = np.asarray(gt, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    if gt.shape != pred.shape:
        raise ValueError(f"shape mismatch: {gt.shape} vs {pred.shape}")
    return gt, pred


def optimal_scale(gt, pred) -> float:
    """Least-squares ``alpha`` minimizing ``||gt - alpha * pred||^2``."""
    gt, pred = _pair(gt, pred)
    denom = float(np.sum(pred * pred))
    if denom == 0.0:
        raise DegeneratePredictionError("prediction is identically zero")
    return float(np.sum(gt * pred)) / denom


def si_mse(gt, pred) -> float:
    gt, pred = _pair(gt, pred)
    alpha = optimal_scale(gt, pred)
    return float(np.sum((gt - alpha * pred) ** 2)) / _pixels(gt)


def mse(gt, pred) -> float:
    gt, pred = _pair(gt, pred)
    return float(np.sum((gt - pred) ** 2)) / _pixels(gt)


# -- local (patch) error ---------------------------------------------------------

def _axis_starts(length: int, side: int, stride: int) -> list[int]:
    starts = list(range(0, length - side + 1, stride))
    if starts[-1] + side < length:
        starts.append(length - side)
    return starts


def patch_grid(h: int, w: int, ratio: float = 0.1, overlap: float = 0.5) -> list[tuple[int, int, int]]:
    """Square windows ``(row, col, side)`` on a regular grid.

    Side is ``ratio`` of the largest dimension (nearest integer, at least 1,
    at most the smallest dimension); stride leaves ``overlap`` between
    neighbours. A last row/column of windows is moved flush with the border
    when the grid would otherwise leave pixels uncovered.
    """
    side = int(math.floor(ratio * max(h, w) + 0.5))
    side = max(1, min(side, h, w))
    stride = max(1, int(side * (1 - overlap)))
    return [(r, c, side) for r in _axis_starts(h, side, stride) for c in _axis_starts(w, side, stride)]


def si_lmse(gt, pred, ratio: float = 0.1, overlap: float = 0.5) -> float:
    """Mean of per-window scale-invariant MSE; each window fits its own scale.

    A window whose prediction is identically zero scores ``||gt||^2 / N``.
    """
    gt, pred = _pair(gt, pred)
    windows = patch_grid(gt.shape[0], gt.shape[1], ratio, overlap)
    total = 0.0
    for r, c, s in windows:
        g = gt[r:r + s, c:c + s]
        p = pred[r:r + s, c:c + s]
        pp = float(np.sum(p * p))
        alpha = float(np.sum(g * p)) / pp if pp > 0 else 0.0
        total += float(np.sum((g - alpha * p) ** 2)) / (s * s)
    return total / len(windows)


# -- structural similarity -------------------------------------------------------

def _gaussian_window(n: int, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(n) - (n - 1) / 2.0
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, wy: np.ndarray, wx: np.ndarray) -> np.ndarray:
    from numpy.lib.stride_tricks import sliding_window_view

    rows = sliding_window_view(img, len(wy), axis=0) @ wy
    return sliding_window_view(rows, len(wx), axis=1) @ wx


def ssim_map(x: np.ndarray, y: np.ndarray, data_range: float = 1.0) -> np.ndarray:
    """Per-position SSIM of two single-channel images (valid windows only).

    Images smaller than the 11x11 window use a truncated, renormalized
    Gaussian along the short axis.
    """
    wy = _gaussian_window(min(SSIM_WINDOW, x.shape[0]))
    wx = _gaussian_window(min(SSIM_WINDOW, x.shape[1]))
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mx = _filter_valid(x, wy, wx)
    my = _filter_valid(y, wy, wx)
    sxx = _filter_valid(x * x, wy, wx) - mx * mx
    syy = _filter_valid(y * y, wy, wx) - my * my
    sxy = _filter_valid(x * y, wy, wx) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return num / den


def ssim(x, y, data_range: float = 1.0) -> float:
    """Mean SSIM over channels and window positions."""
    x, y = _pair(x, y)
    if x.ndim == 2:
        x, y = x[..., None], y[..., None]
    return float(np.mean([ssim_map(x[..., k], y[..., k], data_range).mean() for k in range(x.shape[2])]))


def dssim(x, y, data_range: float = 1.0) -> float:
    return (1.0 - ssim(x, y, data_range)) / 2.0


# -- relative scale ----------------------------------------------------------------

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class RelativeScale:
    alpha: float
    at_edge: bool = False


def _golden_section(f, lo: float, hi: float, tol: float) -> float:
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return (a + b) / 2


def solve_relative_scale(
    albedo_gt, albedo, shading_gt, shading,
    bounds: tuple[float, float] = (1e-3, 1e3),
    scan_points: int = 512,
    tol: float = 1e-10,
) -> RelativeScale:
    """Minimize ``||A - a*Ahat||^2 + ||S - Shat/a||^2`` over ``a > 0``.

    A coarse scan in ``log a`` picks the best basin, golden-section search
    narrows it to ``tol``, and Newton iterations on the stationarity quartic
    ``|Ahat|^2 a^4 - <A,Ahat> a^3 + <S,Shat> a - |Shat|^2 = 0`` polish the
    result. The lowest objective among all candidates wins.
    """
    a_gt, a_hat = _pair(albedo_gt, albedo)
    s_gt, s_hat = _pair(shading_gt, shading)
    p = float(np.sum(a_hat * a_hat))
    q = float(np.sum(a_gt * a_hat))
    r = float(np.sum(s_gt * s_hat))
    s = float(np.sum(s_hat * s_hat))
    if p == 0.0 or s == 0.0:
        raise DegeneratePredictionError("albedo or shading prediction is identically zero")
    aa = float(np.sum(a_gt * a_gt))
    ss = float(np.sum(s_gt * s_gt))

    def objective(alpha):
        return aa - 2 * alpha * q + alpha * alpha * p + ss - 2 * r / alpha + s / (alpha * alpha)

    def f_log(t):
        return objective(math.exp(t))

    lo, hi = math.log(bounds[0]), math.log(bounds[1])
    grid = np.linspace(lo, hi, scan_points)
    vals = objective(np.exp(grid))
    k = int(np.argmin(vals))
    t = _golden_section(f_log, grid[max(k - 1, 0)], grid[min(k + 1, scan_points - 1)], tol)

    candidates = [math.exp(t)]
    alpha = math.exp(t)
    for _ in range(50):
        g = p * alpha ** 4 - q * alpha ** 3 + r * alpha - s
        dg = 4 * p * alpha ** 3 - 3 * q * alpha ** 2 + r
        if dg == 0:
            break
        step = g / dg
        alpha -= step
        if not (bounds[0] <= alpha <= bounds[1]):
            break
        candidates.append(alpha)
        if abs(step) <= 1e-15 * abs(alpha):
            break
    candidates += [bounds[0], bounds[1]]

    def residual(alpha):
        return float(np.sum((a_gt - alpha * a_hat) ** 2)) + float(np.sum((s_gt - s_hat / alpha) ** 2))

    best = min(candidates, key=residual)
    at_edge = min(abs(math.log(best) - lo), abs(math.log(best) - hi)) < 1e-9
    if at_edge:
        warnings.warn("relative scale minimizer lies on the search bracket edge", RuntimeWarning)
    return RelativeScale(best, at_edge)


def rs_mse(albedo_gt, albedo, shading_gt, shading) -> float:
    """Error after the single product-preserving rescale ``(a*Ahat, Shat/a)``."""
    a_gt, a_hat = _pair(albedo_gt, albedo)
    s_gt, s_hat = _pair(shading_gt, shading)
    alpha = solve_relative_scale(a_gt, a_hat, s_gt, s_hat).alpha
    err = float(np.sum((a_gt - alpha * a_hat) ** 2)) + float(np.sum((s_gt - s_hat / alpha) ** 2))
    return err / (2 * _pixels(a_gt))


# -- reports -----------------------------------------------------------------------------

@dataclass
class ImageMetrics:
    image_id: str
    values: dict  # column name -> raw value

    @classmethod
    def compute(cls, image_id, albedo_gt, albedo, shading_gt, shading) -> "ImageMetrics":
        v = {
            "si_mse_A": si_mse(albedo_gt, albedo),
            "si_mse_S": si_mse(shading_gt, shading),
            "si_lmse_A": si_lmse(albedo_gt, albedo),
            "si_lmse_S": si_lmse(shading_gt, shading),
            "dssim_A": dssim(albedo_gt, albedo),
            "dssim_S": dssim(shading_gt, shading),
            "mse_A": mse(albedo_gt, albedo),
            "mse_S": mse(shading_gt, shading),
            "rs_mse": rs_mse(albedo_gt, albedo, shading_gt, shading),
        }
        return cls(str(image_id), v)


@dataclass
class MetricsReport:
    rows: list = field(default_factory=list)  # list[ImageMetrics]
    folds: list = field(default_factory=list)  # sub-reports when fold-averaged

    @property
    def count(self) -> int:
        return len(self.rows)

    def add(self, row: ImageMetrics):
        self.rows.append(row)

    def aggregate(self) -> dict:
        if self.folds:
            aggs = [f.aggregate() for f in self.folds]
            return {c: float(np.mean([a[c] for a in aggs])) for c in CSV_COLUMNS}
        if not self.rows:
            raise ValueError("empty report")
        return {c: float(np.mean([r.values[c] for r in self.rows])) for c in CSV_COLUMNS}

    def family(self, name: str) -> dict:
        """``{'albedo', 'shading', 'average'}`` aggregate values of one family."""
        agg = self.aggregate()
        a, s = agg[f"{name}_A"], agg[f"{name}_S"]
        return {"albedo": a, "shading": s, "average": (a + s) / 2}

    def summary(self, scale: float = 1.0) -> dict:
        out = {f: {k: v * scale for k, v in self.family(f).items()} for f in FAMILIES}
        out["rs_mse"] = self.aggregate()["rs_mse"] * scale
        out["count"] = self.count
        return out

    def to_csv(self, path=None) -> str:
        """One row per image plus a ``mean`` row.

        The listed columns hold values x100 with two decimals; the ``*_raw``
        columns hold full precision.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["image_id", *CSV_COLUMNS, *(f"{c}_raw" for c in CSV_COLUMNS)])
        for image_id, values in [(r.image_id, r.values) for r in self.rows] + [("mean", self.aggregate())]:
            writer.writerow(
                [image_id]
                + [f"{100 * values[c]:.2f}" for c in CSV_COLUMNS]
                + [repr(float(values[c])) for c in CSV_COLUMNS]
            )
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "MetricsReport":
        report = cls()
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                if row["image_id"] == "mean":
                    continue
                report.add(ImageMetrics(row["image_id"], {c: float(row[f"{c}_raw"]) for c in CSV_COLUMNS}))
        return report


def average_reports(first: MetricsReport, second: MetricsReport) -> MetricsReport:
    """Two-fold average: every aggregate cell is the mean of the two fold aggregates.

    Reports over the same image ids are averaged row by row; reports over
    disjoint (reciprocal) test sets keep each image's own row.
    """
    if [r.image_id for r in first.rows] == [r.image_id for r in second.rows]:
        rows = [
            ImageMetrics(a.image_id, {c: (a.values[c] + b.values[c]) / 2 for c in CSV_COLUMNS})
            for a, b in zip(first.rows, second.rows)
        ]
    else:
        rows = list(first.rows) + list(second.rows)
    return MetricsReport(rows, folds=[first, second])


def evaluate_pairs(items: Iterable[tuple]) -> MetricsReport:
    """Build a report from ``(id, A_gt, A_hat, S_gt, S_hat)`` tuples."""
    report = MetricsReport()
    for image_id, a_gt, a_hat, s_gt, s_hat in items:
        report.add(ImageMetrics.compute(image_id, a_gt, a_hat, s_gt, s_hat))
    return report


def baseline_constant(component: str, samples: Sequence) -> MetricsReport:
    """Score the constant-component baseline on ``samples``.

    The chosen component is predicted as the per-image mean of its ground
    truth; the other is the image divided by that constant.
    """
    if component not in ("shading", "albedo"):
        raise ValueError("component must be 'shading' or 'albedo'")
    report = MetricsReport()
    for smp in samples:
        if component == "shading":
            const = float(np.mean(smp.shading))
            s_hat = np.full_like(smp.shading, const)
            a_hat = smp.image / const
        else:
            const = float(np.mean(smp.albedo))
            a_hat = np.full_like(smp.albedo, const)
            s_hat = smp.image / const
        report.add(ImageMetrics.compute(smp.id, smp.albedo, a_hat, smp.shading, s_hat))
    return report
