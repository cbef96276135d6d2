"""Independent brute-force references for the metric tests.

None of these use the closed forms or solvers of the package; they sweep
the scale parameter directly and refine around the best grid point.
"""

import numpy as np


def sweep_min(f, lo, hi, points=2001, rounds=8, log=False):
    """Minimum of ``f`` found by repeated dense grid refinement.

    ``f`` maps an array of scale values to an array of objective values.
    """
    a, b = (np.log(lo), np.log(hi)) if log else (lo, hi)
    best_x, best_v = None, np.inf
    for _ in range(rounds):
        grid = np.linspace(a, b, points)
        vals = f(np.exp(grid) if log else grid)
        k = int(np.argmin(vals))
        if vals[k] < best_v:
            best_x, best_v = grid[k], vals[k]
        step = grid[1] - grid[0]
        a, b = grid[k] - step, grid[k] + step
    return (np.exp(best_x) if log else best_x), best_v


def _sq(gt, pred):
    g, p = gt.reshape(-1), pred.reshape(-1)
    return lambda a: ((g - a[:, None] * p) ** 2).sum(axis=1)


def si_mse_oracle(gt, pred):
    n = gt.shape[0] * gt.shape[1]
    _, v = sweep_min(_sq(gt, pred), -10, 10)
    return v / n


def si_lmse_oracle(gt, pred, side, stride):
    h, w = gt.shape[:2]

    def starts(length):
        s = list(range(0, length - side + 1, stride))
        if s[-1] + side < length:
            s.append(length - side)
        return s

    vals = []
    for r in starts(h):
        for c in starts(w):
            g, p = gt[r:r + side, c:c + side], pred[r:r + side, c:c + side]
            if not np.any(p):
                vals.append(np.sum(g ** 2) / side ** 2)
            else:
                _, v = sweep_min(_sq(g, p), -50, 50)
                vals.append(v / side ** 2)
    return float(np.mean(vals))


def rs_objective(a_gt, a_hat, s_gt, s_hat):
    A, Ah, S, Sh = (x.reshape(-1) for x in (a_gt, a_hat, s_gt, s_hat))
    return lambda a: (((A - a[:, None] * Ah) ** 2).sum(axis=1) + ((S - Sh / a[:, None]) ** 2).sum(axis=1))


def rs_mse_oracle(a_gt, a_hat, s_gt, s_hat):
    n = a_gt.shape[0] * a_gt.shape[1]
    alpha, v = sweep_min(rs_objective(a_gt, a_hat, s_gt, s_hat), 1e-3, 1e3, log=True)
    return alpha, v / (2 * n)


def rs_dense_alpha(a_gt, a_hat, s_gt, s_hat, points=10 ** 6, chunk=20000):
    """Argmin over ``points`` log-spaced scales, objective evaluated directly."""
    alphas = np.logspace(-3, 3, points)
    best, best_v = None, np.inf
    A, Ah, S, Sh = (x.reshape(-1) for x in (a_gt, a_hat, s_gt, s_hat))
    for k in range(0, points, chunk):
        al = alphas[k:k + chunk, None]
        v = ((A - al * Ah) ** 2).sum(axis=1) + ((S - Sh / al) ** 2).sum(axis=1)
        j = int(np.argmin(v))
        if v[j] < best_v:
            best, best_v = float(alphas[k + j]), float(v[j])
    return best


def ssim_reference(x, y, data_range=1.0, win=11, sigma=1.5):
    """SSIM straight from its definition: explicit weighted window statistics."""
    wy, wx = min(win, x.shape[0]), min(win, x.shape[1])
    gy = np.exp(-((np.arange(wy) - (wy - 1) / 2) ** 2) / (2 * sigma ** 2))
    gx = np.exp(-((np.arange(wx) - (wx - 1) / 2) ** 2) / (2 * sigma ** 2))
    w = np.outer(gy / gy.sum(), gx / gx.sum())
    c1, c2 = (0.01 * data_range) ** 2, (0.03 * data_range) ** 2
    chans = []
    for k in range(x.shape[2]):
        vals = []
        for i in range(x.shape[0] - wy + 1):
            for j in range(x.shape[1] - wx + 1):
                px, py = x[i:i + wy, j:j + wx, k], y[i:i + wy, j:j + wx, k]
                mx, my = np.sum(w * px), np.sum(w * py)
                vx = np.sum(w * (px - mx) ** 2)
                vy = np.sum(w * (py - my) ** 2)
                cxy = np.sum(w * (px - mx) * (py - my))
                vals.append((2 * mx * my + c1) * (2 * cxy + c2) / ((mx ** 2 + my ** 2 + c1) * (vx + vy + c2)))
        chans.append(np.mean(vals))
    return float(np.mean(chans))
