import numpy as np
import pytest

from darn.data import Sample
from darn.metrics import (
    CSV_COLUMNS,
    DegeneratePredictionError,
    MetricsReport,
    average_reports,
    baseline_constant,
    dssim,
    evaluate_pairs,
    mse,
    optimal_scale,
    patch_grid,
    rs_mse,
    si_lmse,
    si_mse,
    solve_relative_scale,
    ssim,
)

from oracles import rs_dense_alpha, rs_mse_oracle, si_lmse_oracle, si_mse_oracle, ssim_reference


def _img(rng, h=8, w=8, lo=0.0, hi=1.0):
    return rng.uniform(lo, hi, (h, w, 3))


def test_optimal_scale():
    rng = np.random.default_rng(0)
    c = _img(rng)
    assert optimal_scale(c, c / 2) == pytest.approx(2)
    assert optimal_scale(c, c) == pytest.approx(1)
    with pytest.raises(DegeneratePredictionError):
        optimal_scale(c, np.zeros_like(c))
    for _ in range(10):
        g, p = rng.standard_normal(4), rng.standard_normal(4)
        grid = np.arange(-10, 10, 1e-4)
        sweep = grid[np.argmin(((g - grid[:, None] * p) ** 2).sum(axis=1))]
        assert abs(optimal_scale(g, p) - sweep) < 1e-3


def test_si_mse_basic_and_sweep():
    rng = np.random.default_rng(1)
    c = _img(rng)
    assert si_mse(c, c) == 0
    assert si_mse(c, -3 * c) == pytest.approx(0, abs=1e-25)
    g = np.array([[[1.0, 0, 0], [0, 2.0, 0]]])
    p = np.array([[[2.0, 0, 0], [0, 1.0, 0]]])
    # two pixels; alpha = 4/5, residual 1 + 4 - 16/5 = 9/5, divided by N = 2
    assert si_mse(g, p) == pytest.approx(0.9)
    assert si_mse(g, p) == pytest.approx(si_mse_oracle(g, p), abs=1e-9)


def test_mse_convention():
    c = np.full((4, 4, 3), 0.5)
    assert mse(c, 2 * c) == pytest.approx(0.75)
    rng = np.random.default_rng(2)
    a, b = _img(rng), _img(rng)
    loop = sum((a[i, j, k] - b[i, j, k]) ** 2 for i in range(8) for j in range(8) for k in range(3)) / 64
    assert mse(a, b) == pytest.approx(loop)


def test_mse_dominates_si_mse():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = _img(rng), _img(rng) * rng.uniform(0.1, 3)
        assert mse(a, b) >= si_mse(a, b) >= 0


def test_patch_grid_counts_and_coverage():
    assert len(patch_grid(100, 100)) == 361
    g = patch_grid(100, 100)
    assert {s for _, _, s in g} == {10}
    assert len(patch_grid(100, 80)) == 285
    rng = np.random.default_rng(4)
    for _ in range(50):
        h, w = (int(v) for v in rng.integers(10, 90, 2))
        cover = np.zeros((h, w), int)
        for r, c, s in patch_grid(h, w):
            assert r + s <= h and c + s <= w
            cover[r:r + s, c:c + s] += 1
        assert cover.min() >= 1


def test_si_lmse_per_window_scale():
    rng = np.random.default_rng(5)
    c = _img(rng, 20, 20, 0.1, 1)
    assert si_lmse(c, c) == 0
    # side 2, stride 1 windows; one global factor per window is absorbed
    assert si_lmse(c, 4 * c) == pytest.approx(0, abs=1e-25)
    p = c.copy()
    p[:10] *= 3  # factor constant on whole windows away from the seam
    grid = patch_grid(20, 20)
    pure = [(r, cc, s) for r, cc, s in grid if r + s <= 10 or r >= 10]
    for r, cc, s in pure:
        g, q = c[r:r + s, cc:cc + s], p[r:r + s, cc:cc + s]
        assert si_mse(g, q) == pytest.approx(0, abs=1e-25)


def test_si_lmse_zero_window():
    g = np.ones((10, 10, 3))
    p = np.zeros((10, 10, 3))
    assert si_lmse(g, p) == pytest.approx(3.0)  # ||g||^2 / N with alpha = 0


def test_metrics_match_sweep_oracles():
    rng = np.random.default_rng(6)
    for _ in range(25):
        a_gt, s_gt = _img(rng, lo=0.05), _img(rng, lo=0.2)
        a_hat, s_hat = _img(rng, lo=0.05), _img(rng, lo=0.2)
        assert si_mse(a_gt, a_hat) == pytest.approx(si_mse_oracle(a_gt, a_hat), abs=1e-6)
        side = patch_grid(8, 8)[0][2]
        assert si_lmse(a_gt, a_hat) == pytest.approx(si_lmse_oracle(a_gt, a_hat, side, max(1, side // 2)), abs=1e-6)
        _, ov = rs_mse_oracle(a_gt, a_hat, s_gt, s_hat)
        assert rs_mse(a_gt, a_hat, s_gt, s_hat) == pytest.approx(ov, abs=1e-6)


def test_relative_scale_against_dense_log_sweep():
    rng = np.random.default_rng(7)
    for _ in range(3):
        args = (_img(rng, 4, 4, 0.05), _img(rng, 4, 4, 0.05) * rng.uniform(0.2, 5),
                _img(rng, 4, 4, 0.2), _img(rng, 4, 4, 0.2) * rng.uniform(0.2, 5))
        alpha = solve_relative_scale(*args).alpha
        dense = rs_dense_alpha(*args)
        assert abs(alpha - dense) / dense < 1e-4


def test_rs_mse_zero_cases_and_invariance():
    rng = np.random.default_rng(8)
    a, s = _img(rng, lo=0.05), _img(rng, lo=0.2)
    assert solve_relative_scale(a, a, s, s).alpha == pytest.approx(1)
    assert solve_relative_scale(a, a / 2, s, 2 * s).alpha == pytest.approx(2)
    for alpha in (0.5, 1, 3):
        assert rs_mse(a, alpha * a, s, s / alpha) <= 1e-10
    bad = rs_mse(a, 2 * a, s, 2 * s)
    assert bad > 0
    assert bad == pytest.approx(rs_mse_oracle(a, 2 * a, s, 2 * s)[1], abs=1e-9)
    ah, sh = _img(rng, lo=0.05), _img(rng, lo=0.2)
    base = rs_mse(a, ah, s, sh)
    for g in (0.3, 2.0, 7.0):
        assert rs_mse(a, g * ah, s, sh / g) == pytest.approx(base, abs=1e-8)


def test_rs_edge_warning():
    a, s = np.ones((2, 2, 3)), np.ones((2, 2, 3))
    with pytest.warns(RuntimeWarning):
        res = solve_relative_scale(a, a * 1e-6, s, s * 1e-6)
    assert res.at_edge


def test_ssim_properties():
    rng = np.random.default_rng(9)
    x, y = _img(rng, 16, 16), _img(rng, 16, 16)
    assert ssim(x, x) == pytest.approx(1, abs=1e-12)
    assert dssim(x, x) == pytest.approx(0, abs=1e-12)
    assert dssim(x, y) == pytest.approx(dssim(y, x), abs=1e-12)
    c1, c2 = 0.3, 0.7
    closed = (2 * c1 * c2 + 1e-4) / (c1 ** 2 + c2 ** 2 + 1e-4)
    assert ssim(np.full((12, 12, 3), c1), np.full((12, 12, 3), c2)) == pytest.approx(closed, abs=1e-10)
    assert ssim(x, y) == pytest.approx(ssim_reference(x, y), abs=1e-10)
    small_x, small_y = _img(rng, 8, 6), _img(rng, 8, 6)
    assert ssim(small_x, small_y) == pytest.approx(ssim_reference(small_x, small_y), abs=1e-10)


def test_ssim_matches_scikit_image():
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(10)
    for _ in range(5):
        x, y = _img(rng, 32, 40), _img(rng, 32, 40)
        ref = skm.structural_similarity(x, y, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                        data_range=1.0, channel_axis=2)
        assert ssim(x, y) == pytest.approx(ref, abs=1e-5)


def _samples(rng, n=4, const_shading=False):
    out = []
    for k in range(n):
        a = _img(rng, 12, 12, 0.1, 0.9)
        s = np.full_like(a, 0.6) if const_shading else _img(rng, 12, 12, 0.2, 1.0)
        out.append(Sample(f"img{k}", f"sc{k // 2}", a * s, a, s))
    return out


def test_baselines():
    rng = np.random.default_rng(11)
    rep = baseline_constant("shading", _samples(rng, const_shading=True))
    assert all(v == pytest.approx(0, abs=1e-12) for v in rep.aggregate().values())
    rep = baseline_constant("albedo", _samples(rng))
    assert set(rep.aggregate()) == set(CSV_COLUMNS)
    s = rep.summary()
    assert set(s) >= {"si_mse", "si_lmse", "dssim", "mse", "rs_mse"}
    for fam in ("si_mse", "si_lmse", "dssim", "mse"):
        assert s[fam]["average"] == pytest.approx((s[fam]["albedo"] + s[fam]["shading"]) / 2)
    with pytest.raises(ValueError):
        baseline_constant("depth", [])


def test_report_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(12)
    smp = _samples(rng)
    rep = evaluate_pairs((s.id, s.albedo, s.albedo * 1.1, s.shading, s.shading / 1.1) for s in smp)
    text = rep.to_csv(tmp_path / "r.csv")
    lines = text.strip().splitlines()
    assert lines[0].split(",")[:10] == ["image_id", *CSV_COLUMNS]
    assert lines[-1].startswith("mean,")
    back = MetricsReport.from_csv(tmp_path / "r.csv")
    assert back.aggregate() == rep.aggregate()
    mean_row = lines[-1].split(",")
    assert mean_row[1] == f"{100 * rep.aggregate()['si_mse_A']:.2f}"


def test_gt_as_prediction_is_zero():
    rng = np.random.default_rng(13)
    rep = evaluate_pairs((s.id, s.albedo, s.albedo, s.shading, s.shading) for s in _samples(rng))
    assert all(abs(v) < 1e-12 for v in rep.aggregate().values())


def test_fold_average_is_cellwise_mean():
    rng = np.random.default_rng(14)
    smp = _samples(rng, 6)
    r1 = evaluate_pairs((s.id, s.albedo, s.albedo * 1.2, s.shading, s.shading) for s in smp[:3])
    r2 = evaluate_pairs((s.id, s.albedo, s.albedo, s.shading, s.shading * 0.7) for s in smp[3:])
    avg = average_reports(r1, r2).aggregate()
    a1, a2 = r1.aggregate(), r2.aggregate()
    for c in CSV_COLUMNS:
        assert avg[c] == pytest.approx((a1[c] + a2[c]) / 2)
    same = average_reports(r1, r1).aggregate()
    assert same == pytest.approx(a1)
