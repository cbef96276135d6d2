import hashlib

import numpy as np
import pytest

from darn import losses
from darn.checkpoint import load_checkpoint
from darn.data import synth_dataset, synth_mondrian
from darn.engine import Tensor
from darn.metrics import CSV_COLUMNS
from darn.training import (
    LOG_COLUMNS,
    NumericalError,
    OptState,
    Phase,
    TrainConfig,
    adam_step,
    evaluate,
    evaluate_two_fold,
    gan_schedule,
    lr_schedule,
    train,
)


def scalar_adam(w, grad_fn, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Textbook ADAM on one scalar, written independently of the package."""
    m = v = 0.0
    out = []
    for t in range(1, steps + 1):
        g = grad_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1 ** t)) / (np.sqrt(v / (1 - b2 ** t)) + eps)
        out.append(w)
    return out


def test_adam_first_step_is_lr_sign():
    p = {"w": Tensor(np.array([1.0, -2.0]))}
    adam_step(p, {"w": np.array([0.3, -5.0])}, OptState(), 1e-3)
    assert np.allclose(p["w"].data, [1.0 - 1e-3, -2.0 + 1e-3], atol=1e-9)


def test_adam_zero_grad_keeps_params():
    p = {"w": Tensor(np.array([1.0]))}
    st = OptState()
    adam_step(p, {"w": np.zeros(1)}, st, 0.1)
    assert p["w"].data[0] == 1.0 and st.step == 1
    st.m["w"][:] = 1.0
    adam_step(p, {"w": np.zeros(1)}, st, 0.1)
    assert st.m["w"][0] == pytest.approx(0.9)


def test_adam_matches_scalar_oracle_on_quadratic():
    p = {"w": Tensor(np.array(1.0))}
    st = OptState()
    traj = []
    for _ in range(10):
        adam_step(p, {"w": 2 * p["w"].data}, st, 0.1)
        traj.append(float(p["w"].data))
    ref = scalar_adam(1.0, lambda w: 2 * w, 0.1, 10)
    assert np.allclose(traj, ref, rtol=0, atol=1e-14)
    assert all(abs(b) < abs(a) for a, b in zip([1.0] + traj, traj))


def test_adam_rejects_non_finite():
    with pytest.raises(NumericalError, match="bad"):
        adam_step({"bad": Tensor(np.zeros(2))}, {"bad": np.array([1.0, np.nan])}, OptState(), 0.1)


def test_lr_schedule():
    cfg = TrainConfig(iterations=101, warmup_iters=0)
    assert lr_schedule(0, cfg) == pytest.approx(1e-4)
    assert lr_schedule(100, cfg) == pytest.approx(1e-6)
    assert lr_schedule(50, cfg) == pytest.approx(1e-5)


def test_gan_schedule():
    cfg = TrainConfig(iterations=1400, warmup_iters=400)
    assert gan_schedule(100, cfg) is Phase.GENERATOR_ONLY
    assert [gan_schedule(400 + k, cfg) for k in range(4)] == [Phase.DISCRIMINATOR] * 3 + [Phase.GENERATOR]
    phases = [gan_schedule(t, cfg) for t in range(cfg.total_ticks)]
    assert cfg.total_ticks == 4400
    assert phases.count(Phase.GENERATOR_ONLY) == 400
    assert phases.count(Phase.DISCRIMINATOR) == 3000
    assert phases.count(Phase.GENERATOR) == 1000


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr_start=1e-6, lr_end=1e-4)
    with pytest.raises(ValueError):
        TrainConfig(lam=-1)
    with pytest.raises(ValueError):
        TrainConfig(iterations=0)


def _digest(params):
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(params[name].data.tobytes())
    return h.hexdigest()


SMALL = dict(iterations=12, warmup_iters=4, batch_size=2, crop_size=16, width=4, n_blocks=1)


def test_phases_touch_only_their_parameters():
    samples = synth_dataset(0, 6, 24, frames_per_scene=3)
    seen = {"prev": None}
    init = {}

    def snap(bundle):
        return (_digest(bundle.generator.named_parameters()), _digest(bundle.disc_albedo.named_parameters()),
                _digest(bundle.disc_shading.named_parameters()))

    def hook(tick, phase, bundle):
        now = snap(bundle)
        prev = seen["prev"]
        if prev is None:
            from darn.training import build_models

            fresh = snap(build_models(TrainConfig(**SMALL)))
            init["d"] = fresh[1:]
            prev = fresh
        if phase is Phase.DISCRIMINATOR:
            assert now[0] == prev[0] and now[1] != prev[1] and now[2] != prev[2]
        else:
            assert now[0] != prev[0] and now[1:] == prev[1:]
            if phase is Phase.GENERATOR_ONLY:
                assert now[1:] == init["d"]
        seen["prev"] = now

    train(TrainConfig(**SMALL), samples, on_tick=hook)


def test_log_schema_and_effective_loss(tmp_path):
    samples = synth_dataset(0, 6, 24, frames_per_scene=3)
    res = train(TrainConfig(**SMALL), samples, out_dir=tmp_path)
    text = (tmp_path / "train_log.csv").read_text().splitlines()
    assert text[0].split(",") == list(LOG_COLUMNS)
    assert len(text) == 1 + TrainConfig(**SMALL).total_ticks
    for row in res.log:
        if row["phase"] == Phase.GENERATOR.value:
            assert row["total"] == pytest.approx(row["data"] + row["grad"] + 1e-4 * row["adv"], rel=1e-6)
        elif row["phase"] == Phase.GENERATOR_ONLY.value:
            assert row["total"] == pytest.approx(row["data"] + row["grad"], rel=1e-6)
    assert (tmp_path / "model.darn").exists()
    assert len(res.checkpoints) == 11  # cadence rounds to 1 iteration; the final one is model.darn


def test_training_is_deterministic(tmp_path):
    samples = synth_dataset(1, 6, 24, frames_per_scene=3)
    train(TrainConfig(**SMALL), samples, out_dir=tmp_path / "a")
    train(TrainConfig(**SMALL), samples, out_dir=tmp_path / "b")
    assert (tmp_path / "a" / "model.darn").read_bytes() == (tmp_path / "b" / "model.darn").read_bytes()
    assert (tmp_path / "a" / "train_log.csv").read_bytes() == (tmp_path / "b" / "train_log.csv").read_bytes()


def test_non_finite_loss_aborts_keeping_checkpoints(tmp_path, monkeypatch):
    samples = synth_dataset(2, 6, 24, frames_per_scene=3)
    real = losses.data_loss
    calls = {"n": 0}

    def flaky(*args):
        calls["n"] += 1
        out = real(*args)
        if calls["n"] == 8:
            out.data = np.array(np.nan, dtype=out.data.dtype)
        return out

    monkeypatch.setattr(losses, "data_loss", flaky)
    with pytest.raises(NumericalError):
        train(TrainConfig(**SMALL), samples, out_dir=tmp_path)
    saved = sorted(tmp_path.glob("checkpoint_*.darn"))
    assert saved and not (tmp_path / "model.darn").exists()
    load_checkpoint(saved[-1])


def test_single_sample_overfit():
    smp = synth_mondrian(11, 32, 32)
    cfg = TrainConfig(iterations=500, warmup_iters=500, batch_size=1, lam=0.0, crop_size=32, augment=False,
                      lr_start=1e-3, lr_end=1e-4, seed=0)
    res = train(cfg, [smp])
    assert res.log[-1]["data"] < 1e-3


def test_evaluate_schema_and_folds():
    samples = synth_dataset(3, 6, 24, frames_per_scene=3)
    res = train(TrainConfig(**SMALL), samples[:3])
    rep = evaluate(res.bundle, samples[3:])
    assert rep.count == 3 and set(rep.aggregate()) == set(CSV_COLUMNS)
    two = evaluate_two_fold([res.bundle, res.bundle], [samples[3:], samples[:3]])
    other = evaluate(res.bundle, samples[:3])
    for c in CSV_COLUMNS:
        assert two.aggregate()[c] == pytest.approx((rep.aggregate()[c] + other.aggregate()[c]) / 2)
    with pytest.raises(ValueError):
        evaluate(res.bundle, samples, expect=res.bundle.generator.config.__class__(width=8, n_blocks=1))
