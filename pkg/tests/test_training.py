import json

import numpy as np
import pytest

from motionstitch.data import ChunkDataset, rebase
from motionstitch.denoiser import DenoiserConfig, DenoiserModel, load_checkpoint
from motionstitch.schedule import make_schedule
from motionstitch.synthetic import random_skeleton, synthetic_motion
from motionstitch.tensor import Tensor
from motionstitch.training import Adam, TrainConfig, draw_training_inputs, evaluate_epoch, fit, train_step

B = 8


@pytest.fixture
def toy():
    sk = random_skeleton(2, 0)
    frames = np.stack([rebase(synthetic_motion(B, 15.0, sk, rng=i).frames) for i in range(6)])
    ds = ChunkDataset(frames, 15.0, sk, [f"c{i}" for i in range(6)])
    cfg = DenoiserConfig(feature_dim=15, layers_per_stack=1, model_dim=8, ff_dim=16, heads=2, dropout=0.1, block=B,
                         timesteps=10)
    return ds, cfg, make_schedule(10)


def test_default_hyperparameters():
    c = TrainConfig()
    assert (c.batch_size, c.timesteps, c.lr, c.betas) == (128, 300, 1e-4, (0.9, 0.999))
    assert c.context_bounds(75) == (1, 37)
    with pytest.raises(ValueError):
        TrainConfig(context_max=40).context_bounds(75)
    assert TrainConfig.from_dict(c.to_dict()) == c


def test_adam_matches_hand_update():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = Adam([p], lr=0.1, betas=(0.9, 0.999), eps=1e-8)
    g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.3])
    opt.step([g1])
    # first step of Adam moves every coordinate by lr * sign(g)
    np.testing.assert_allclose(p.data, np.array([1.0, -2.0]) - 0.1 * np.sign(g1), rtol=1e-6)
    opt.step([g2])
    m = 0.9 * 0.1 * g1 + 0.1 * g2
    v = 0.999 * 0.001 * g1**2 + 0.001 * g2**2
    m_hat, v_hat = m / (1 - 0.9**2), v / (1 - 0.999**2)
    expected = np.array([1.0, -2.0]) - 0.1 * np.sign(g1) - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8)
    np.testing.assert_allclose(p.data, expected, rtol=1e-6)


def test_drawn_inputs_respect_bounds(toy):
    ds, cfg, sched = toy
    rng = np.random.default_rng(0)
    Ls, ts = [], []
    for _ in range(200):
        ctx, steps, noisy = draw_training_inputs(ds.frames[:3].astype(float), sched, rng, (1, B // 2))
        Ls += [len(c) for c in ctx]
        ts += steps.tolist()
        assert noisy.shape == (3, B, 15)
    assert min(Ls) == 1 and max(Ls) == B // 2
    assert min(ts) == 1 and max(ts) == 10


def test_train_step_reduces_loss_and_clips(toy):
    ds, cfg, sched = toy
    model = DenoiserModel(cfg, 0)
    tc = TrainConfig(batch_size=6, lr=3e-3, grad_clip=1e-3)
    opt = Adam(model.parameters(), tc.lr)
    before = evaluate_epoch(ds.frames, model, sched, ds.skeleton, tc)["total"]
    rng = np.random.default_rng(0)
    res = [train_step(ds.frames, model, sched, opt, rng, ds.skeleton, tc) for _ in range(30)]
    assert all(r.clipped for r in res)
    assert evaluate_epoch(ds.frames, model, sched, ds.skeleton, tc)["total"] < before


def test_train_step_is_seeded(toy):
    ds, cfg, sched = toy
    out = []
    for _ in range(2):
        model = DenoiserModel(cfg, 0)
        opt = Adam(model.parameters(), 1e-3)
        rng = np.random.default_rng(4)
        r = [train_step(ds.frames, model, sched, opt, rng, ds.skeleton, TrainConfig()).losses["total"] for _ in range(3)]
        out.append((r, model.state_dict()["head.weight"].copy()))
    assert out[0][0] == out[1][0]
    np.testing.assert_array_equal(out[0][1], out[1][1])


def test_non_finite_loss_raises(toy):
    ds, cfg, sched = toy
    model = DenoiserModel(cfg, 0)
    bad = ds.frames.copy()
    bad[0, 0, 0] = np.nan
    with pytest.raises(FloatingPointError):
        train_step(bad, model, sched, Adam(model.parameters()), np.random.default_rng(0), ds.skeleton, TrainConfig(),
                   ds.ids)


def test_zero_epochs_writes_initial_checkpoint_only(toy, tmp_path):
    ds, cfg, sched = toy
    assert fit(ds, DenoiserModel(cfg, 0), sched, TrainConfig(epochs=0), tmp_path) == []
    assert sorted(p.name for p in tmp_path.iterdir() if p.suffix == ".ckpt") == ["initial.ckpt"]


def test_fit_writes_log_and_checkpoints(toy, tmp_path):
    ds, cfg, sched = toy
    recs = fit(ds.select(ds.ids[:4]), DenoiserModel(cfg, 0), sched, TrainConfig(epochs=2, batch_size=2), tmp_path,
               val=ds.select(ds.ids[4:]))
    assert len(recs) == 4
    names = {p.name for p in tmp_path.iterdir()}
    assert {"initial.ckpt", "latest.ckpt", "best.ckpt", "epoch0001.ckpt", "epoch0002.ckpt", "train_log.jsonl"} <= names
    lines = [json.loads(x) for x in (tmp_path / "train_log.jsonl").read_text().splitlines()]
    assert sum("val" in x for x in lines) == 2
    _, _, extra, _ = load_checkpoint(tmp_path / "latest.ckpt")
    assert extra["epoch"] == 2 and extra["step"] == 4 and extra["fps"] == 15.0


def test_resume_reproduces_uninterrupted_run(toy, tmp_path):
    ds, cfg, sched = toy
    full = fit(ds, DenoiserModel(cfg, 0), sched, TrainConfig(epochs=3, batch_size=4, seed=9), tmp_path / "a")
    fit(ds, DenoiserModel(cfg, 0), sched, TrainConfig(epochs=1, batch_size=4, seed=9), tmp_path / "b")
    rest = fit(ds, DenoiserModel(cfg, 0), sched, TrainConfig(epochs=3, batch_size=4, seed=9), tmp_path / "b", resume=True)
    assert [r["total"] for r in full[2:]] == [r["total"] for r in rest]
    assert (tmp_path / "a" / "latest.ckpt").read_bytes() == (tmp_path / "b" / "latest.ckpt").read_bytes()


def test_early_stopping(toy, tmp_path):
    ds, cfg, sched = toy
    # lr 0 -> validation loss never improves after the first epoch
    recs = fit(ds, DenoiserModel(cfg, 0), sched, TrainConfig(epochs=10, batch_size=6, lr=0.0, patience=2), tmp_path,
               val=ds)
    assert len(recs) == 3


def test_cosine_schedule():
    c = TrainConfig(lr=1e-3, lr_schedule="cosine", lr_min=1e-5)
    assert c.lr_at(0, 100) == pytest.approx(1e-3)
    assert c.lr_at(50, 100) == pytest.approx(0.5 * (1e-3 + 1e-5))
    assert c.lr_at(100, 100) == pytest.approx(1e-5)
    assert TrainConfig(lr=1e-3).lr_at(50, 100) == 1e-3
    with pytest.raises(ValueError):
        TrainConfig(lr_schedule="step")
