"""Train a small denoiser for 600 steps and fill in a motion from keyframes.

The model is far too small and short-trained to look good; the point is the
shape of the workflow. Expect a couple of minutes on one CPU core.
"""
import tempfile

import numpy as np

from motionstitch.data import preprocess, sample_context
from motionstitch.denoiser import DenoiserConfig, DenoiserModel, sample
from motionstitch.schedule import make_schedule
from motionstitch.synthetic import synthetic_motion
from motionstitch.training import TrainConfig, fit

takes = [(f"take{i}", synthetic_motion(600, fps=60.0, rng=i)) for i in range(5)]
ds, split = preprocess(takes, seed=0)
train = ds.select(split.train)

sched = make_schedule(50)
cfg = DenoiserConfig(feature_dim=ds.frames.shape[2], layers_per_stack=1, model_dim=32, ff_dim=64, heads=4,
                     dropout=0.0, block=75, timesteps=50)
model = DenoiserModel(cfg, 0)
with tempfile.TemporaryDirectory() as out:
    log = fit(train, model, sched, TrainConfig(batch_size=8, epochs=200, lr=3e-3, lr_schedule="cosine", seed=0), out)
print(f"training loss: first step {log[0]['total']:.3f}, last step {log[-1]['total']:.3f}")

rng = np.random.default_rng(1)
ctx = sample_context(ds.frames[0], 20, rng)
motion = sample(ctx, model, sched, rng, ds.skeleton, fps=ds.fps)
err = np.abs(motion.frames[ctx.indices, :3] - ctx.poses[:, :3]).max()
print(f"generated {len(motion)} frames; largest root error at the 20 keyframes: {err:.3f} m")
