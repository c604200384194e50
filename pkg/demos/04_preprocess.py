"""From raw takes to a chunked, augmented and split dataset.

Synthetic takes stand in for capture data here; with real BVH files use
``motionstitch preprocess <dir> <out>`` instead.
"""
from motionstitch.data import preprocess
from motionstitch.synthetic import synthetic_motion

takes = [(f"take{i}", synthetic_motion(600, fps=60.0, rng=i)) for i in range(5)]
ds, split = preprocess(takes, fps=15, block=75, augment=2, seed=0)
print(f"{len(ds.frames)} chunks of shape {ds.frames.shape[1:]} at {ds.fps} fps")
print(f"train/val/test: {len(split.train)}/{len(split.val)}/{len(split.test)}")
# Augmented copies stay in the same split as the chunk they came from.
print("first training ids:", split.train[:3])
