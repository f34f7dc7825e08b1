# %% [markdown]
# # Pyramid propagation and temporal memory
#
# Coarse levels are pushed down into finer ones through a 1x1 convolution.
# Past frames sit in a small FIFO memory and contribute correlation-weighted
# copies of their features to the current frame.

# %%
import numpy as np

from corrtrack.correlation import CorrParams, FrameMemory, pyramid_propagate, temporal_aggregate_memory
from corrtrack.tensor import FeatureMap, FeaturePyramid, map_new

# %% [markdown]
# A two-level hand example: a coarse 1x1 map holding 2 and a fine 2x2 map of
# ones.  With an identity lateral, every fine pixel becomes 1 + 2.

# %%
out = pyramid_propagate([map_new(1, 2, 2, 1.0), FeatureMap([[[2.0]]])], [(np.eye(1), np.zeros(1))])
print(out[0].data[0])

# %% [markdown]
# Odd sizes halve by rounding up (5 -> 3 -> 2); the upsampled coarse map is
# cropped back to the finer size.

# %%
rng = np.random.default_rng(1)
levels = [FeatureMap(rng.standard_normal(s)) for s in [(3, 5, 5), (3, 3, 3), (3, 2, 2)]]
lateral = [(rng.standard_normal((3, 3)) * 0.1, np.zeros(3))] * 2
print([lvl.shape for lvl in pyramid_propagate(levels, lateral)])

# %% [markdown]
# The memory keeps the five most recent pyramids.  Pushing six frames drops
# the first one.

# %%
memory = FrameMemory(capacity=5)
for t in range(6):
    memory.push(FeaturePyramid(tuple(FeatureMap(rng.standard_normal(l.shape)) for l in levels)))
print("frames held:", len(memory))

current = FeaturePyramid(tuple(levels))
enhanced = temporal_aggregate_memory(current, memory, CorrParams(radius=1, dilation=1))
for before, after in zip(current, enhanced):
    print(f"level {before.shape}: mean change {np.abs(after.data - before.data).mean():.3f}")
