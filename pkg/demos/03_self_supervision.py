# %% [markdown]
# # Training signals on correlation volumes
#
# Two losses are available.  Identity labels say which displacements land on
# the same object; a class-balanced cross-entropy pushes those entries up and
# the rest down.  Without identities, colors from a reference frame can be
# propagated through the volume and scored against the query frame's colors.

# %%
import numpy as np

from corrtrack.correlation import CorrelationVolume, CorrParams, correlation_backward, spatial_local_correlation
from corrtrack.supervision import (
    IdentityMap,
    balanced_bce_loss,
    colorization_loss,
    make_correlation_labels,
    quantize_colors,
)
from corrtrack.tensor import FeatureMap

rng = np.random.default_rng(3)
p = CorrParams(radius=1, dilation=1)

# %% [markdown]
# Two objects (ids 1 and 2) on a background of -1; the second frame moves the
# scene one pixel to the right.

# %%
ids = np.full((6, 6), -1)
ids[1:3, 1:3] = 1
ids[3:5, 3:5] = 2
labels = make_correlation_labels(IdentityMap(ids), IdentityMap(np.roll(ids, 1, axis=1)), p)
print("positives", int((labels.labels == 1).sum()), "negatives", int((labels.labels == 0).sum()))

# %% [markdown]
# A few steps of plain gradient descent on random features drive the balanced
# loss down.  Gradients flow from the volume back to both feature maps.

# %%
fq, fr = rng.standard_normal((2, 8, 6, 6)) * 0.3
for step in range(30):
    q, r = FeatureMap(fq), FeatureMap(fr)
    loss, gvol = balanced_bce_loss(spatial_local_correlation(q, r, p), labels)
    dq, dr = correlation_backward(q, r, p, gvol)
    fq -= 2.0 * dq.data
    fr -= 2.0 * dr.data
    if step % 10 == 0:
        print(f"step {step:2d}: balanced BCE {loss:.4f}")

# %% [markdown]
# Colorization: quantize two random images into 8 classes and score a volume
# that only looks at the same pixel.  The reference colors are copied exactly,
# so the loss is lowest where query and reference colors agree.

# %%
img_r = FeatureMap(rng.random((3, 6, 6)))
img_q = FeatureMap(rng.random((3, 6, 6)))
ref, target = quantize_colors(img_r, 2), quantize_colors(img_q, 2)
centre = np.zeros((6, 6, 9))
centre[:, :, 4] = 9.0 * 4
vol = CorrelationVolume(centre, 1)
print("loss vs itself:", round(colorization_loss(vol, ref, ref)[0], 4))
print("loss vs another image:", round(colorization_loss(vol, ref, target)[0], 4))
print("zero volume (uniform guess, ln 8):", round(colorization_loss(CorrelationVolume(np.zeros((6, 6, 9)), 1), ref, target)[0], 4))
