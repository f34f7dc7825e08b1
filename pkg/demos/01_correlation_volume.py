# %% [markdown]
# # Local correlation volumes
#
# A correlation volume stores, for every query pixel, the inner products with
# reference features at a small grid of displacements.  This script builds one
# by hand, shows how dilation spreads the samples without changing the shape,
# and checks the result against the dense all-pairs volume.

# %%
import numpy as np

from corrtrack.correlation import CorrParams, displacements, nonlocal_reference, spatial_local_correlation
from corrtrack.tensor import FeatureMap

rng = np.random.default_rng(0)
query = FeatureMap(rng.standard_normal((4, 6, 6)))
ref = FeatureMap(rng.standard_normal((4, 6, 6)))

# %% [markdown]
# With radius 1 there are nine displacements, listed row-major from (-1, -1).

# %%
print(displacements(1))
vol = spatial_local_correlation(query, ref, CorrParams(radius=1, dilation=1))
print("volume shape:", vol.values.shape)

y, x = 2, 3
by_hand = [query.data[:, y, x] @ ref.data[:, y + dy, x + dx] for dy, dx in displacements(1)]
print("pixel (2, 3) matches hand dot products:", np.allclose(vol.values[y, x], by_hand))

# %% [markdown]
# Dilation multiplies every displacement.  The volume keeps its shape; more of
# the samples fall outside the map and read as zero.

# %%
for d in (1, 2, 3):
    v = spatial_local_correlation(query, ref, CorrParams(radius=1, dilation=d))
    print(f"dilation {d}: shape {v.values.shape}, in-bounds samples {int(v.in_bounds_mask().sum())}")

# %% [markdown]
# Once the radius covers the whole map, the local volume is a rearrangement of
# the dense all-pairs matrix.

# %%
r = 6
local = spatial_local_correlation(query, query, CorrParams(radius=r, dilation=1)).values
dense = nonlocal_reference(query)
side = 2 * r + 1
same = all(
    local[y, x, (y2 - y + r) * side + (x2 - x + r)] == dense[y * 6 + x, y2 * 6 + x2]
    for y in range(6) for x in range(6) for y2 in range(6) for x2 in range(6)
)
print("local volume with full cover equals the dense matrix:", same)
