"""Dense feature maps and pyramids.

A :class:`FeatureMap` wraps a read-only ``float64`` array of shape
``(channels, height, width)``.  Because the array is C-contiguous, its flat
buffer uses the channel-major layout ``c*H*W + y*W + x`` that the
correlation kernels rely on.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BoundsError, InvalidShapeError, PyramidShapeError

__all__ = [
    "FeatureMap",
    "FeaturePyramid",
    "map_new",
    "feature_at",
    "upsample_nearest2x",
    "conv1x1",
]


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Immutable ``C x H x W`` activation grid."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64, copy=True, order="C")
        if arr.ndim != 3:
            raise InvalidShapeError(f"feature map needs 3 dims (C, H, W), got shape {arr.shape}")
        if min(arr.shape) < 1:
            raise InvalidShapeError(f"all dimensions must be >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidShapeError("feature map contains NaN or Inf")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_flat(cls, values: Sequence[float], channels: int, height: int, width: int) -> FeatureMap:
        values = np.asarray(values, dtype=np.float64)
        if values.size != channels * height * width:
            raise InvalidShapeError(
                f"expected {channels * height * width} values, got {values.size}"
            )
        return cls(values.reshape(channels, height, width))

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape

    @property
    def flat(self) -> np.ndarray:
        return self.data.reshape(-1)

    def __repr__(self):
        return f"FeatureMap(channels={self.channels}, height={self.height}, width={self.width})"


@dataclass(frozen=True, eq=False)
class FeaturePyramid:
    """Feature maps ordered finest (level 0) to coarsest."""

    levels: tuple[FeatureMap, ...]

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise PyramidShapeError("pyramid needs at least one level")
        for fine, coarse in zip(levels, levels[1:]):
            want = (-(-fine.height // 2), -(-fine.width // 2))
            if (coarse.height, coarse.width) != want:
                raise PyramidShapeError(
                    f"level of size {coarse.height}x{coarse.width} does not halve "
                    f"{fine.height}x{fine.width} (expected {want[0]}x{want[1]})"
                )
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)

    def __getitem__(self, idx):
        return self.levels[idx]

    def __iter__(self):
        return iter(self.levels)

    @property
    def shapes(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(lvl.shape for lvl in self.levels)


def map_new(channels: int, height: int, width: int, fill: float = 0.0) -> FeatureMap:
    if min(channels, height, width) < 1:
        raise InvalidShapeError(f"all dimensions must be >= 1, got ({channels}, {height}, {width})")
    return FeatureMap(np.full((channels, height, width), float(fill)))


def feature_at(fmap: FeatureMap, x: int, y: int) -> np.ndarray:
    """Channel vector at column ``x``, row ``y``."""
    if not (0 <= x < fmap.width and 0 <= y < fmap.height):
        raise BoundsError(f"({x}, {y}) outside {fmap.width}x{fmap.height} map")
    return fmap.data[:, y, x].copy()


def upsample_nearest2x(fmap: FeatureMap) -> FeatureMap:
    return FeatureMap(np.repeat(np.repeat(fmap.data, 2, axis=1), 2, axis=2))


def conv1x1(fmap: FeatureMap, weights, bias) -> FeatureMap:
    """Per-pixel affine map ``weights @ v + bias`` of the channel vector."""
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if weights.ndim != 2 or weights.shape[1] != fmap.channels:
        raise InvalidShapeError(
            f"weights of shape {weights.shape} do not accept {fmap.channels} input channels"
        )
    if bias.shape != (weights.shape[0],):
        raise InvalidShapeError(f"bias shape {bias.shape} != ({weights.shape[0]},)")
    c, h, w = fmap.shape
    out = weights @ fmap.data.reshape(c, h * w) + bias[:, None]
    return FeatureMap(out.reshape(-1, h, w))
