"""Local correlation volumes, fusion, pyramid propagation and temporal aggregation.

Displacements are enumerated row-major over ``dy`` then ``dx`` in
``[-R, R]``; displacement ``k = (dy + R) * (2R + 1) + (dx + R)`` samples the
reference map at ``(x + D*dx, y + D*dy)``.  Reads that fall outside the map
contribute zero everywhere.

Channel reductions are written as explicit sequential accumulations
(``acc = q[0]*r[0]; acc += q[1]*r[1]; ...``) rather than ``einsum`` or BLAS
so that results are bit-identical to straightforward loop implementations.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, Sequence

import numpy as np

from .errors import (
    EmptyMemoryError,
    InvalidArgumentError,
    InvalidShapeError,
    MemoryShapeError,
    PyramidShapeError,
)
from .tensor import FeatureMap, FeaturePyramid, conv1x1, upsample_nearest2x

__all__ = [
    "CorrParams",
    "CorrelationVolume",
    "MlpParams",
    "FrameMemory",
    "FlopsReport",
    "displacements",
    "spatial_local_correlation",
    "correlation_backward",
    "fuse_correlation",
    "fuse_correlation_backward",
    "correlation_layer",
    "correlation_layer_backward",
    "pyramid_propagate",
    "temporal_aggregate",
    "temporal_aggregate_backward",
    "memory_push",
    "temporal_aggregate_memory",
    "nonlocal_reference",
    "flops_local_correlation",
    "flops_nonlocal",
    "flops_ratio",
    "caption_ratio",
]


@dataclass(frozen=True)
class CorrParams:
    """Search window radius ``R``, dilation ``D`` and pyramid level."""

    radius: int = 5
    dilation: int = 2
    level: int = 0

    def __post_init__(self):
        if self.radius < 0:
            raise InvalidArgumentError(f"radius must be >= 0, got {self.radius}")
        if self.dilation < 1:
            raise InvalidArgumentError(f"dilation must be >= 1, got {self.dilation}")
        if self.level < 0:
            raise InvalidArgumentError(f"level must be >= 0, got {self.level}")

    @property
    def window(self) -> int:
        """Number of displacements, ``(2R+1)**2``."""
        return (2 * self.radius + 1) ** 2


def displacements(radius: int) -> list[tuple[int, int]]:
    """``(dy, dx)`` pairs in volume order."""
    span = range(-radius, radius + 1)
    return [(dy, dx) for dy in span for dx in span]


def _overlap(n: int, off: int) -> tuple[int, int]:
    # query index range [lo, hi) whose displaced index stays inside [0, n)
    return max(0, -off), min(n, n - off)


def _windows(h: int, w: int, radius: int, dilation: int):
    """Yield ``(k, query_slice, ref_slice)`` for every displacement with a non-empty overlap."""
    for k, (dy, dx) in enumerate(displacements(radius)):
        oy, ox = dilation * dy, dilation * dx
        ylo, yhi = _overlap(h, oy)
        xlo, xhi = _overlap(w, ox)
        if ylo >= yhi or xlo >= xhi:
            continue
        yield (
            k,
            (slice(ylo, yhi), slice(xlo, xhi)),
            (slice(ylo + oy, yhi + oy), slice(xlo + ox, xhi + ox)),
        )


def _channel_dot(q: np.ndarray, r: np.ndarray) -> np.ndarray:
    acc = q[0] * r[0]
    for c in range(1, q.shape[0]):
        acc = acc + q[c] * r[c]
    return acc


def _local_corr(q: np.ndarray, r: np.ndarray, radius: int, dilation: int) -> np.ndarray:
    _, h, w = q.shape
    out = np.zeros((h, w, (2 * radius + 1) ** 2), dtype=q.dtype)
    for k, qs, rs in _windows(h, w, radius, dilation):
        out[qs + (k,)] = _channel_dot(q[(slice(None),) + qs], r[(slice(None),) + rs])
    return out


def _nonlocal(x: np.ndarray) -> np.ndarray:
    flat = x.reshape(x.shape[0], -1)
    out = np.multiply.outer(flat[0], flat[0])
    if flat.shape[0] > 1:
        tmp = np.empty_like(out)
        for c in range(1, flat.shape[0]):
            np.multiply.outer(flat[c], flat[c], out=tmp)
            out += tmp
    return out


@dataclass(frozen=True, eq=False)
class CorrelationVolume:
    """``H x W x (2R+1)^2`` local match scores."""

    values: np.ndarray
    radius: int
    dilation: int = 1

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        k = (2 * self.radius + 1) ** 2
        if vals.ndim != 3 or vals.shape[2] != k:
            raise InvalidShapeError(f"volume shape {vals.shape} incompatible with radius {self.radius}")
        if self.dilation < 1:
            raise InvalidArgumentError(f"dilation must be >= 1, got {self.dilation}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def window(self) -> int:
        return self.values.shape[2]

    @property
    def params(self) -> CorrParams:
        return CorrParams(self.radius, self.dilation)

    def in_bounds_mask(self) -> np.ndarray:
        """Boolean ``H x W x K`` mask of displacements that land inside the map."""
        mask = np.zeros(self.values.shape, dtype=bool)
        for k, qs, _ in _windows(self.height, self.width, self.radius, self.dilation):
            mask[qs + (k,)] = True
        return mask


def _check_same(a: FeatureMap, b: FeatureMap):
    if a.shape != b.shape:
        raise InvalidShapeError(f"feature maps differ in shape: {a.shape} vs {b.shape}")


def _grad_array(dvol, shape) -> np.ndarray:
    g = dvol.values if isinstance(dvol, CorrelationVolume) else np.asarray(dvol, dtype=np.float64)
    if g.shape != shape:
        raise InvalidShapeError(f"gradient of shape {g.shape} does not match volume shape {shape}")
    return g


def spatial_local_correlation(fq: FeatureMap, fr: FeatureMap, p: CorrParams) -> CorrelationVolume:
    """Inner products of each query feature with reference features in its dilated window."""
    _check_same(fq, fr)
    return CorrelationVolume(_local_corr(fq.data, fr.data, p.radius, p.dilation), p.radius, p.dilation)


def correlation_backward(fq: FeatureMap, fr: FeatureMap, p: CorrParams, dvol):
    """Adjoint of :func:`spatial_local_correlation`.

    Returns ``(dfq, dfr)`` given the upstream gradient ``dvol`` (a volume or an
    ``H x W x K`` array).
    """
    _check_same(fq, fr)
    _, h, w = fq.shape
    g = _grad_array(dvol, (h, w, p.window))
    dfq = np.zeros(fq.shape)
    dfr = np.zeros(fr.shape)
    every = slice(None)
    for k, qs, rs in _windows(h, w, p.radius, p.dilation):
        gk = g[qs + (k,)]
        dfq[(every,) + qs] += gk * fr.data[(every,) + rs]
        dfr[(every,) + rs] += gk * fq.data[(every,) + qs]
    return FeatureMap(dfq), FeatureMap(dfr)


@dataclass(frozen=True, eq=False)
class MlpParams:
    """Two-layer per-pixel MLP ``w2 @ relu(w1 @ c + b1) + b2``."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        for name in ("w1", "b1", "w2", "b2"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        ci, _ = self.w1.shape
        co = self.w2.shape[0]
        if self.b1.shape != (ci,) or self.w2.shape != (co, ci) or self.b2.shape != (co,):
            raise InvalidShapeError(
                f"inconsistent MLP shapes w1={self.w1.shape} b1={self.b1.shape} "
                f"w2={self.w2.shape} b2={self.b2.shape}"
            )

    @classmethod
    def zeros(cls, radius: int, c_inter: int, c_out: int) -> MlpParams:
        k = (2 * radius + 1) ** 2
        return cls(np.zeros((c_inter, k)), np.zeros(c_inter), np.zeros((c_out, c_inter)), np.zeros(c_out))

    @classmethod
    def random(cls, radius: int, c_inter: int, c_out: int, rng: np.random.Generator, scale: float = 0.5):
        k = (2 * radius + 1) ** 2
        return cls(
            scale * rng.standard_normal((c_inter, k)),
            scale * rng.standard_normal(c_inter),
            scale * rng.standard_normal((c_out, c_inter)),
            scale * rng.standard_normal(c_out),
        )

    @property
    def window(self) -> int:
        return self.w1.shape[1]

    @property
    def c_inter(self) -> int:
        return self.w1.shape[0]

    @property
    def c_out(self) -> int:
        return self.w2.shape[0]

    @property
    def n_params(self) -> int:
        return self.w1.size + self.b1.size + self.w2.size + self.b2.size


def _mlp_forward(vol: CorrelationVolume, mlp: MlpParams):
    c = vol.values.reshape(-1, vol.window)
    pre = c @ mlp.w1.T + mlp.b1
    hidden = np.maximum(pre, 0.0)
    out = hidden @ mlp.w2.T + mlp.b2
    return c, pre, hidden, out


def _check_fusion(f: FeatureMap, vol: CorrelationVolume, mlp: MlpParams):
    if mlp.c_out != f.channels:
        raise InvalidShapeError(f"MLP emits {mlp.c_out} channels, features have {f.channels}")
    if mlp.window != vol.window:
        raise InvalidShapeError(f"MLP expects {mlp.window} correlation inputs, volume has {vol.window}")
    if (vol.height, vol.width) != (f.height, f.width):
        raise InvalidShapeError(
            f"volume is {vol.height}x{vol.width}, features are {f.height}x{f.width}"
        )


def fuse_correlation(f: FeatureMap, vol: CorrelationVolume, mlp: MlpParams) -> FeatureMap:
    """Residual fusion ``f + MLP(vol)`` applied independently at each pixel."""
    _check_fusion(f, vol, mlp)
    *_, out = _mlp_forward(vol, mlp)
    return FeatureMap(f.data + out.T.reshape(f.shape))


def fuse_correlation_backward(f: FeatureMap, vol: CorrelationVolume, mlp: MlpParams, dout):
    """Gradients of :func:`fuse_correlation`.

    Returns ``(df, dvol, dmlp)`` where ``dvol`` is an ``H x W x K`` array and
    ``dmlp`` is an :class:`MlpParams` holding parameter gradients.
    """
    _check_fusion(f, vol, mlp)
    dout = dout.data if isinstance(dout, FeatureMap) else np.asarray(dout, dtype=np.float64)
    if dout.shape != f.shape:
        raise InvalidShapeError(f"upstream gradient {dout.shape} != feature shape {f.shape}")
    c, pre, hidden, _ = _mlp_forward(vol, mlp)
    g = dout.reshape(f.channels, -1).T
    dhidden = g @ mlp.w2
    dpre = dhidden * (pre > 0)
    dc = dpre @ mlp.w1
    dmlp = MlpParams(dpre.T @ c, dpre.sum(axis=0), g.T @ hidden, g.sum(axis=0))
    return dout.copy(), dc.reshape(vol.values.shape), dmlp


def correlation_layer(f: FeatureMap, mlp: MlpParams, p: CorrParams) -> FeatureMap:
    """Self-correlation followed by residual MLP fusion on one pyramid level."""
    return fuse_correlation(f, spatial_local_correlation(f, f, p), mlp)


def correlation_layer_backward(f: FeatureMap, mlp: MlpParams, p: CorrParams, dout):
    """Returns ``(df, dmlp)`` for :func:`correlation_layer`."""
    vol = spatial_local_correlation(f, f, p)
    df, dvol, dmlp = fuse_correlation_backward(f, vol, mlp, dout)
    dq, dr = correlation_backward(f, f, p, dvol)
    return df + dq.data + dr.data, dmlp


def _crop_to(up: FeatureMap, fine: FeatureMap, level: int) -> FeatureMap:
    h, w = fine.height, fine.width
    if -(-h // 2) * 2 != up.height or -(-w // 2) * 2 != up.width:
        raise PyramidShapeError(
            f"level {level + 1} upsamples to {up.height}x{up.width}, "
            f"which does not cover level {level} of size {h}x{w}"
        )
    if (up.height, up.width) == (h, w):
        return up
    return FeatureMap(up.data[:, :h, :w])


def pyramid_propagate(levels: Sequence[FeatureMap], lateral: Sequence) -> list[FeatureMap]:
    """Top-down pass: ``out[l-1] = conv(upsample(out[l])) + levels[l-1]``.

    ``levels`` is ordered finest first.  ``lateral[l]`` is the ``(weights,
    bias)`` pair of the 1x1 convolution applied to the upsampled level
    ``l + 1`` before adding it to level ``l``.  The coarsest level is returned
    unchanged.
    """
    levels = list(levels)
    if not levels:
        return []
    if len(lateral) != len(levels) - 1:
        raise PyramidShapeError(f"need {len(levels) - 1} lateral convolutions, got {len(lateral)}")
    out = [None] * len(levels)
    out[-1] = levels[-1]
    for l in range(len(levels) - 1, 0, -1):
        fine = levels[l - 1]
        up = _crop_to(upsample_nearest2x(out[l]), fine, l - 1)
        weights, bias = lateral[l - 1]
        try:
            lat = conv1x1(up, weights, bias)
        except InvalidShapeError as exc:
            raise PyramidShapeError(f"lateral convolution {l - 1}: {exc}") from exc
        if lat.channels != fine.channels:
            raise PyramidShapeError(
                f"lateral convolution {l - 1} emits {lat.channels} channels, level has {fine.channels}"
            )
        out[l - 1] = FeatureMap(lat.data + fine.data)
    return out


def temporal_aggregate(fq: FeatureMap, fr: FeatureMap, p: CorrParams, embed=None) -> FeatureMap:
    """Correlation-weighted sum of reference features around each query pixel.

    Weights are raw inner products divided by the constant ``(2R+1)**2``.
    ``embed``, when given, is a pair ``((wq, bq), (wr, br))`` of 1x1
    projections applied to the query and reference before correlating; the
    aggregated values are always the raw reference features.
    """
    _check_same(fq, fr)
    if embed is not None:
        (wq, bq), (wr, br) = embed
        vol = spatial_local_correlation(conv1x1(fq, wq, bq), conv1x1(fr, wr, br), p)
    else:
        vol = spatial_local_correlation(fq, fr, p)
    n = p.window
    _, h, w = fr.shape
    out = np.zeros(fr.shape)
    every = slice(None)
    for k, qs, rs in _windows(h, w, p.radius, p.dilation):
        weight = vol.values[qs + (k,)] / n
        out[(every,) + qs] += weight * fr.data[(every,) + rs]
    return FeatureMap(out)


def temporal_aggregate_backward(fq: FeatureMap, fr: FeatureMap, p: CorrParams, dout):
    """Returns ``(dfq, dfr)`` for :func:`temporal_aggregate` without embeddings."""
    _check_same(fq, fr)
    g = dout.data if isinstance(dout, FeatureMap) else np.asarray(dout, dtype=np.float64)
    if g.shape != fq.shape:
        raise InvalidShapeError(f"upstream gradient {g.shape} != feature shape {fq.shape}")
    n = p.window
    _, h, w = fq.shape
    vol = _local_corr(fq.data, fr.data, p.radius, p.dilation)
    dvol = np.zeros_like(vol)
    dfr = np.zeros(fr.shape)
    every = slice(None)
    for k, qs, rs in _windows(h, w, p.radius, p.dilation):
        gq = g[(every,) + qs]
        dvol[qs + (k,)] = _channel_dot(gq, fr.data[(every,) + rs]) / n
        dfr[(every,) + rs] += (vol[qs + (k,)] / n) * gq
    dq, dr = correlation_backward(fq, fr, p, dvol)
    return dq, FeatureMap(dfr + dr.data)


class FrameMemory:
    """FIFO of recent feature pyramids used as temporal references.

    The first pushed pyramid fixes the per-level shapes; later pushes must
    match.  Single writer; readers may iterate between pushes.
    """

    def __init__(self, capacity: int = 5):
        if capacity < 1:
            raise InvalidArgumentError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._frames: deque[FeaturePyramid] = deque(maxlen=capacity)
        self._shapes = None

    def push(self, frame) -> FrameMemory:
        if isinstance(frame, FeatureMap):
            frame = FeaturePyramid((frame,))
        elif not isinstance(frame, FeaturePyramid):
            frame = FeaturePyramid(tuple(frame))
        if self._shapes is None:
            self._shapes = frame.shapes
        elif frame.shapes != self._shapes:
            raise MemoryShapeError(f"pyramid shapes {frame.shapes} != memory shapes {self._shapes}")
        self._frames.append(frame)
        return self

    @property
    def frames(self) -> tuple[FeaturePyramid, ...]:
        return tuple(self._frames)

    @property
    def shapes(self):
        return self._shapes

    def __len__(self):
        return len(self._frames)

    def __iter__(self) -> Iterator[FeaturePyramid]:
        return iter(tuple(self._frames))

    def __repr__(self):
        return f"FrameMemory(capacity={self.capacity}, frames={len(self)})"


def memory_push(mem: FrameMemory, frame) -> FrameMemory:
    return mem.push(frame)


def temporal_aggregate_memory(fq, mem: FrameMemory, p: CorrParams) -> FeaturePyramid:
    """Add the mean single-frame aggregate over all memory frames to each query level."""
    if isinstance(fq, FeatureMap):
        fq = FeaturePyramid((fq,))
    if len(mem) == 0:
        raise EmptyMemoryError("frame memory is empty")
    if fq.shapes != mem.shapes:
        raise MemoryShapeError(f"query shapes {fq.shapes} != memory shapes {mem.shapes}")
    frames = mem.frames
    out = []
    for l, level in enumerate(fq.levels):
        acc = temporal_aggregate(level, frames[0][l], p).data.copy()
        for frame in frames[1:]:
            acc += temporal_aggregate(level, frame[l], p).data
        out.append(FeatureMap(level.data + acc / len(frames)))
    return FeaturePyramid(tuple(out))


def nonlocal_reference(f: FeatureMap) -> np.ndarray:
    """Dense ``HW x HW`` self-correlation; entry ``(i, j)`` pairs flat positions ``y*W + x``."""
    return _nonlocal(f.data)


@dataclass(frozen=True)
class FlopsReport:
    operator: str
    params: int
    flops: int
    inputs: dict = field(default_factory=dict)


def _require_positive(**counts):
    for name, value in counts.items():
        if int(value) != value or value < 1:
            raise InvalidArgumentError(f"{name} must be a positive integer, got {value}")


def flops_local_correlation(cin: int, cinter: int, frames: int, h: int, w: int, r: int) -> FlopsReport:
    """Multiply-accumulate count and parameter count of the local correlation operator."""
    _require_positive(cin=cin, cinter=cinter, frames=frames, h=h, w=w)
    if int(r) != r or r < 0:
        raise InvalidArgumentError(f"r must be a non-negative integer, got {r}")
    window = (2 * r + 1) ** 2
    return FlopsReport(
        "local_correlation",
        params=cin * cinter * 2 + window * cin,
        flops=cinter * window * h * w * frames,
        inputs=dict(cin=cin, cinter=cinter, frames=frames, h=h, w=w, r=r),
    )


def flops_nonlocal(cin: int, cinter: int, frames: int, h: int, w: int) -> FlopsReport:
    _require_positive(cin=cin, cinter=cinter, frames=frames, h=h, w=w)
    return FlopsReport(
        "non_local",
        params=cin * cinter * 4,
        flops=cinter * (h * w) ** 2 * frames,
        inputs=dict(cin=cin, cinter=cinter, frames=frames, h=h, w=w),
    )


def flops_ratio(h: int, w: int, r: int) -> Fraction:
    """Exact non-local / local FLOPs quotient, ``H*W / (2R+1)^2``."""
    return Fraction(h * w, (2 * r + 1) ** 2)


def caption_ratio(h: int, w: int, r: int) -> Fraction | None:
    """The looser ``H*W / R^2`` estimate; ``None`` when ``r == 0``."""
    return Fraction(h * w, r * r) if r else None
