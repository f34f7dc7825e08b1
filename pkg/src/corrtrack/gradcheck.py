"""Central finite-difference checks for every hand-written gradient."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .correlation import (
    CorrParams,
    MlpParams,
    correlation_backward,
    correlation_layer,
    correlation_layer_backward,
    spatial_local_correlation,
    temporal_aggregate,
    temporal_aggregate_backward,
)
from .supervision import (
    IdentityMap,
    QuantizedImage,
    balanced_bce_loss,
    colorization_loss,
    make_correlation_labels,
)
from .tensor import FeatureMap

__all__ = ["numeric_grad", "max_relative_error", "run_gradcheck", "COMPONENTS", "TOLERANCE"]

TOLERANCE = 1e-4
STEP = 1e-5

# Test seam: component name -> transform applied to the analytic gradient
# before comparison.  Empty in normal use.
GRADIENT_HOOKS: dict[str, Callable[[np.ndarray], np.ndarray]] = {}


def numeric_grad(fn: Callable[[np.ndarray], float], x: np.ndarray, step: float = STEP) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        orig = x[idx]
        x[idx] = orig + step
        up = fn(x)
        x[idx] = orig - step
        down = fn(x)
        x[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def max_relative_error(analytic, numeric) -> float:
    """Largest absolute discrepancy, relative to the largest gradient magnitude."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-12)
    return float(np.abs(analytic - numeric).max() / scale)


def _pack(*arrays):
    return np.concatenate([np.ravel(a) for a in arrays])


def _unpack(vec, shapes):
    out, start = [], 0
    for shape in shapes:
        size = int(np.prod(shape))
        out.append(vec[start:start + size].reshape(shape))
        start += size
    return out


def _compare(name, loss_fn, x0, analytic, step):
    analytic = GRADIENT_HOOKS.get(name, lambda g: g)(analytic)
    return max_relative_error(analytic, numeric_grad(loss_fn, x0, step))


def check_correlation(rng, p, shape, step=STEP):
    fq, fr = rng.standard_normal(shape), rng.standard_normal(shape)
    up = rng.standard_normal((shape[1], shape[2], p.window))

    def loss(v):
        a, b = _unpack(v, [shape, shape])
        return float(np.sum(spatial_local_correlation(FeatureMap(a), FeatureMap(b), p).values * up))

    dq, dr = correlation_backward(FeatureMap(fq), FeatureMap(fr), p, up)
    return _compare("correlation", loss, _pack(fq, fr), _pack(dq.data, dr.data), step)


def check_fusion(rng, p, shape, step=STEP, kink_margin=1e-3):
    # redraw until no hidden pre-activation sits within reach of the ReLU kink
    while True:
        f = rng.standard_normal(shape)
        mlp = MlpParams.random(p.radius, 4, shape[0], rng)
        vol = spatial_local_correlation(FeatureMap(f), FeatureMap(f), p)
        pre = vol.values.reshape(-1, vol.window) @ mlp.w1.T + mlp.b1
        if np.abs(pre).min() > kink_margin:
            break
    up = rng.standard_normal(shape)
    shapes = [shape, mlp.w1.shape, mlp.b1.shape, mlp.w2.shape, mlp.b2.shape]

    def loss(v):
        a, w1, b1, w2, b2 = _unpack(v, shapes)
        return float(np.sum(correlation_layer(FeatureMap(a), MlpParams(w1, b1, w2, b2), p).data * up))

    df, dm = correlation_layer_backward(FeatureMap(f), mlp, p, up)
    x0 = _pack(f, mlp.w1, mlp.b1, mlp.w2, mlp.b2)
    return _compare("fusion", loss, x0, _pack(df, dm.w1, dm.b1, dm.w2, dm.b2), step)


def check_aggregation(rng, p, shape, step=STEP):
    fq, fr = rng.standard_normal(shape), rng.standard_normal(shape)
    up = rng.standard_normal(shape)

    def loss(v):
        a, b = _unpack(v, [shape, shape])
        return float(np.sum(temporal_aggregate(FeatureMap(a), FeatureMap(b), p).data * up))

    dq, dr = temporal_aggregate_backward(FeatureMap(fq), FeatureMap(fr), p, up)
    return _compare("aggregation", loss, _pack(fq, fr), _pack(dq.data, dr.data), step)


def check_balanced_bce(rng, p, shape, step=STEP):
    _, h, w = shape
    fq, fr = rng.standard_normal(shape), rng.standard_normal(shape)
    yq = IdentityMap(rng.integers(-1, 3, size=(h, w)))
    yr = IdentityMap(rng.integers(-1, 3, size=(h, w)))
    labels = make_correlation_labels(yq, yr, p)

    def loss(v):
        a, b = _unpack(v, [shape, shape])
        return balanced_bce_loss(spatial_local_correlation(FeatureMap(a), FeatureMap(b), p), labels)[0]

    q, r = FeatureMap(fq), FeatureMap(fr)
    _, gvol = balanced_bce_loss(spatial_local_correlation(q, r, p), labels)
    dq, dr = correlation_backward(q, r, p, gvol)
    return _compare("balanced_bce", loss, _pack(fq, fr), _pack(dq.data, dr.data), step)


def check_colorization(rng, p, shape, step=STEP, classes=8):
    _, h, w = shape
    fq, fr = rng.standard_normal(shape), rng.standard_normal(shape)
    ref = QuantizedImage(rng.integers(0, classes, size=(h, w)), classes)
    target = QuantizedImage(rng.integers(0, classes, size=(h, w)), classes)

    def loss(v):
        a, b = _unpack(v, [shape, shape])
        return colorization_loss(spatial_local_correlation(FeatureMap(a), FeatureMap(b), p), ref, target)[0]

    q, r = FeatureMap(fq), FeatureMap(fr)
    _, gvol = colorization_loss(spatial_local_correlation(q, r, p), ref, target)
    dq, dr = correlation_backward(q, r, p, gvol)
    return _compare("colorization", loss, _pack(fq, fr), _pack(dq.data, dr.data), step)


COMPONENTS = {
    "correlation": check_correlation,
    "fusion": check_fusion,
    "aggregation": check_aggregation,
    "balanced_bce": check_balanced_bce,
    "colorization": check_colorization,
}


def run_gradcheck(seed: int = 0, radius: int = 1, dilation: int = 1, size: int = 4,
                  channels: int = 2, levels: int = 1, step: float = STEP) -> dict[str, float]:
    """Max relative error per component on seeded random instances.

    With ``levels > 1`` each component is also checked at the coarser
    pyramid resolutions ``ceil(size / 2**l)`` and the worst error is kept.
    """
    p = CorrParams(radius, dilation)
    results = {}
    for k, (name, check) in enumerate(COMPONENTS.items()):
        worst = 0.0
        for l in range(levels):
            side = -(-size // 2**l)
            rng = np.random.default_rng([seed, k, l])
            worst = max(worst, check(rng, p, (channels, side, side), step))
        results[name] = worst
    return results
