"""Training signals on correlation volumes: identity labels, balanced BCE, colorization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit, log_softmax

from .correlation import CorrelationVolume, CorrParams, _windows
from .errors import ClassMismatchError, InvalidArgumentError, InvalidShapeError, RangeError
from .tensor import FeatureMap

__all__ = [
    "IdentityMap",
    "LabelVolume",
    "QuantizedImage",
    "make_correlation_labels",
    "balanced_bce_loss",
    "quantize_colors",
    "colorization_scores",
    "colorization_loss",
    "pyramid_label_loss",
]


@dataclass(frozen=True, eq=False)
class IdentityMap:
    """Per-pixel object identity; negative values mark background."""

    ids: np.ndarray

    def __post_init__(self):
        ids = np.array(self.ids, dtype=np.int64)
        if ids.ndim != 2 or min(ids.shape) < 1:
            raise InvalidShapeError(f"identity map must be a non-empty 2-d grid, got {ids.shape}")
        ids.flags.writeable = False
        object.__setattr__(self, "ids", ids)

    @property
    def height(self):
        return self.ids.shape[0]

    @property
    def width(self):
        return self.ids.shape[1]


@dataclass(frozen=True, eq=False)
class LabelVolume:
    """Targets in {-1, 0, 1} laid out like a :class:`CorrelationVolume`; -1 is ignored."""

    labels: np.ndarray
    radius: int
    dilation: int = 1

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int8)
        if labels.ndim != 3 or labels.shape[2] != (2 * self.radius + 1) ** 2:
            raise InvalidShapeError(f"label shape {labels.shape} incompatible with radius {self.radius}")
        if not np.isin(labels, (-1, 0, 1)).all():
            raise RangeError("labels must lie in {-1, 0, 1}")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def height(self):
        return self.labels.shape[0]

    @property
    def width(self):
        return self.labels.shape[1]


@dataclass(frozen=True, eq=False)
class QuantizedImage:
    class_map: np.ndarray
    classes: int

    def __post_init__(self):
        cm = np.array(self.class_map, dtype=np.int64)
        if cm.ndim != 2:
            raise InvalidShapeError(f"class map must be 2-d, got {cm.shape}")
        if self.classes < 1 or cm.min() < 0 or cm.max() >= self.classes:
            raise RangeError(f"class indices must lie in [0, {self.classes})")
        cm.flags.writeable = False
        object.__setattr__(self, "class_map", cm)

    @property
    def height(self):
        return self.class_map.shape[0]

    @property
    def width(self):
        return self.class_map.shape[1]


def make_correlation_labels(yq: IdentityMap, yr: IdentityMap, p: CorrParams) -> LabelVolume:
    """1 where the displaced reference pixel carries the query's identity, 0 where it
    differs, -1 where the query pixel is background or the displacement leaves the map."""
    if yq.ids.shape != yr.ids.shape:
        raise InvalidShapeError(f"identity maps differ in shape: {yq.ids.shape} vs {yr.ids.shape}")
    h, w = yq.ids.shape
    labels = np.full((h, w, p.window), -1, dtype=np.int8)
    for k, qs, rs in _windows(h, w, p.radius, p.dilation):
        q = yq.ids[qs]
        lab = (q == yr.ids[rs]).astype(np.int8)
        lab[q < 0] = -1
        labels[qs + (k,)] = lab
    return LabelVolume(labels, p.radius, p.dilation)


def balanced_bce_loss(vol: CorrelationVolume, labels: LabelVolume):
    """Class-balanced binary cross-entropy with volume entries as logits.

    Positives and negatives each carry half of the total weight, spread
    evenly over their members.  Returns ``(loss, grad)`` with ``grad`` shaped
    like ``vol.values``.
    """
    x = vol.values
    y = labels.labels
    if x.shape != y.shape:
        raise InvalidShapeError(f"volume {x.shape} and labels {y.shape} differ")
    pos = y == 1
    neg = y == 0
    n_pos, n_neg = int(pos.sum()), int(neg.sum())
    weight = np.zeros_like(x)
    if n_pos:
        weight[pos] = 0.5 / n_pos
    if n_neg:
        weight[neg] = 0.5 / n_neg
    # -log(sigmoid(x)) = logaddexp(0, -x); -log(1 - sigmoid(x)) = logaddexp(0, x)
    per_entry = np.where(pos, np.logaddexp(0.0, -x), np.logaddexp(0.0, x))
    loss = float(np.sum(weight * per_entry))
    grad = weight * (expit(x) - pos)
    return loss, grad


def quantize_colors(image: FeatureMap, k_per_channel: int = 4) -> QuantizedImage:
    """Uniform RGB binning into ``k**3`` classes; channel ``c`` contributes ``bin * k**c``."""
    if k_per_channel < 1:
        raise InvalidArgumentError(f"k_per_channel must be >= 1, got {k_per_channel}")
    if image.channels != 3:
        raise InvalidShapeError(f"expected a 3-channel image, got {image.channels}")
    v = image.data
    if v.min() < 0.0 or v.max() > 1.0:
        raise RangeError("pixel values must lie in [0, 1]")
    k = k_per_channel
    bins = np.minimum(np.floor(v * k).astype(np.int64), k - 1)
    cls = bins[0] + bins[1] * k + bins[2] * k * k
    return QuantizedImage(cls, k**3)


def _check_color_inputs(vol: CorrelationVolume, ref: QuantizedImage):
    if (vol.height, vol.width) != ref.class_map.shape:
        raise InvalidShapeError(
            f"volume is {vol.height}x{vol.width}, reference image is {ref.height}x{ref.width}"
        )


def colorization_scores(vol: CorrelationVolume, ref: QuantizedImage) -> np.ndarray:
    """Per-pixel class scores: correlation-weighted one-hot reference colors, ``H x W x K``."""
    _check_color_inputs(vol, ref)
    h, w = vol.height, vol.width
    n = vol.window
    scores = np.zeros((h, w, ref.classes))
    rows, cols = np.indices((h, w))
    for k, qs, rs in _windows(h, w, vol.radius, vol.dilation):
        np.add.at(scores, (rows[qs], cols[qs], ref.class_map[rs]), vol.values[qs + (k,)] / n)
    return scores


def colorization_loss(vol: CorrelationVolume, ref: QuantizedImage, target: QuantizedImage):
    """Mean categorical cross-entropy of softmax(scores) against ``target``.

    Returns ``(loss, grad)`` with ``grad`` shaped like ``vol.values``.
    """
    if ref.classes != target.classes:
        raise ClassMismatchError(f"reference has {ref.classes} classes, target has {target.classes}")
    if target.class_map.shape != ref.class_map.shape:
        raise InvalidShapeError("reference and target images differ in size")
    scores = colorization_scores(vol, ref)
    h, w = vol.height, vol.width
    rows, cols = np.indices((h, w))
    logp = log_softmax(scores, axis=2)
    loss = float(-logp[rows, cols, target.class_map].mean())

    dscores = np.exp(logp)
    dscores[rows, cols, target.class_map] -= 1.0
    dscores /= h * w
    grad = np.zeros(vol.values.shape)
    n = vol.window
    for k, qs, rs in _windows(h, w, vol.radius, vol.dilation):
        grad[qs + (k,)] = dscores[rows[qs], cols[qs], ref.class_map[rs]] / n
    return loss, grad


def pyramid_label_loss(volumes: Sequence[CorrelationVolume], labels: Sequence[LabelVolume],
                       levels: Sequence[int] | None = None):
    """Sum of balanced BCE over the selected pyramid levels (all levels by default).

    Returns ``(loss, grads)`` with one gradient array per input level; levels
    not selected get a zero gradient.
    """
    if len(volumes) != len(labels):
        raise InvalidShapeError(f"{len(volumes)} volumes but {len(labels)} label volumes")
    selected = set(range(len(volumes)) if levels is None else levels)
    total = 0.0
    grads = []
    for l, (vol, lab) in enumerate(zip(volumes, labels)):
        if l in selected:
            loss, grad = balanced_bce_loss(vol, lab)
            total += loss
        else:
            grad = np.zeros(vol.values.shape)
        grads.append(grad)
    return total, grads
