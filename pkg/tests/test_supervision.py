import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrtrack.correlation import CorrelationVolume, CorrParams, displacements
from corrtrack.errors import ClassMismatchError, InvalidShapeError, RangeError
from corrtrack.gradcheck import check_colorization, max_relative_error, numeric_grad
from corrtrack.supervision import (
    IdentityMap,
    LabelVolume,
    QuantizedImage,
    balanced_bce_loss,
    colorization_loss,
    colorization_scores,
    make_correlation_labels,
    pyramid_label_loss,
    quantize_colors,
)
from corrtrack.tensor import FeatureMap
from oracles import labels_loop, quantize_loop


def vol1(values, r=0):
    return CorrelationVolume(np.asarray(values, dtype=float).reshape(1, -1, (2 * r + 1) ** 2), r)


def lab1(values, r=0):
    return LabelVolume(np.asarray(values).reshape(1, -1, (2 * r + 1) ** 2), r)


class TestLabels:
    def test_hand_cases(self):
        # R=0: each pixel compared with itself across frames
        yq = IdentityMap(np.array([[5, 5, -1]]))
        yr = IdentityMap(np.array([[5, 7, 5]]))
        lab = make_correlation_labels(yq, yr, CorrParams(0, 1)).labels
        assert lab[0, :, 0].tolist() == [1, 0, -1]

    def test_all_background(self):
        y = IdentityMap(np.full((3, 4), -1))
        assert np.all(make_correlation_labels(y, y, CorrParams(1, 1)).labels == -1)

    def test_out_of_bounds_ignored(self):
        y = IdentityMap(np.zeros((2, 2), dtype=int))
        lab = make_correlation_labels(y, y, CorrParams(1, 1)).labels
        assert lab[0, 0, 0] == -1 and lab[0, 0, 4] == 1 and lab[0, 0, 8] == 1

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**32 - 1), d=st.integers(1, 2))
    def test_matches_loop_oracle(self, seed, d):
        rng = np.random.default_rng(seed)
        yq, yr = rng.integers(-1, 4, size=(2, 6, 5))
        lab = make_correlation_labels(IdentityMap(yq), IdentityMap(yr), CorrParams(2, d)).labels
        assert np.array_equal(lab, labels_loop(yq, yr, 2, d))
        assert set(np.unique(lab)) <= {-1, 0, 1}
        pos = np.argwhere(lab == 1)
        assert np.all(yq[pos[:, 0], pos[:, 1]] >= 0)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidShapeError):
            make_correlation_labels(IdentityMap(np.zeros((2, 2))), IdentityMap(np.zeros((2, 3))), CorrParams(1, 1))

    def test_label_range(self):
        with pytest.raises(RangeError):
            LabelVolume(np.full((1, 1, 1), 2), 0)


class TestBalancedBce:
    def test_logit_zero_is_ln2(self):
        loss, _ = balanced_bce_loss(vol1([0.0, 0.0]), lab1([1, 0]))
        assert loss == pytest.approx(math.log(2), abs=1e-15)

    def test_saturated(self):
        loss, grad = balanced_bce_loss(vol1([30.0, -30.0]), lab1([1, 0]))
        assert loss < 1e-9 and np.abs(grad).max() < 1e-9

    def test_all_ignored(self):
        loss, grad = balanced_bce_loss(vol1([3.0, -1.0, 0.2]), lab1([-1, -1, -1]))
        assert loss == 0.0 and not grad.any()

    def test_ignored_entries_have_no_gradient(self):
        _, grad = balanced_bce_loss(vol1([1.0, 2.0, 3.0]), lab1([1, -1, 0]))
        assert grad[0, 1, 0] == 0.0

    @settings(max_examples=40)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_non_negative_and_gradient(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((1, 6, 1)) * 3
        y = rng.integers(-1, 2, size=(1, 6, 1))
        lab = LabelVolume(y, 0)
        loss, grad = balanced_bce_loss(CorrelationVolume(x, 0), lab)
        assert loss >= 0
        num = numeric_grad(lambda v: balanced_bce_loss(CorrelationVolume(v, 0), lab)[0], x)
        assert max_relative_error(grad, num) < 1e-5

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_duplicating_negatives_is_neutral(self, seed):
        rng = np.random.default_rng(seed)
        pos = rng.standard_normal(3)
        neg = rng.standard_normal(4)
        base, _ = balanced_bce_loss(vol1(np.r_[pos, neg]), lab1([1] * 3 + [0] * 4))
        dup, _ = balanced_bce_loss(vol1(np.r_[pos, neg, neg]), lab1([1] * 3 + [0] * 8))
        assert dup == pytest.approx(base, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidShapeError):
            balanced_bce_loss(vol1([0.0, 0.0]), lab1([1, 0, 1]))

    def test_pyramid_levels_flag(self):
        v = [vol1([0.0, 0.0]), vol1([0.0, 0.0, 0.0])]
        l = [lab1([1, 0]), lab1([1, 0, 0])]
        everything, grads = pyramid_label_loss(v, l)
        assert everything == pytest.approx(2 * math.log(2))
        finest, grads = pyramid_label_loss(v, l, levels=[0])
        assert finest == pytest.approx(math.log(2)) and not grads[1].any()
        with pytest.raises(InvalidShapeError):
            pyramid_label_loss(v, l[:1])


class TestQuantize:
    def test_hand_example(self):
        img = FeatureMap(np.array([0.0, 0.6, 1.0]).reshape(3, 1, 1))
        q = quantize_colors(img, 2)
        assert q.classes == 8 and q.class_map[0, 0] == 6

    def test_single_bin(self):
        img = FeatureMap(np.random.default_rng(0).random((3, 4, 4)))
        q = quantize_colors(img, 1)
        assert q.classes == 1 and not q.class_map.any()

    def test_constant_image(self):
        q = quantize_colors(FeatureMap(np.full((3, 3, 5), 0.3)), 4)
        assert len(np.unique(q.class_map)) == 1 and q.classes == 64

    @settings(max_examples=30)
    @given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 6))
    def test_matches_loop_oracle(self, seed, k):
        img = np.random.default_rng(seed).random((3, 4, 5))
        img[0, 0, 0] = 1.0
        q = quantize_colors(FeatureMap(img), k)
        assert np.array_equal(q.class_map, quantize_loop(img, k))
        assert q.class_map.max() < k**3

    def test_range(self):
        with pytest.raises(RangeError):
            quantize_colors(FeatureMap(np.full((3, 1, 1), 1.5)), 2)
        with pytest.raises(InvalidShapeError):
            quantize_colors(FeatureMap(np.zeros((2, 1, 1))), 2)


def colorization_loop(vol, r, d, ref, target, k):
    h, w, _ = vol.shape
    n = (2 * r + 1) ** 2
    total = 0.0
    for y in range(h):
        for x in range(w):
            scores = [0.0] * k
            for i, (dy, dx) in enumerate(displacements(r)):
                yy, xx = y + d * dy, x + d * dx
                if 0 <= yy < h and 0 <= xx < w:
                    scores[ref[yy, xx]] += vol[y, x, i] / n
            m = max(scores)
            z = sum(math.exp(s - m) for s in scores)
            total += -(scores[target[y, x]] - m - math.log(z))
    return total / (h * w)


class TestColorization:
    def test_single_class(self):
        vol = CorrelationVolume(np.random.default_rng(0).standard_normal((3, 3, 9)), 1)
        q = QuantizedImage(np.zeros((3, 3), dtype=int), 1)
        loss, grad = colorization_loss(vol, q, q)
        assert loss == 0.0 and not grad.any()

    @pytest.mark.parametrize("k", [2, 8, 64])
    def test_zero_volume_is_uniform(self, k):
        rng = np.random.default_rng(k)
        ref = QuantizedImage(rng.integers(0, k, (4, 4)), k)
        tgt = QuantizedImage(rng.integers(0, k, (4, 4)), k)
        loss, _ = colorization_loss(CorrelationVolume(np.zeros((4, 4, 9)), 1), ref, tgt)
        assert loss == pytest.approx(math.log(k), abs=1e-12)

    def test_identity_structure_copies_reference(self):
        r = 1
        vals = np.zeros((4, 5, 9))
        vals[:, :, 4] = 9.0
        ref = QuantizedImage(np.random.default_rng(1).integers(0, 6, (4, 5)), 6)
        scores = colorization_scores(CorrelationVolume(vals, r), ref)
        assert np.array_equal(scores, np.eye(6)[ref.class_map])

    def test_matches_loop_oracle_and_finite_differences(self):
        rng = np.random.default_rng(3)
        k = 5
        vals = rng.standard_normal((4, 4, 9)) * 2
        ref = QuantizedImage(rng.integers(0, k, (4, 4)), k)
        tgt = QuantizedImage(rng.integers(0, k, (4, 4)), k)
        loss, grad = colorization_loss(CorrelationVolume(vals, 1, 1), ref, tgt)
        assert loss == pytest.approx(colorization_loop(vals, 1, 1, ref.class_map, tgt.class_map, k), abs=1e-12)
        num = numeric_grad(lambda v: colorization_loss(CorrelationVolume(v, 1, 1), ref, tgt)[0], vals)
        assert max_relative_error(grad, num) < 1e-5

    @pytest.mark.parametrize("seed", range(5))
    def test_chained_gradient_check(self, seed):
        err = check_colorization(np.random.default_rng(seed), CorrParams(1, 1), (2, 4, 4))
        assert err < 1e-5

    def test_class_mismatch(self):
        vol = CorrelationVolume(np.zeros((2, 2, 1)), 0)
        with pytest.raises(ClassMismatchError):
            colorization_loss(vol, QuantizedImage(np.zeros((2, 2), int), 4), QuantizedImage(np.zeros((2, 2), int), 8))
        with pytest.raises(RangeError):
            QuantizedImage(np.full((2, 2), 4), 4)
