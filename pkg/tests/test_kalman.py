import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from corrtrack.errors import InvalidBoxError
from corrtrack.kalman import (
    KalmanFilter,
    KalmanState,
    box_to_xyah,
    kalman_init,
    kalman_predict,
    kalman_update,
    xyah_to_box,
)
from oracles import textbook_kalman


def assert_psd(cov):
    assert np.allclose(cov, cov.T, atol=1e-9)
    assert np.all(np.diag(cov) >= 0)
    np.linalg.cholesky(cov)


def random_walk_boxes(rng, n, start=(50.0, 60.0, 20.0, 40.0)):
    x, y, w, h = start
    vx, vy = rng.normal(0, 2, 2)
    out = []
    for _ in range(n):
        x, y = x + vx + rng.normal(0, 1), y + vy + rng.normal(0, 1)
        w = float(np.clip(w + rng.normal(0, 0.5), 5, 200))
        h = float(np.clip(h + rng.normal(0, 0.5), 5, 400))
        out.append((x, y, w, h))
    return out


def test_init_mean():
    s = kalman_init((0, 0, 2, 4))
    assert np.array_equal(s.mean, [1, 2, 0.5, 4, 0, 0, 0, 0])
    assert_psd(s.covariance)


def test_box_round_trip():
    box = (3.0, -4.0, 10.0, 25.0)
    np.testing.assert_allclose(xyah_to_box(box_to_xyah(box)), box)


@pytest.mark.parametrize("box", [(0, 0, 0, 1), (0, 0, 1, -1), (0, 0, np.nan, 1), (0, 0, 1)])
def test_invalid_box(box):
    with pytest.raises(InvalidBoxError):
        kalman_init(box)
    with pytest.raises(InvalidBoxError):
        kalman_update(kalman_init((0, 0, 1, 1)), box)


def test_predict_zero_velocity():
    s = kalman_init((10, 20, 5, 10))
    p = kalman_predict(s)
    assert np.array_equal(p.mean, s.mean)
    assert np.trace(p.covariance) > np.trace(s.covariance)


def test_predict_euler_step():
    s = KalmanState(np.array([0, 0, 1, 2, 1, 0, 0, 0], float), np.eye(8))
    assert kalman_predict(s).mean[0] == 1.0


def test_update_zero_innovation_keeps_mean():
    s = kalman_predict(kalman_init((10, 20, 5, 10)))
    u = kalman_update(s, s.box())
    np.testing.assert_allclose(u.mean, s.mean, atol=1e-12)


@settings(max_examples=30)
@given(seed=st.integers(0, 2**32 - 1))
def test_update_does_not_grow_trace(seed):
    rng = np.random.default_rng(seed)
    boxes = random_walk_boxes(rng, 5)
    s = kalman_init(boxes[0])
    for b in boxes[1:]:
        s = kalman_predict(s)
        u = kalman_update(s, b)
        assert np.trace(u.covariance) <= np.trace(s.covariance) + 1e-12
        s = u


@pytest.mark.parametrize("seed", range(3))
def test_long_sequence_stays_psd(seed):
    rng = np.random.default_rng(seed)
    s = kalman_init((50, 60, 20, 40))
    for b in random_walk_boxes(rng, 1000):
        s = kalman_update(kalman_predict(s), b)
        assert_psd(s.covariance)


def linear_boxes(n, v=(3.0, -2.0)):
    return [(100 + v[0] * t, 200 + v[1] * t, 30.0, 60.0) for t in range(n)]


def test_noiseless_linear_motion():
    kf = KalmanFilter(measurement_noise=0.0)
    boxes = linear_boxes(11)
    s = kf.initiate(boxes[0])
    for b in boxes[1:]:
        s = kf.update(kf.predict(s), b)
    assert np.abs(s.box() - boxes[-1]).max() < 1e-6


def test_default_noise_lags_on_linear_motion():
    boxes = linear_boxes(11)
    s = kalman_init(boxes[0])
    for b in boxes[1:]:
        s = kalman_update(kalman_predict(s), b)
    err = np.abs(s.box() - boxes[-1]).max()
    assert 1e-6 < err < 1.0


@pytest.mark.parametrize("seed", range(5))
def test_matches_textbook_filter(seed):
    boxes = random_walk_boxes(np.random.default_rng(seed), 30)
    s = kalman_init(boxes[0])
    means = [s.mean]
    for b in boxes[1:]:
        s = kalman_update(kalman_predict(s), b)
        means.append(s.mean)
    for ours, ref in zip(means, textbook_kalman(boxes)):
        np.testing.assert_allclose(ours, ref, rtol=0, atol=1e-9)
