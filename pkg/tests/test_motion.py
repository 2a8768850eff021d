import numpy as np
import pytest

from rmtrack.geom import BBox
from rmtrack.motion import (MotionConfig, kf_init, kf_predict, kf_update,
                            predicted_box)


def test_init():
    s = kf_init(BBox(10, 10, 4, 4))
    assert s.mean.tolist() == [12, 12, 4, 4, 0, 0, 0, 0]
    assert (np.diag(s.cov) > 0).all()
    quiet = MotionConfig(pos_sigma=0.0, vel_sigma=0.0)
    assert predicted_box(kf_predict(s, quiet)) == BBox(10, 10, 4, 4)


def test_stationary_converges():
    b = BBox(30, 40, 12, 20)
    s = kf_init(BBox(28, 41, 10, 22))
    for _ in range(50):
        s = kf_update(kf_predict(s), b)
    p = predicted_box(s)
    assert np.allclose(p.as_list(), b.as_list(), atol=1e-6)


def test_constant_velocity():
    s = kf_init(BBox(0, 0, 10, 10))
    for t in range(1, 11):
        s = kf_update(kf_predict(s), BBox(2.0 * t, 0, 10, 10))
    before = s.mean[0]
    s = kf_predict(s)
    assert s.mean[0] - before == pytest.approx(2.0, abs=0.1)


def test_update_with_prediction_is_noop():
    s = kf_predict(kf_update(kf_predict(kf_init(BBox(5, 5, 8, 8))), BBox(6, 5, 8, 8)))
    after = kf_update(s, predicted_box(s))
    assert np.allclose(after.mean[:4], s.mean[:4], atol=1e-9)


def test_non_finite_measurement():
    s = kf_init(BBox(0, 0, 1, 1))
    bad = BBox(0, 0, 1, 1)
    object.__setattr__(bad, "x", float("inf"))  # skip constructor validation
    with pytest.raises(ValueError):
        kf_update(s, bad)


def test_covariance_stays_psd():
    rng = np.random.default_rng(0)
    s = kf_init(BBox(100, 100, 20, 30))
    for _ in range(10_000):
        s = kf_predict(s)
        if rng.random() < 0.8:
            z = predicted_box(s)
            s = kf_update(s, BBox(z.x + rng.normal(0, 2), z.y + rng.normal(0, 2),
                                  max(z.w + rng.normal(0, 1), 1.0), max(z.h + rng.normal(0, 1), 1.0)))
    assert np.allclose(s.cov, s.cov.T, atol=1e-9)
    assert np.linalg.eigvalsh(s.cov).min() >= -1e-9


def test_predict_variance_non_decreasing():
    s = kf_init(BBox(0, 0, 5, 5))
    prev = np.diag(s.cov)[:4]
    for _ in range(20):
        s = kf_predict(s)
        cur = np.diag(s.cov)[:4]
        assert (cur >= prev).all()
        prev = cur
