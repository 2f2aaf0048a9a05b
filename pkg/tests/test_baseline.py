import numpy as np
import pytest

from pfgn import baseline, pointnet
from pfgn.errors import ConfigError
from pfgn.rng import Stream


def test_loss_values(rng):
    truth = rng.uniform(size=(2, 3)).astype(np.float32)
    assert baseline.loss(truth, truth).item() == 0.0
    assert baseline.loss(truth + 0.5, truth).item() == pytest.approx(0.25)
    pred = rng.uniform(size=(2, 3)).astype(np.float32)
    hand = sum((float(pred[i, j]) - float(truth[i, j])) ** 2 for i in range(2) for j in range(3)) / 6
    assert baseline.loss(pred, truth).item() == pytest.approx(hand, rel=1e-6)


def test_predict_is_deterministic_and_bounded(rng):
    p = pointnet.build("baseline", width_divisor=8)
    x = rng.uniform(-1, 1, (100, 2)).astype(np.float32)
    a = baseline.predict(p, x)
    assert a.shape == (100, 3)
    assert np.array_equal(a, baseline.predict(p, x))
    assert np.all((a > 0) & (a < 1))


def test_model_has_zero_spread(rng):
    m = baseline.BaselineModel(pointnet.build("baseline", width_divisor=8))
    x = rng.uniform(-1, 1, (30, 2)).astype(np.float32)
    out = m.generate(x, 8, Stream(0))
    assert out.shape == (1, 30, 3)
    assert not m.stochastic


def test_predict_rejects_generative():
    with pytest.raises(ConfigError):
        baseline.predict(pointnet.build("fm", width_divisor=16), np.zeros((3, 37)))
