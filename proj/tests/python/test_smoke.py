import math
import os
import tempfile

import pytest

import lpr


def test_worked_weights():
    counts = [[80, 4, 10, 6]]
    assert lpr.raw_weight(counts, 0, 0) == 0.25
    assert lpr.raw_weight(counts, 0, 1) == 24.0
    w = lpr.weight_table([[80, 20, 0]])
    assert w[0][0] == pytest.approx(math.log1p(math.exp(0.25)), rel=1e-15)
    assert w[0][1] == pytest.approx(math.log1p(math.exp(4.0)), rel=1e-15)
    assert w[0][2] == 1.0
    assert lpr.smooth_weight(1000.0) == 100.0


def test_losses_and_gradients():
    loss, grad = lpr.soft_ce([0.0, 0.0], [1.0, 0.0], [2.0, 1.0])
    assert loss == pytest.approx(2 * math.log(2))
    assert grad == [-1.0, 1.0]
    loss, grad = lpr.sigm_bce([0.0], [1.0], [1.0])
    assert loss == pytest.approx(math.log(2))
    assert grad == [-0.5]
    loss, _ = lpr.focal([0.0], [1.0], gamma=2.0)
    assert loss == pytest.approx(0.25 * math.log(2))

    p, a, mu = [0.3, -1.1, 2.0], [0.2, 0.8, 0.0], [1.5, 3.0, 0.7]
    _, grad = lpr.soft_ce(p, a, mu)
    h = 1e-6
    for i in range(3):
        up = list(p); up[i] += h
        dn = list(p); dn[i] -= h
        fd = (lpr.soft_ce(up, a, mu)[0] - lpr.soft_ce(dn, a, mu)[0]) / (2 * h)
        assert grad[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_mask_and_metrics():
    assert lpr.softplus_g(0.0) == pytest.approx(math.log(2))
    assert lpr.softplus_g(10.0) == 1.0
    loss, _ = lpr.mask_loss([0.5], [1.0])
    assert loss == pytest.approx(math.log(2))
    assert lpr.vqa_accuracy([0], [[1, 9]]) == pytest.approx(1 / 3)
    assert lpr.cohens_kappa([0, 1, 1], [0, 1, 1]) == 1.0


def test_errors_surface_as_python_exceptions():
    with pytest.raises(lpr.InputError):
        lpr.sigm_bce([0.0, 1.0], [1.0], [1.0])
    with pytest.raises(ValueError):
        lpr.smooth_weight(-1.0)


def test_run_experiment():
    data = {"train_size": 2000, "test_size": 200, "v_dim": 24, "visual_noise": 0.0, "shift_mode": "none"}
    r = lpr.run_experiment(data, {"epochs_finetune": 20, "lr": 0.1})
    assert 0.0 <= r["test_acc"] <= 1.0
    assert r["test_acc"] > 0.8
    assert r["iterations"] == 20 * ((2000 + 31) // 32)
    again = lpr.run_experiment(data, {"epochs_finetune": 20, "lr": 0.1})
    assert again == r


def test_cli_exit_codes():
    with tempfile.TemporaryDirectory() as tmp:
        assert lpr.cli(["gen-data", "--config", os.path.join(tmp, "missing.json")]) == 2
