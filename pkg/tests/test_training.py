import numpy as np
import pytest

from dyan.atoms import PoleSet, init_ring
from dyan.synth import SynthSpec, make_dataset
from dyan.training import TrainConfig, TrainingError, evaluate, prediction_mse, train


def _data(n=3, seed=2, perturb=0.03, hw=4):
    ps = init_ring(2, 0.85, 1.15, grid=(1, 2))
    modes = tuple((r + perturb, p + perturb, a, 0.0) for r, p, a in zip(ps.rho, ps.psi, (0.8, 0.6)))
    spec = SynthSpec(modes=modes, T=9, H=hw, W=hw, amp_spread=0.5)
    return ps, make_dataset(n, spec, 0.0, seed)


def test_history_layout():
    ps, data = _data()
    cfg = TrainConfig(epochs=3)
    res = train(ps, data, cfg)
    assert [r["epoch"] for r in res.history] == [0, 1, 2, 3]
    assert set(res.history[0]) == {"epoch", "loss", "sparsity", "wall"}
    assert res.final_loss == res.history[-1]["loss"]
    assert res.history[0]["loss"] == pytest.approx(evaluate(ps, cfg.lam, data, cfg)[0])
    assert all(0 <= r["sparsity"] <= 1 for r in res.history)


def test_training_reproducible():
    ps, data = _data()
    cfg = TrainConfig(epochs=4, seed=7)
    a, b = train(ps, data, cfg), train(ps, data, cfg)
    assert a.poles == b.poles
    assert [r["loss"] for r in a.history] == [r["loss"] for r in b.history]


def test_snapshots_and_callback():
    ps, data = _data()
    seen = []
    res = train(ps, data, TrainConfig(epochs=2), snapshot_poles=True, on_epoch=seen.append)
    assert [e for e, _ in res.snapshots] == [0, 1, 2]
    assert res.snapshots[0][1] == ps and res.snapshots[-1][1] == res.poles
    assert len(seen) == 3


def test_constant_atom_untouched():
    ps, data = _data()
    res = train(ps, data, TrainConfig(epochs=2))
    assert res.poles.include_constant and res.poles.P == ps.P


def test_trainable_lambda_moves():
    ps, data = _data()
    res = train(ps, data, TrainConfig(epochs=2, trainable_lambda=True))
    assert res.lam != 0.01 and res.lam >= 1e-6


def test_full_loss_mode_runs():
    ps, data = _data()
    res = train(ps, data, TrainConfig(epochs=2, loss_mode="full"))
    assert np.isfinite(res.final_loss)


def test_exactly_representable_dataset_has_tiny_initial_loss():
    ps, data = _data(perturb=0.0)
    cfg = TrainConfig(lam=1e-6, epochs=0, fista_max_iter=5000, fista_tol=1e-13)
    res = train(ps, data, cfg)
    assert res.history[0]["loss"] <= 1e-6


def test_descent_on_perturbed_poles():
    ps, train_set = _data(n=8, seed=2, hw=8)
    _, held = _data(n=4, seed=3, hw=8)
    cfg = TrainConfig(epochs=20)
    before = prediction_mse(ps, cfg.lam, held, cfg)
    res = train(ps, train_set, cfg)
    assert prediction_mse(res.poles, res.lam, held, cfg) < 0.5 * before


def test_errors():
    ps, data = _data()
    with pytest.raises(TrainingError):
        train(ps, [], TrainConfig())
    with pytest.raises(TrainingError):
        train(ps, data, TrainConfig(T=8))
