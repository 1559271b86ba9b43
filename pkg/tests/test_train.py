import numpy as np
import pytest

from colagnn.data import WindowSet, prepare
from colagnn.diffcore import Tensor
from colagnn.model import ColaGNN, ColaGnnConfig
from colagnn.train import (AdamState, TrainConfig, TrainingDiverged, adam_step, l1_loss, run_trials,
                           train_model)

from conftest import TINY


def windows(inputs, targets):
    n = len(inputs)
    return WindowSet(np.asarray(inputs, float), np.asarray(targets, float), np.arange(n), inputs.shape[-1], 1)


class TestLoss:
    def test_perfect(self):
        assert l1_loss(Tensor([1.0, 2.0]), np.array([1.0, 2.0])).item() == 0.0

    def test_hand(self):
        assert l1_loss(Tensor([0.0, 0.0]), np.array([1.0, -2.0])).item() == 3.0


class TestAdam:
    def step(self, value, grad, wd, decay=None):
        p = {"w": Tensor(np.array(value, float), requires_grad=True)}
        st = AdamState.zeros_like(p)
        adam_step(p, {"w": np.array(grad, float)}, st, lr=0.01, weight_decay=wd, decay=decay)
        return p["w"].data, st

    def test_first_step_sign(self):
        w, st = self.step([1.0, 1.0], [0.3, -2.0], 0.0)
        np.testing.assert_allclose(w, [1.0 - 0.01, 1.0 + 0.01], rtol=1e-6)
        assert st.t == 1

    def test_zero_grad_fixed(self):
        w, _ = self.step([0.5], [0.0], 0.0)
        assert w[0] == 0.5

    def test_decay_shrinks(self):
        w, _ = self.step([0.5, -0.5], [0.0, 0.0], 0.1)
        assert 0 < w[0] < 0.5 and -0.5 < w[1] < 0

    def test_decay_mask(self):
        w, _ = self.step([0.5], [0.0], 0.1, decay=lambda name: False)
        assert w[0] == 0.5


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(lr=0), dict(weight_decay=-1), dict(batch_size=0),
                                    dict(patience=10, max_epochs=5)])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            TrainConfig(**kw)


def linear_problem(seed=0, n=48):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 5, 8))
    y = 0.5 * x[..., -1] + 0.2
    return windows(x, y)


class TestTrainModel:
    def fit(self, **kw):
        ws = linear_problem()
        cfg = TrainConfig(**{"lr": 0.01, "max_epochs": 30, "patience": 30, "batch_size": 16, **kw})
        model = ColaGNN(ColaGnnConfig(**TINY, dropout=0.0), np.eye(5), 8, rng=cfg.seed)
        return model, train_model(model, ws, ws, cfg), ws

    def test_loss_decreases(self):
        _, rep, _ = self.fit()
        assert rep.train_loss[-1] < rep.train_loss[0] / 2

    def test_deterministic(self):
        _, a, _ = self.fit()
        _, b, _ = self.fit()
        assert a.train_loss == b.train_loss and a.val_loss == b.val_loss

    def test_patience_zero(self):
        ws = linear_problem()
        model = ColaGNN(ColaGnnConfig(**TINY), np.eye(5), 8, rng=0)
        rep = train_model(model, ws, ws, TrainConfig(lr=5.0, max_epochs=50, patience=0))
        first_bad = next(i for i in range(1, len(rep.val_loss)) if rep.val_loss[i] >= min(rep.val_loss[:i]))
        assert rep.stopped_epoch == first_bad

    def test_restores_best(self):
        model, rep, ws = self.fit(lr=0.2, max_epochs=25, patience=25)
        from colagnn.train import mean_l1
        assert mean_l1(model, ws) == pytest.approx(min(rep.val_loss), abs=1e-15)
        assert rep.best_val <= min(rep.val_loss[rep.best_epoch:])

    def test_log_file(self, tmp_path):
        ws = linear_problem()
        model = ColaGNN(ColaGnnConfig(**TINY), np.eye(5), 8, rng=0)
        log = tmp_path / "log.csv"
        rep = train_model(model, ws, ws, TrainConfig(max_epochs=3, patience=3), log_path=log)
        lines = log.read_text().splitlines()
        assert len(lines) == 3 and float(lines[0].split(",")[2]) == rep.val_loss[0]

    def test_divergence_reported(self):
        ws = linear_problem()
        bad = WindowSet(ws.inputs, ws.targets * np.inf, ws.target_index, 8, 1)
        model = ColaGNN(ColaGnnConfig(**TINY), np.eye(5), 8, rng=0)
        with pytest.raises(TrainingDiverged, match="learning rate"):
            train_model(model, bad, ws, TrainConfig(max_epochs=2, patience=1))

    def test_empty_validation(self):
        ws = linear_problem()
        model = ColaGNN(ColaGnnConfig(**TINY), np.eye(5), 8, rng=0)
        with pytest.raises(ValueError):
            train_model(model, ws, ws.subset(slice(0, 0)), TrainConfig())


class TestTrials:
    def test_aggregation(self, toy_series):
        data = prepare(toy_series, 8, 1)
        cfg = TrainConfig(max_epochs=3, patience=3)
        build = lambda s: ColaGNN(ColaGnnConfig(**TINY), np.eye(4), 8, rng=s)
        agg, res = run_trials(build, data, cfg, [0, 1, 2])
        per = [r.metrics["rmse"] for r in res]
        assert agg["rmse"]["mean"] == pytest.approx(np.mean(per))
        assert agg["rmse"]["sd"] > 0

    def test_single_seed_sd_zero(self, toy_series):
        data = prepare(toy_series, 8, 1)
        build = lambda s: ColaGNN(ColaGnnConfig(**TINY), np.eye(4), 8, rng=s)
        agg, _ = run_trials(build, data, TrainConfig(max_epochs=2, patience=2), [4])
        assert agg["rmse"]["sd"] == 0.0


def test_penalty_gradient_is_coupled_decay(tiny_model):
    from colagnn.train import l2_penalty
    from colagnn.model import is_bias
    for p in tiny_model.params.values():
        p.zero_grad()
    l2_penalty(tiny_model.params, 0.3).backward()
    for name, p in tiny_model.params.items():
        expected = np.zeros_like(p.data) if is_bias(name) else 0.3 * p.data
        np.testing.assert_allclose(0.0 if p.grad is None else p.grad, expected, atol=1e-15)
