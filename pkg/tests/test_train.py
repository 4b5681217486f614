"""
Tests for losses, the training loop and evaluation.
"""
import numpy as np
import pandas as pd
import pytest

from src.autodiff import Tape
from src.checkpoint import checkpoint_metadata, load_checkpoint, save_checkpoint
from src.dataset import gen_dataset, write_dataset
from src.field import Domain, GridField, norm_l2
from src.dataset import DatasetRecord
from src.net import NetConfig, init_net, predict
from src.run_parameters import RunParameterManager
from src.train import (
    CURVE_COLUMNS,
    TrainConfig,
    batch_gradient,
    evaluate,
    loss,
    method_label,
    record_errors,
    sample_gradient,
    train,
    train_from_parameters,
)
from src.utils_metrics import METRIC_COLUMNS

TINY_NET = dict(layers=1, width=3, k_max=2, fourier_layers=1, pad_to=10, train_resolution=8,
                qa_width=6, qa_depth=3)
TINY_OVERRIDES = [f"net.{key}={value}" for key, value in TINY_NET.items()]


@pytest.fixture(scope="module")
def iso8():
    return gen_dataset("elliptic-iso", n=4, m=8, seed=21)


def _net(**overrides):
    values = dict(TINY_NET)
    values.update(overrides)
    return init_net(NetConfig(**values))


def _zero_net():
    net = _net()
    for array in net.named_tensors().values():
        array[...] = 0.0
    return net


class TestLoss:
    def _pred(self, values):
        return Tape(record=False).constant(values[None])

    def test_relative_l1(self):
        domain = Domain.square(8)
        target = GridField.constant(domain, 2.0)
        assert float(loss(self._pred(np.zeros((8, 8))), target).data) == pytest.approx(1.0)
        assert float(loss(self._pred(np.full((8, 8), 2.0)), target).data) == 0.0
        assert float(loss(self._pred(np.full((8, 8), 3.0)), target).data) == pytest.approx(0.5)

    def test_squared_l2(self):
        domain = Domain.square(8)
        target = GridField.from_function(domain, lambda x, y: 1.0 + x)
        pred = self._pred(2.0 * target.values)
        assert float(loss(pred, target, kind="squared_l2").data) == pytest.approx(1.0)

    def test_floor_protects_zero_target(self):
        domain = Domain.square(8)
        value = loss(self._pred(np.ones((8, 8))), GridField.zeros(domain), eps_floor=1.0)
        assert float(value.data) == pytest.approx(64.0)

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            loss(self._pred(np.zeros((8, 8))), GridField.zeros(Domain.square(8)), kind="huber")


class TestTrainConfig:
    @pytest.mark.parametrize("kwargs", [dict(batch_size=0), dict(epochs=-1), dict(loss="huber")])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_from_parameters(self):
        params = RunParameterManager.from_sources(overrides=["train.epochs=2", "output.curve="])
        cfg = TrainConfig.from_parameters(params)
        assert cfg.epochs == 2
        assert cfg.batch_size == 64
        assert cfg.curve_path is None


class TestTraining:
    def test_zero_epochs_leave_parameters(self, iso8, tmp_path):
        net = _net()
        before = {k: v.copy() for k, v in net.named_tensors().items()}
        path = str(tmp_path / "zero.iuzc")
        result = train(TrainConfig(epochs=0, checkpoint_path=path), net, iso8)
        assert len(result.curve) == 0
        for name, value in net.named_tensors().items():
            np.testing.assert_array_equal(value, before[name])
        assert checkpoint_metadata(path)["epochs_completed"] == 0

    def test_smoke(self, iso8, tmp_path):
        train_set, holdout = iso8.split(0.25)
        cfg = TrainConfig(epochs=2, batch_size=2, base_lr=1e-3,
                          checkpoint_path=str(tmp_path / "model.iuzc"),
                          curve_path=str(tmp_path / "reports" / "curve.csv"))
        result = train(cfg, _net(), train_set, holdout)
        assert list(result.curve.columns) == CURVE_COLUMNS
        assert len(result.curve) == 2
        assert np.all(np.isfinite(result.curve["train_loss"]))
        assert np.all(np.isfinite(result.curve["holdout_eps_rel"]))
        assert result.store.step == 4

        saved = pd.read_csv(tmp_path / "reports" / "curve.csv")
        assert len(saved) == 2
        loaded = load_checkpoint(cfg.checkpoint_path)
        for name, value in result.net.named_tensors().items():
            np.testing.assert_array_equal(loaded.named_tensors()[name], value)

    def test_thread_count_does_not_change_result(self, iso8):
        single = train(TrainConfig(epochs=1, batch_size=4, threads=1), _net(), iso8)
        pooled = train(TrainConfig(epochs=1, batch_size=4, threads=3), _net(), iso8)
        for name, value in single.net.named_tensors().items():
            np.testing.assert_array_equal(pooled.net.named_tensors()[name], value)

    def test_parameters_move(self, iso8):
        net = _net()
        before = net.named_tensors()["shared.QA.W2"].copy()
        train(TrainConfig(epochs=1, batch_size=4), net, iso8)
        assert not np.array_equal(before, net.named_tensors()["shared.QA.W2"])

    def test_non_finite_loss_raises(self, iso8):
        net = _net()
        net.named_tensors()["shared.QA.b2"][...] = np.nan
        with pytest.raises(FloatingPointError):
            train(TrainConfig(epochs=1, batch_size=2), net, iso8)

    def test_empty_dataset(self, iso8):
        empty, _ = iso8.split(1.0)
        with pytest.raises(ValueError):
            train(TrainConfig(epochs=1), _net(), empty)

    def test_dimension_mismatch(self, iso8):
        net = _net(experiment="parabolic", ndim=3, regularizer="l1box")
        with pytest.raises(ValueError):
            train(TrainConfig(epochs=1), net, iso8)

    def test_batch_gradient_is_sample_mean(self, iso8):
        net = _net()
        cfg = TrainConfig()
        records = [iso8[0], iso8[1]]
        losses, mean_grad = batch_gradient(net, records, cfg)
        _, first = batch_gradient(net, records[:1], cfg)
        _, second = batch_gradient(net, records[1:], cfg)
        assert len(losses) == 2
        for name, g in mean_grad.items():
            np.testing.assert_allclose(g, 0.5 * (first[name] + second[name]), rtol=1e-12, atol=1e-15)

    def test_default_loss_gradient_matches_finite_difference(self, iso8, rng):
        net = _net()
        tensors = net.named_tensors()
        for name, array in tensors.items():
            if name.endswith(".QS.V"):
                array[...] = rng.uniform(-1.0, 1.0, array.shape)
        source = iso8[0]
        start = predict(net, source.y_d, source.f, (source.u_a, source.u_b)).data[0]
        shape = start.shape
        offset = rng.choice([-1.0, 1.0], size=shape) * rng.uniform(0.5, 1.5, size=shape)
        record = DatasetRecord(source.y_d, source.f, source.u_a, source.u_b,
                               GridField(source.u_star.domain, start + offset), 0.0)
        cfg = TrainConfig()
        assert cfg.loss == "relative_l1"
        _, grads = sample_gradient(net, record, cfg)

        h = 1e-6
        names = sorted(tensors)
        for _ in range(12):
            name = names[rng.integers(len(names))]
            array = tensors[name]
            index = tuple(int(rng.integers(n)) for n in array.shape)
            saved = array[index]
            array[index] = saved + h
            plus, _ = sample_gradient(net, record, cfg)
            array[index] = saved - h
            minus, _ = sample_gradient(net, record, cfg)
            array[index] = saved
            fd = (plus - minus) / (2 * h)
            assert abs(fd - grads[name][index]) <= 1e-4 * max(abs(fd), abs(grads[name][index]), 1e-4), name


class TestEvaluate:
    def test_zero_prediction_has_unit_relative_error(self, iso8):
        table = evaluate(_zero_net(), iso8, threads=2)
        assert list(table.columns) == METRIC_COLUMNS
        assert table.loc[0, "method"] == "iUzawa-Net-S"
        assert table.loc[0, "m"] == 8
        assert table.loc[0, "n_records"] == 4
        assert table.loc[0, "eps_rel_mean"] == pytest.approx(1.0)
        assert table.loc[0, "eps_rel_sd"] == pytest.approx(0.0, abs=1e-12)

    def test_resampled_evaluation(self, iso8):
        table = evaluate(_zero_net(), iso8, resample_to=12, method="zero")
        assert table.loc[0, "method"] == "zero"
        assert table.loc[0, "m"] == 12
        assert table.loc[0, "eps_rel_mean"] == pytest.approx(1.0)

    def test_absolute_errors_are_reference_norms(self, iso8):
        rel, absolute = record_errors(_zero_net(), iso8)
        np.testing.assert_allclose(absolute, [norm_l2(r.u_star) for r in iso8])

    def test_from_checkpoint_path(self, iso8, tmp_path):
        path = str(tmp_path / "zero.iuzc")
        save_checkpoint(_zero_net(), path)
        assert evaluate(path, iso8).loc[0, "eps_rel_mean"] == pytest.approx(1.0)

    def test_method_labels(self):
        assert method_label(_net(tying="free")) == "iUzawa-Net-F"
        assert method_label(_net(model="fno")) == "FNO"


class TestTrainFromParameters:
    def test_end_to_end(self, iso8, tmp_path):
        data = str(tmp_path / "train.bin")
        write_dataset(iso8, data)
        ckpt = str(tmp_path / "out" / "model.iuzc")
        params = RunParameterManager.from_sources(overrides=TINY_OVERRIDES + [
            f"data.train={data}", "train.epochs=1", "train.batch_size=2",
            f"output.checkpoint={ckpt}", f"output.curve={tmp_path / 'curve.csv'}",
            "train.holdout_fraction=0.25",
        ])
        result = train_from_parameters(params)
        assert len(result.curve) == 1
        assert load_checkpoint(ckpt).config.width == 3

    def test_needs_training_data(self):
        params = RunParameterManager.from_sources(overrides=TINY_OVERRIDES)
        with pytest.raises(ValueError):
            train_from_parameters(params)

    def test_problem_mismatch(self, iso8, tmp_path):
        data = str(tmp_path / "train.bin")
        write_dataset(iso8, data)
        params = RunParameterManager.from_sources(overrides=[f"data.train={data}", "data.problem=elliptic-aniso"])
        with pytest.raises(ValueError):
            train_from_parameters(params)
