import numpy as np
import pytest

from sherbet import autodiff as ad
from sherbet.data import TaskInstance
from sherbet.decoder import build_targets
from sherbet.encoder import PatientBatch
from sherbet.errors import ConfigError, NonFiniteLoss, SingleAdmissionPatientInFineTune
from sherbet.metrics import evaluate
from sherbet.training import TrainConfig, primary_metric, run_finetune, run_ssl

from conftest import tiny_model


def _cfg(**kw):
    base = dict(epochs=15, batch_size=4, lr=0.01, breakpoints=(), seed=0)
    base.update(kw)
    return TrainConfig(**base)


def _hf_instances(model, patients, seed=0):
    # label depends on whether code 0 was ever recorded, so it is learnable
    out = []
    for k, adms in enumerate(patients):
        y = float(any(0 in a for a in adms))
        out.append(TaskInstance(f"p{k}", adms, np.array([y])))
    return out


def test_ssl_loss_decreases():
    model, patients = tiny_model(1)
    curve = run_ssl(model, patients, _cfg(epochs=40, lr=0.02))
    assert curve[-1] < 0.8 * curve[0]


def test_ssl_is_deterministic():
    curves = []
    for _ in range(2):
        model, patients = tiny_model(2, dropout=0.2)
        curves.append(run_ssl(model, patients, _cfg(epochs=5)))
    assert curves[0] == curves[1]


def test_zero_learning_rate_is_bitwise_noop():
    model, patients = tiny_model(3)
    before = {k: v.copy() for k, v in model.params.items()}
    run_ssl(model, patients, _cfg(epochs=3, lr=0.0))
    assert all(model.params[k].tobytes() == v.tobytes() for k, v in before.items())


def test_ssl_logs_each_epoch():
    model, patients = tiny_model(4)
    records = []
    run_ssl(model, patients, _cfg(epochs=3, breakpoints=(1,)), log=records.append)
    assert [r["epoch"] for r in records] == [0, 1, 2]
    assert records[0]["lr"] == 0.01 and abs(records[1]["lr"] - 0.001) < 1e-18


def test_head_starts_at_half_and_head_only_finetune_learns():
    model, patients = tiny_model(5)
    train = _hf_instances(model, patients)
    model.add_head(1)
    np.testing.assert_array_equal(model.predict([t.inputs for t in train]), 0.5)
    before = {k: v.copy() for k, v in model.params.items() if k != "head"}
    P = model.constants()
    labels = np.stack([t.label for t in train])
    batch = PatientBatch.build([t.inputs for t in train])
    start = model.finetune_objective(P, batch, labels).item()
    run_finetune(model, train, [], "heart-failure", _cfg(epochs=30), trainable=["head"])
    end = model.finetune_objective(model.constants(), batch, labels).item()
    assert end < start
    assert all(model.params[k].tobytes() == v.tobytes() for k, v in before.items())


def test_all_positive_labels_push_scores_up():
    model, patients = tiny_model(6)
    train = [TaskInstance(f"p{k}", a, np.array([1.0])) for k, a in enumerate(patients)]
    run_finetune(model, train, [], "heart-failure", _cfg(epochs=60, lr=0.05))
    assert np.all(model.predict([t.inputs for t in train]) > 0.9)


def test_validation_metric_matches_evaluate():
    model, patients = tiny_model(7)
    inst = _hf_instances(model, patients)
    train, valid = inst[:8], inst[8:]
    if len({v.label[0] for v in valid}) < 2:
        valid[0] = TaskInstance("flip", valid[0].inputs, 1.0 - valid[0].label)
    curve = run_finetune(model, train, valid, "heart-failure", _cfg(epochs=4))
    scores = model.predict([v.inputs for v in valid])
    truth = np.stack([v.label for v in valid])
    expected = evaluate("heart-failure", scores, truth).values
    assert curve[-1]["auc"] == expected["auc"] and curve[-1]["f1"] == expected["f1"]
    assert primary_metric("heart-failure", curve[-1]) == expected["auc"]


def test_early_stopping_restores_best():
    model, patients = tiny_model(8)
    inst = _hf_instances(model, patients)
    valid = inst[8:]
    if len({v.label[0] for v in valid}) < 2:
        valid[0] = TaskInstance("flip", valid[0].inputs, 1.0 - valid[0].label)
    curve = run_finetune(model, inst[:8], valid, "heart-failure", _cfg(epochs=200, early_stopping=3))
    assert len(curve) < 200
    best = max(c["auc"] for c in curve)
    scores = model.predict([v.inputs for v in valid])
    assert evaluate("heart-failure", scores, np.stack([v.label for v in valid])).values["auc"] == best


def test_finetune_rejects_patient_without_inputs():
    model, patients = tiny_model(9)
    with pytest.raises(SingleAdmissionPatientInFineTune):
        run_finetune(model, [TaskInstance("x", [], np.array([1.0]))], [], "heart-failure", _cfg())


def test_bad_train_config():
    with pytest.raises(ConfigError):
        _cfg(epochs=0).check()
    with pytest.raises(ConfigError):
        _cfg(lr=-1.0).check()


def test_non_finite_loss_is_reported():
    model, patients = tiny_model(10)
    model.params["W_u"][:] = np.nan
    with pytest.raises(NonFiniteLoss, match="epoch 0"):
        run_ssl(model, patients, _cfg(epochs=1))


@pytest.mark.parametrize("use_graph", [True, False])
def test_ssl_objective_gradients(use_graph):
    model, patients = tiny_model(11, use_graph=use_graph)
    patients = patients[:3]
    levels = [h for h, _ in model.plan]
    targets = [build_targets(np.concatenate(a), model.ont, levels) for a in patients]
    stacked = {h: np.stack([t[h] for t in targets]) for h in levels}
    batch = PatientBatch.build(patients)

    def f(tape, P):
        return model.ssl_objective(P, batch, stacked)
    assert ad.grad_check(f, model.params) < 1e-4


def test_finetune_objective_gradients():
    model, patients = tiny_model(12)
    patients = patients[:3]
    model.params["head"] = np.random.default_rng(0).normal(size=(2, model.config.patient_dim))
    labels = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    batch = PatientBatch.build(patients)
    params = {k: v for k, v in model.params.items() if not k.startswith("dec_")}

    def f(tape, P):
        return model.finetune_objective(P, batch, labels)
    assert ad.grad_check(f, params) < 1e-4
