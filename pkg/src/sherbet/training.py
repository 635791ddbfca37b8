"""Self-supervised and fine-tuning loops."""
import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .decoder import build_targets
from .encoder import PatientBatch
from .errors import ConfigError, NonFiniteLoss, SingleAdmissionPatientInFineTune
from .metrics import evaluate
from .optim import RMSProp, Schedule, lr_at

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    task: str = "ssl"
    epochs: int = 1000
    batch_size: int = 128
    lr: float = 0.01
    breakpoints: tuple = (100, 500)
    decay: float = 0.1
    seed: int = 0
    early_stopping: int = 0  # patience in epochs; 0 disables

    def check(self):
        if self.epochs <= 0 or self.batch_size <= 0:
            raise ConfigError("epochs and batch_size must be positive")
        if not 0.0 <= self.decay < 1.0 and self.breakpoints:
            raise ConfigError("decay factor must lie in [0, 1)")
        if self.lr < 0:
            raise ConfigError("learning rate must be non-negative")

    def schedule(self):
        return Schedule(base=self.lr, breakpoints=tuple(self.breakpoints), factor=self.decay)


def _batches(n, size, rng):
    order = rng.permutation(n)
    return [order[lo:lo + size] for lo in range(0, n, size)]


def _stack_targets(targets, idx, levels):
    return {h: np.stack([targets[i][h] for i in idx]) for h in levels}


def run_ssl(model, patients, config, log=None):
    """Train encoder and decoder on the hierarchy proxy task.

    ``patients`` is a list of admission lists (code columns). Returns the
    epoch-mean loss curve. ``log(record)`` receives one dict per epoch.
    """
    config.check()
    levels = [h for h, _ in model.plan]
    targets = [build_targets(np.concatenate(adms), model.ont, levels) for adms in patients]
    names = model.encoder_names() + model.decoder_names()
    opt = RMSProp(lr=config.lr)
    schedule = config.schedule()
    order_rng = np.random.default_rng([config.seed, 11])
    drop_rng = np.random.default_rng([config.seed, 12])
    curve = []
    for epoch in range(config.epochs):
        opt.lr = lr_at(schedule, epoch)
        total = 0.0
        for b, idx in enumerate(_batches(len(patients), config.batch_size, order_rng)):
            batch = PatientBatch.build([patients[i] for i in idx])
            tape = ad.Tape()
            P = model.leaves(tape, names)
            loss = model.ssl_objective(P, batch, _stack_targets(targets, idx, levels), True, drop_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLoss(f"self-supervised loss is {value} at epoch {epoch}, batch {b}")
            tape.backward(loss)
            opt.step(model.params, tape.grads())
            total += value * len(idx)
        curve.append(total / len(patients))
        if log is not None:
            log({"epoch": epoch, "loss": curve[-1], "lr": opt.lr, "val": {}})
    return curve


def _val_summary(report):
    vals = report.to_obj()
    return {k: v for k, v in vals.items() if k not in ("task", "n", "threshold")}


def primary_metric(task, values):
    return values["r_at"]["10"] if task == "diagnosis" else values["auc"]


def run_finetune(model, train, valid, task, config, trainable=None, log=None, mask=None, threshold=0.5):
    """Fine-tune the encoder stack with its task head on ``TaskInstance`` lists.

    Returns the per-epoch validation metric dicts. Creates the head when the
    model has none. ``trainable`` restricts which parameters move.
    """
    config.check()
    for inst in list(train) + list(valid):
        if len(inst.inputs) < 1:
            raise SingleAdmissionPatientInFineTune(f"patient {inst.patient_id!r} has no input admission")
    out_dim = train[0].label.size
    if not model.has_head:
        model.add_head(out_dim, np.random.default_rng([config.seed, 20]))
    names = trainable if trainable is not None else model.encoder_names() + ["head"]
    inputs = [inst.inputs for inst in train]
    labels = np.stack([inst.label for inst in train])
    opt = RMSProp(lr=config.lr)
    schedule = config.schedule()
    order_rng = np.random.default_rng([config.seed, 21])
    drop_rng = np.random.default_rng([config.seed, 22])
    curve = []
    best, best_params, stale = -np.inf, None, 0
    for epoch in range(config.epochs):
        opt.lr = lr_at(schedule, epoch)
        total = 0.0
        for b, idx in enumerate(_batches(len(train), config.batch_size, order_rng)):
            batch = PatientBatch.build([inputs[i] for i in idx])
            tape = ad.Tape()
            P = model.leaves(tape, names)
            loss = model.finetune_objective(P, batch, labels[idx], True, drop_rng)
            value = loss.item()
            if not np.isfinite(value):
                raise NonFiniteLoss(f"fine-tune loss is {value} at epoch {epoch}, batch {b}")
            tape.backward(loss)
            opt.step(model.params, tape.grads())
            total += value * len(idx)
        val = {}
        if valid:
            scores = model.predict([inst.inputs for inst in valid])
            truth = np.stack([inst.label for inst in valid])
            val = _val_summary(evaluate(task, scores, truth, threshold, mask=mask))
        curve.append(val)
        if log is not None:
            log({"epoch": epoch, "loss": total / len(train), "lr": opt.lr, "val": val})
        if config.early_stopping and val:
            score = primary_metric(task, val)
            if score > best:
                best, stale = score, 0
                best_params = {k: v.copy() for k, v in model.params.items()}
            else:
                stale += 1
                if stale >= config.early_stopping:
                    model.params.update(best_params)
                    break
    return curve
