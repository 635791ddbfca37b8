"""First-order optimizers and piecewise-constant learning-rate schedules."""
from dataclasses import dataclass, field

import numpy as np

LR_FLOOR = 1e-4


@dataclass
class Schedule:
    """Piecewise-constant learning rate.

    ``mode="step"`` multiplies ``base`` by ``factor`` at each breakpoint in
    ``breakpoints``. ``mode="every"`` decays every ``period`` epochs, either
    multiplicatively (``subtractive=False``) or by subtracting ``factor``;
    that mode is floored at ``LR_FLOOR``.
    """
    base: float = 0.01
    breakpoints: tuple = ()
    factor: float = 0.1
    mode: str = "step"
    period: int = 100
    subtractive: bool = False


def lr_at(schedule, epoch):
    if schedule.mode == "step":
        lr = schedule.base
        for bp in schedule.breakpoints:
            if epoch >= bp:
                lr *= schedule.factor
        return lr
    k = epoch // schedule.period
    if schedule.subtractive:
        lr = schedule.base - schedule.factor * k
    else:
        lr = schedule.base * schedule.factor ** k
    return max(lr, LR_FLOOR)


def hyperbolic_schedule(base=0.01, subtractive=False):
    """Decay every 100 epochs: x0.1 by default, or minus 0.01 when ``subtractive``."""
    if subtractive:
        return Schedule(base=base, mode="every", period=100, factor=0.01, subtractive=True)
    return Schedule(base=base, mode="every", period=100, factor=0.1)


@dataclass
class OptimizerState:
    algorithm: str
    lr: float
    step: int = 0
    moments: dict = field(default_factory=dict)


class Adam:
    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.state = OptimizerState("Adam", lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    def step(self, params, grads):
        """Update ``params`` in place from ``grads`` (dicts keyed by name)."""
        st = self.state
        st.step += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** st.step
        c2 = 1.0 - b2 ** st.step
        for name, g in grads.items():
            m, v = st.moments.setdefault(name, (np.zeros_like(g), np.zeros_like(g)))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            params[name] -= st.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class RMSProp:
    def __init__(self, lr=0.01, rho=0.9, eps=1e-7):
        self.state = OptimizerState("RMSProp", lr)
        self.rho, self.eps = rho, eps

    @property
    def lr(self):
        return self.state.lr

    @lr.setter
    def lr(self, value):
        self.state.lr = value

    def step(self, params, grads):
        st = self.state
        st.step += 1
        for name, g in grads.items():
            (v,) = st.moments.setdefault(name, (np.zeros_like(g),))
            v *= self.rho
            v += (1.0 - self.rho) * g * g
            params[name] -= st.lr * g / (np.sqrt(v) + self.eps)
