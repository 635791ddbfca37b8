import math

import numpy as np

from sherbet.optim import Adam, RMSProp, Schedule, hyperbolic_schedule, lr_at


def test_adam_single_step_oracle():
    x = {"w": np.array([[1.5, -2.0]])}
    g = np.array([[0.3, -0.7]])
    Adam(lr=0.01).step(x, {"w": g})
    m = 0.1 * g
    v = 0.001 * g * g
    m_hat, v_hat = m / 0.1, v / 0.001
    expected = np.array([[1.5, -2.0]]) - 0.01 * m_hat / (np.sqrt(v_hat) + 1e-8)
    assert np.max(np.abs(x["w"] - expected)) < 1e-12


def test_adam_two_steps_oracle():
    w, g1, g2 = 0.5, 0.2, -0.4
    x = {"w": np.array([[w]])}
    opt = Adam(lr=0.1)
    opt.step(x, {"w": np.array([[g1]])})
    opt.step(x, {"w": np.array([[g2]])})
    m, v = 0.0, 0.0
    for t, g in enumerate((g1, g2), start=1):
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        w -= 0.1 * (m / (1 - 0.9 ** t)) / (math.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    assert abs(x["w"][0, 0] - w) < 1e-12


def test_rmsprop_single_step_oracle():
    x = {"w": np.array([[0.25]])}
    RMSProp(lr=0.01).step(x, {"w": np.array([[2.0]])})
    expected = 0.25 - 0.01 * 2.0 / (math.sqrt(0.1 * 4.0) + 1e-7)
    assert abs(x["w"][0, 0] - expected) < 1e-12


def test_zero_lr_leaves_params_bitwise():
    x = {"w": np.array([[0.1, 0.2]])}
    before = x["w"].copy()
    RMSProp(lr=0.0).step(x, {"w": np.array([[1.0, -3.0]])})
    assert x["w"].tobytes() == before.tobytes()


def test_step_schedule_golden():
    s = Schedule(base=0.01, breakpoints=(100, 500), factor=0.1)
    assert lr_at(s, 0) == 0.01 and lr_at(s, 99) == 0.01
    assert abs(lr_at(s, 100) - 0.001) < 1e-18
    assert abs(lr_at(s, 500) - 0.0001) < 1e-18
    assert lr_at(Schedule(base=0.3), 10_000) == 0.3


def test_hyperbolic_schedules():
    mult = hyperbolic_schedule(0.01)
    assert lr_at(mult, 99) == 0.01
    assert abs(lr_at(mult, 250) - 1e-4) < 1e-18  # 0.01 * 0.1**2, at the floor
    assert lr_at(mult, 499) == 1e-4
    sub = hyperbolic_schedule(0.01, subtractive=True)
    assert lr_at(sub, 50) == 0.01
    assert lr_at(sub, 250) == 1e-4  # 0.01 - 2 * 0.01 hits the floor
