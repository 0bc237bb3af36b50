import numpy as np
import pytest

from drumaware.errors import ConfigError, NumericError
from drumaware.optim import LookaheadAdam, adam_step, lookahead_sync, lr_on_plateau


def test_zero_gradient_step():
    p = {"w": np.array([1.0, -2.0])}
    opt = LookaheadAdam(p)
    opt.adam_step({"w": np.zeros(2)})
    assert np.array_equal(p["w"], [1.0, -2.0])


def test_first_step_hand_value():
    p = {"w": np.array(0.0)}
    adam_step(LookaheadAdam(p, lr=0.01), {"w": np.array(1.0)})
    assert np.isclose(p["w"], -0.01, rtol=1e-6)


def test_constant_gradient_limit():
    p = {"w": np.array([0.0])}
    opt = LookaheadAdam(p, lr=0.01)
    prev = 0.0
    for _ in range(3000):
        opt.adam_step({"w": np.array([0.3])})
        step = prev - p["w"][0]
        prev = p["w"][0]
    assert np.isclose(step, 0.01, rtol=1e-4)


def test_non_finite_gradient_rejected():
    p = {"w": np.zeros(3)}
    opt = LookaheadAdam(p)
    with pytest.raises(NumericError):
        opt.adam_step({"w": np.array([0, np.inf, 0])})
    assert opt.t == 0 and np.all(p["w"] == 0)


def test_sync_examples():
    p = {"w": np.array([1.0])}
    opt = LookaheadAdam(p, alpha=0.5)
    opt.slow["w"][...] = 0.0
    slow, fast = lookahead_sync(opt)
    assert slow["w"][0] == 0.5 and fast["w"][0] == 0.5
    opt = LookaheadAdam(p, alpha=1.0)
    opt.slow["w"][...] = -3.0
    p["w"][...] = 2.0
    opt.lookahead_sync()
    assert opt.slow["w"][0] == 2.0 and p["w"][0] == 2.0


def test_alpha_zero_resets():
    p = {"w": np.array([0.7, -0.2])}
    start = p["w"].copy()
    opt = LookaheadAdam(p, alpha=0.0, k=3)
    rng = np.random.default_rng(0)
    for i in range(1, 10):
        opt.step({"w": rng.normal(size=2)})
        if i % 3 == 0:
            assert np.array_equal(p["w"], start)
        else:
            assert not np.array_equal(p["w"], start)


def test_k1_alpha1_matches_plain_adam():
    rng = np.random.default_rng(3)
    grads = [rng.normal(size=(4, 3)) for _ in range(50)]
    a = {"w": rng.normal(size=(4, 3))}
    b = {"w": a["w"].copy()}
    la = LookaheadAdam(a, k=1, alpha=1.0)
    plain = LookaheadAdam(b, k=10 ** 9)   # never syncs
    for g in grads:
        la.step({"w": g})
        plain.adam_step({"w": g})
        assert np.array_equal(a["w"], b["w"])


def test_plateau_schedule():
    opt = LookaheadAdam({"w": np.zeros(1)}, lr=1e-2)
    for i in range(50):
        assert lr_on_plateau(opt, 1.0 - 0.01 * i) == 1e-2
    opt = LookaheadAdam({"w": np.zeros(1)}, lr=1e-2)
    opt.lr_on_plateau(1.0)
    lrs = [opt.lr_on_plateau(1.0) for _ in range(40)]
    assert np.isclose(lrs[19], 2e-3) and np.isclose(lrs[18], 1e-2)
    assert np.isclose(lrs[39], 4e-4)
    assert all(b <= a for a, b in zip(lrs, lrs[1:]))


def test_plateau_threshold():
    opt = LookaheadAdam({"w": np.zeros(1)}, lr=1e-2)
    opt.lr_on_plateau(1.0)
    for i in range(25):
        opt.lr_on_plateau(1.0 - 5e-7 * (i % 2))   # gains below the threshold
    assert opt.lr < 1e-2


def test_config_errors():
    with pytest.raises(ConfigError):
        LookaheadAdam({"w": np.zeros(1)}, lr=-1)
    with pytest.raises(ConfigError):
        LookaheadAdam({"w": np.zeros(1)}, alpha=1.5)
    with pytest.raises(ConfigError):
        LookaheadAdam({"w": np.zeros(1)}, k=0)


def test_state_round_trip():
    rng = np.random.default_rng(5)
    p = {"a": rng.normal(size=3), "b": rng.normal(size=(2, 2))}
    q = {k: v.copy() for k, v in p.items()}
    o1, o2 = LookaheadAdam(p), LookaheadAdam(q)
    for _ in range(7):
        g = {k: rng.normal(size=v.shape) for k, v in p.items()}
        o1.step(g)
    o1.lr_on_plateau(0.3)
    o2.load_state_dict(o1.state_dict())
    for k in p:
        q[k][...] = p[k]
    g = {k: rng.normal(size=v.shape) for k, v in p.items()}
    o1.step(g)
    o2.step(g)
    for k in p:
        assert np.array_equal(p[k], q[k])
    assert o2.t == o1.t and o2.best == o1.best
