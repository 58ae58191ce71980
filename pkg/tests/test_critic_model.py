import numpy as np
import pytest

from tspd.critic import CriticConfig, critic_value, init_critic_head
from tspd.instances import generate_instances, rng_stream
from tspd.model import Model, ModelConfig
from tspd.nn import tensor as T
from tspd.nn.checkpoint import CheckpointError
from tspd.nn.tensor import Tensor

from helpers import FD_TOL, TINY, gradcheck


def test_zero_weights_give_final_bias():
    cfg = CriticConfig(hidden=4, depth=2)
    p = init_critic_head(cfg, 6, rng_stream(0))
    for k, t in p.items():
        if "W" in k:
            t.data[:] = 0.0
    p["critic.head.b1"].data[:] = 3.25
    out = critic_value(np.random.default_rng(0).normal(size=(3, 5, 6)), p, cfg)
    assert np.array_equal(out.data, [3.25, 3.25, 3.25])


def test_permutation_invariance():
    cfg = CriticConfig(hidden=8, depth=3)
    p = init_critic_head(cfg, 6, rng_stream(1))
    x = np.random.default_rng(1).normal(size=(2, 7, 6))
    perm = np.random.default_rng(2).permutation(7)
    a = critic_value(x, p, cfg).data
    b = critic_value(x[:, perm], p, cfg).data
    assert np.allclose(a, b, rtol=0, atol=1e-12)


def test_depth_validation():
    with pytest.raises(ValueError):
        CriticConfig(depth=0)


def test_critic_head_gradients():
    cfg = CriticConfig(hidden=5, depth=2)
    p = init_critic_head(cfg, 4, rng_stream(3))
    x = Tensor(np.random.default_rng(3).normal(size=(3, 6, 4)), requires_grad=True)
    target = np.array([1.0, -0.5, 2.0])
    errs = gradcheck(lambda: T.mean(T.square(T.sub(critic_value(x, p, cfg), target))), {**p, "x": x})
    assert max(errs.values()) < FD_TOL, errs


def test_full_critic_gradients():
    m = Model.init(TINY, 4)
    insts = list(generate_instances(5, 2, 6, scale=1))
    costs = np.array([2.0, 3.0])
    errs = gradcheck(lambda: T.mean(T.square(T.sub(costs, m.value(insts)))), m.critic)
    assert max(errs.values()) < FD_TOL, {k: v for k, v in errs.items() if v >= FD_TOL}


def test_value_scaled_by_coordinate_scale():
    cfg = ModelConfig(d_h=8, heads=2, layers=1, d_ff=8, critic_hidden=4, coord_scale=100.0)
    m = Model.init(cfg, 0)
    for k, t in m.critic.items():
        if k.startswith("critic.head.W"):
            t.data[:] = 0.0
    m.critic["critic.head.b1"].data[:] = 2.0
    assert np.allclose(m.value(list(generate_instances(5, 2, 0))).data, 200.0)


def test_model_checkpoint_round_trip(tmp_path):
    m = Model.init(TINY, 5)
    m.save(tmp_path / "m.ckpt", {"note": "x"})
    back, meta = Model.load(tmp_path / "m.ckpt", TINY)
    assert meta == {"note": "x"}
    for k, v in m.arrays().items():
        assert np.array_equal(back.arrays()[k], v)
    insts = list(generate_instances(6, 3, 0, scale=1))
    assert np.array_equal(m.solve(insts).costs, back.solve(insts).costs)


def test_model_checkpoint_config_mismatch(tmp_path):
    Model.init(TINY, 5).save(tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError):
        Model.load(tmp_path / "m.ckpt", ModelConfig())


def test_snapshot_is_independent():
    m = Model.init(TINY, 6)
    snap = m.snapshot()
    m.actor["decoder.C"].data = m.actor["decoder.C"].data + 1
    assert snap.actor["decoder.C"].data == 10.0


def test_actor_and_critic_share_no_tensors():
    m = Model.init(TINY, 7)
    assert not {id(t) for t in m.actor.values()} & {id(t) for t in m.critic.values()}
    assert not any(np.shares_memory(a.data, c.data) for a in m.actor.values() for c in m.critic.values())
