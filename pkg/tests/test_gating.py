import numpy as np
import pytest

from commgate import gating, nn
from commgate import tensor as T
from commgate.gating import GateMode, GlobalGate, PairwiseGate
from commgate.tensor import Tape, Tensor


def biased_gate(off: float, on: float, hidden: int = 4) -> GlobalGate:
    g = GlobalGate(hidden, np.random.default_rng(0))
    g.head.W.data[:] = 0.0
    g.head.b.data[:] = [off, on]
    return g


def test_mode_parsing_and_validation():
    assert GateMode.parse("random:0.3") == GateMode("random", 0.3)
    assert str(GateMode.parse("random:0.15")) == "random:0.15"
    assert GateMode.parse("gs").learned and not GateMode.parse("always_on").learned
    with pytest.raises(ValueError, match="unknown gate mode"):
        GateMode.parse("sometimes")
    with pytest.raises(ValueError):
        GateMode("random", 1.5)


def test_always_on_has_no_gradient_path():
    g = biased_gate(0.0, 0.0)
    d = g(Tensor(np.ones((3, 4))), GateMode("always_on"), np.random.default_rng(0))
    assert d.mask.tolist() == [1.0, 1.0, 1.0]
    assert not d.gate.requires_grad and d.log_prob is None and d.soft is None


def test_heavily_off_logits_stay_closed():
    g = biased_gate(0.0, -1000.0)
    rng = np.random.default_rng(0)
    for kind in ("reinforce", "gs"):
        d = g(Tensor(np.ones((10_000, 4))), GateMode(kind), rng)
        assert (d.mask == 0).mean() > 0.999


def test_random_gate_frequency():
    g = biased_gate(0.0, 0.0)
    d = g(Tensor(np.zeros((100_000, 4))), GateMode("random", 0.3), np.random.default_rng(1))
    assert abs(d.mask.mean() - 0.3) < 0.01


def test_reinforce_logprob_matches_recomputation():
    rng = np.random.default_rng(2)
    g = GlobalGate(4, rng)
    h = Tensor(rng.standard_normal((500, 4)))
    d = g(h, GateMode("reinforce"), rng)
    logp = nn.log_softmax_np(d.logits.data)
    expected = np.take_along_axis(logp, d.mask.astype(int)[:, None], axis=-1)[:, 0]
    np.testing.assert_allclose(d.log_prob, expected, rtol=0, atol=1e-14)
    assert d.soft is None


def test_gs_mask_is_argmax_of_soft_sample():
    rng = np.random.default_rng(3)
    g = GlobalGate(4, rng)
    d = g(Tensor(rng.standard_normal((500, 4))), GateMode("gs"), rng)
    assert np.array_equal(d.mask, d.soft.data.argmax(-1))
    assert d.log_prob is None
    assert set(np.unique(d.gate.data)) <= {0.0, 1.0}


def test_deterministic_gate_is_argmax():
    g = biased_gate(0.2, 0.1)
    d = g(Tensor(np.zeros((5, 4))), GateMode("gs"), None, deterministic=True)
    assert d.mask.tolist() == [0.0] * 5


def test_gs_gradient_flows_only_through_aggregation():
    rng = np.random.default_rng(4)
    g = GlobalGate(3, rng)
    with Tape():
        h = Tensor(rng.standard_normal((6, 3)))
        d = g(h, GateMode("gs"), rng)
        T.backward(T.sum_(T.mul(d.gate, Tensor(rng.standard_normal(6)))))
    assert np.abs(g.head.W.grad).sum() > 0


def test_reinforce_gate_has_no_pathwise_gradient():
    rng = np.random.default_rng(5)
    g = GlobalGate(3, rng)
    d = g(Tensor(rng.standard_normal((6, 3))), GateMode("reinforce"), rng)
    assert not d.gate.requires_grad


def test_pairwise_gate_shapes_and_peer_validation():
    rng = np.random.default_rng(6)
    gate = PairwiseGate(5 + 3 * 2, 3, rng)
    o = rng.standard_normal((2, 3, 5))
    d = gating.pairwise_gate(gate, o, rng.standard_normal((2, 3, 3, 2)), GateMode("gs"), rng)
    assert d.mask.shape == (2, 3, 3)
    with pytest.raises(ValueError, match="expected peer info for 3 agents"):
        gating.pairwise_gate(gate, o, rng.standard_normal((2, 3, 4, 2)), GateMode("gs"), rng)


def test_pairwise_always_off_and_symmetric_logits():
    rng = np.random.default_rng(7)
    gate = PairwiseGate(4, 3, rng)
    feats = Tensor(np.zeros((10_000, 4)))
    assert not gate(feats, GateMode("always_off"), rng).mask.any()
    gate.mlp.fc2.W.data[:] = 0.0
    gate.mlp.fc2.b.data[:] = 0.0
    d = gate(feats, GateMode("reinforce"), rng)
    np.testing.assert_allclose(d.mask.mean(axis=0), 0.5, atol=0.02)


def test_force_open_override():
    rng = np.random.default_rng(8)
    g = biased_gate(5.0, -5.0)
    d = g(Tensor(np.zeros((4, 4))), GateMode("reinforce"), rng)
    free = np.array([True, False, True, False])
    assert gating.force_open_override(d, free, enabled=False) is d
    opened = gating.force_open_override(d, free, enabled=True)
    assert opened.mask.tolist() == [1.0, 0.0, 1.0, 0.0]
    assert opened.active.tolist() == [False, True, False, True]
    unchanged = gating.force_open_override(d, np.zeros(4, dtype=bool), enabled=True)
    assert unchanged.mask.tolist() == d.mask.tolist()


def test_nan_logits_rejected():
    g = biased_gate(np.nan, 0.0)
    with pytest.raises(ValueError, match="NaN"):
        g(Tensor(np.zeros((1, 4))), GateMode("gs"), np.random.default_rng(0))
