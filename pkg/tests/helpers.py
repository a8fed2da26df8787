"""Finite-difference oracle and the random-case table shared by unit and acceptance tests."""
from __future__ import annotations

import numpy as np

from commgate import comm
from commgate import tensor as T

FD_STEP = 1e-5
FD_TOL = 1e-4


def rel_err(a, n, floor: float = 1e-3) -> float:
    a, n = np.asarray(a, dtype=float), np.asarray(n, dtype=float)
    return float(np.max(np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor), initial=0.0))


def gradcheck(fn, arrays: list[np.ndarray], rng: np.random.Generator, step: float = FD_STEP) -> float:
    """Largest relative error between backward() and central differences.

    The scalar loss is ``sum(fn(*inputs) * P)`` for a fixed random projection
    ``P``, so every output coordinate takes part.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    with T.Tape():
        probe = fn(*[T.Tensor(a) for a in arrays])
    proj = rng.standard_normal(probe.shape)

    def loss_value(vals):
        with T.no_grad():
            return float((fn(*[T.Tensor(v) for v in vals]).data * proj).sum())

    with T.Tape():
        params = [T.parameter(a) for a in arrays]
        T.backward(T.sum_(T.mul(fn(*params), T.Tensor(proj))))
    worst = 0.0
    for k, a in enumerate(arrays):
        analytic = params[k].grad if params[k].grad is not None else np.zeros_like(a)
        numeric = np.zeros_like(a)
        for idx in np.ndindex(a.shape):
            plus = [v.copy() for v in arrays]
            minus = [v.copy() for v in arrays]
            plus[k][idx] += step
            minus[k][idx] -= step
            numeric[idx] = (loss_value(plus) - loss_value(minus)) / (2 * step)
        worst = max(worst, rel_err(analytic, numeric))
    return worst


def _shape(rng, lo=1, hi=4, ndim=2):
    return tuple(int(d) for d in rng.integers(lo, hi + 1, size=ndim))


def _case_add(rng):
    kind = rng.integers(3)
    s = _shape(rng)
    other = s if kind == 0 else ((1,) if kind == 1 else (s[-1],))
    return T.add, [rng.standard_normal(s), rng.standard_normal(other)]


def _case_sub(rng):
    s = _shape(rng)
    return T.sub, [rng.standard_normal(s), rng.standard_normal(s if rng.random() < 0.5 else (s[-1],))]


def _case_mul(rng):
    kind = rng.integers(3)
    s = _shape(rng)
    other = s if kind == 0 else ((1,) if kind == 1 else (s[-1],))
    return T.mul, [rng.standard_normal(s), rng.standard_normal(other)]


def _case_maximum(rng):
    s = _shape(rng)
    a = rng.standard_normal(s)
    gap = rng.uniform(0.01, 1.0, size=s) * rng.choice([-1.0, 1.0], size=s)
    return T.maximum, [a, a + gap]


def _case_log(rng):
    return T.log, [rng.uniform(0.2, 3.0, size=_shape(rng))]


def _case_reciprocal(rng):
    return T.reciprocal, [rng.uniform(0.3, 2.0, size=_shape(rng)) * rng.choice([-1.0, 1.0])]


def _unary(fn, scale=1.0):
    return lambda rng: (fn, [scale * rng.standard_normal(_shape(rng))])


def _case_softmax(rng):
    axis = int(rng.integers(2))
    return (lambda x: T.softmax(x, axis=axis)), [2 * rng.standard_normal(_shape(rng, 2, 4))]


def _case_log_softmax(rng):
    axis = int(rng.integers(2))
    return (lambda x: T.log_softmax(x, axis=axis)), [2 * rng.standard_normal(_shape(rng, 2, 4))]


def _case_sum(rng):
    axis = [None, 0, 1, -1][int(rng.integers(4))]
    keep = bool(rng.integers(2))
    return (lambda x: T.sum_(x, axis=axis, keepdims=keep)), [rng.standard_normal(_shape(rng, ndim=3))]


def _case_mean(rng):
    axis = [None, 0, 1, -1][int(rng.integers(4))]
    keep = bool(rng.integers(2))
    return (lambda x: T.mean(x, axis=axis, keepdims=keep)), [rng.standard_normal(_shape(rng, ndim=3))]


def _case_matmul(rng):
    n, k, m = _shape(rng, ndim=3)
    kind = rng.integers(3)
    if kind == 0:
        return T.matmul, [rng.standard_normal((n, k)), rng.standard_normal((k, m))]
    b = int(rng.integers(1, 4))
    if kind == 1:
        return T.matmul, [rng.standard_normal((b, n, k)), rng.standard_normal((k, m))]
    return T.matmul, [rng.standard_normal((b, n, k)), rng.standard_normal((b, k, m))]


def _case_transpose(rng):
    return T.transpose, [rng.standard_normal(_shape(rng, ndim=3))]


def _case_reshape(rng):
    a, b, c = _shape(rng, ndim=3)
    return (lambda x: T.reshape(x, (a * b, c))), [rng.standard_normal((a, b, c))]


def _case_broadcast(rng):
    a, b = _shape(rng)
    return (lambda x: T.broadcast_to(x, (a, b, 3))), [rng.standard_normal((a, 1, 3))]


def _case_expand(rng):
    s = _shape(rng)
    axis = int(rng.integers(-3, 3))
    return (lambda x: T.expand(x, axis, 3)), [rng.standard_normal(s)]


def _case_stack(rng):
    s = _shape(rng)
    axis = int(rng.integers(3))
    return (lambda a, b: T.stack([a, b], axis=axis)), [rng.standard_normal(s), rng.standard_normal(s)]


def _case_concat(rng):
    a, b, c = _shape(rng, ndim=3)
    return (lambda x, y: T.concat([x, y], axis=-1)), [rng.standard_normal((a, b)), rng.standard_normal((a, c))]


def _case_slice(rng):
    a, b = _shape(rng, 2, 5)
    lo = int(rng.integers(0, b - 1))
    return (lambda x: x[..., lo: b]), [rng.standard_normal((a, b))]


def _case_where(rng):
    s = _shape(rng)
    cond = rng.random(s) < 0.5
    return (lambda a, b: T.where(cond, a, b)), [rng.standard_normal(s), rng.standard_normal(s)]


def _case_linear(rng):
    n, i, o = _shape(rng, ndim=3)
    lead = (int(rng.integers(1, 3)), n)
    return T.linear, [rng.standard_normal(lead + (i,)), rng.standard_normal((o, i)), rng.standard_normal(o)]


def _case_lstm(rng):
    B, nx, H = _shape(rng, 1, 3, ndim=3)
    return T.lstm_cell, [rng.standard_normal((B, nx)), rng.standard_normal((B, H)), rng.standard_normal((B, H)),
                         0.7 * rng.standard_normal((4 * H, nx + H)), rng.standard_normal(4 * H)]


OP_CASES = {
    "add": _case_add, "sub": _case_sub, "mul": _case_mul, "maximum": _case_maximum,
    "reciprocal": _case_reciprocal, "tanh": _unary(T.tanh), "sigmoid": _unary(T.sigmoid, 2.0),
    "exp": _unary(T.exp), "log": _case_log, "softmax": _case_softmax, "log_softmax": _case_log_softmax,
    "sum": _case_sum, "mean": _case_mean, "matmul": _case_matmul, "transpose": _case_transpose,
    "reshape": _case_reshape, "broadcast_to": _case_broadcast, "expand": _case_expand,
    "stack": _case_stack, "concat": _case_concat, "slice": _case_slice, "where": _case_where,
    "linear": _case_linear, "lstm_cell": _case_lstm,
}


def _gates(rng, E, N):
    """Binary gates with a few relaxed values, so the path through c is exercised too."""
    g = (rng.random((E, N, N)) < 0.6).astype(float)
    return np.where(rng.random((E, N, N)) < 0.3, rng.uniform(0.1, 0.9, (E, N, N)), g)


def _case_commnet(rng):
    E, N, d = int(rng.integers(1, 3)), int(rng.integers(2, 4)), int(rng.integers(1, 4))
    return (lambda v, g: comm.aggregate_commnet(v, g, N)), [rng.standard_normal((E, N, N, d)), _gates(rng, E, N)]


def _case_tarmac(rng):
    E, N, dk, dv = int(rng.integers(1, 3)), int(rng.integers(2, 4)), 2, 3
    return (lambda q, k, v, g: comm.aggregate_tarmac(q, k, v, g)), [
        rng.standard_normal((E, N, dk)), rng.standard_normal((E, N, N, dk)),
        rng.standard_normal((E, N, N, dv)), _gates(rng, E, N)]


def _case_tarmac_masked(rng):
    E, N = int(rng.integers(1, 3)), int(rng.integers(2, 4))
    g = (rng.random((E, N, N)) < 0.6).astype(float)
    g[..., 0] = 1.0
    return (lambda q, k, v: comm.aggregate_tarmac(q, k, v, T.Tensor(g), masked=True)), [
        rng.standard_normal((E, N, 2)), rng.standard_normal((E, N, N, 2)), rng.standard_normal((E, N, N, 3))]


def _case_tarmac_sigmoid(rng):
    E, N = int(rng.integers(1, 3)), int(rng.integers(2, 4))
    return (lambda q, k, v, g, w, b: comm.aggregate_tarmac_sigmoid(q, k, v, g, w, b)), [
        rng.standard_normal((E, N, 2)), rng.standard_normal((E, N, N, 2)), rng.standard_normal((E, N, N, 3)),
        _gates(rng, E, N), rng.standard_normal(1), rng.standard_normal(1)]


AGGREGATION_CASES = {
    "commnet": _case_commnet, "tarmac": _case_tarmac, "tarmac_masked": _case_tarmac_masked,
    "tarmac_sigmoid": _case_tarmac_sigmoid,
}


def worst_case_error(make_case, n_cases: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_cases):
        fn, arrays = make_case(rng)
        worst = max(worst, gradcheck(fn, arrays, rng))
    return worst


def one_step_reinforce_error(penalty: float = 0.1) -> float:
    """Trainer gradients on a one-agent, one-step episode against the hand-computed update.

    Reward 1 and an open gate give penalised r = R = SR = 1 - penalty, so the
    gate head receives -(1 - penalty) (onehot(1) - pi) for its bias and the
    outer product with h for its weights. The value head (baseline off) and
    the single-action policy head receive nothing. Returns the largest
    absolute deviation.
    """
    from commgate.agent import AgentState, PolicyNet, agent_step
    from commgate.envs import Secret
    from commgate.gating import GateMode
    from commgate.trainer import TrainConfig, compute_gradients

    env = Secret(1, n_agents=1, max_steps=1, n_actions=1)
    cfg = TrainConfig(gate=GateMode("reinforce"), penalty=penalty, gamma=1.0, entropy_coef=0.0, baseline=False,
                      multitask=False, episodes_per_update=1, workers=1)
    for seed in range(100):
        net = PolicyNet(env.spec.obs_dim, 1, 1, np.random.default_rng(0))
        net.gate.head.b.data[:] = [0.0, 0.4]
        batch, losses, grads = compute_gradients(net, [env], [np.random.default_rng(seed)], [1.0], cfg)
        if batch.masks[0, 0, 0] == 1:
            break
    assert batch.rewards.tolist() == [[[1.0]]]
    with T.no_grad():
        out = agent_step(net, env.reset(np.random.default_rng(0)), np.ones(1), AgentState.initial(net, 1),
                         GateMode("always_on"), None, deterministic=True)
        z = net.gate.head(out.lstm.h).data[0, 0]
    h = out.lstm.h.data[0, 0]
    p = np.exp(z - z.max()) / np.exp(z - z.max()).sum()
    ret = 1.0 - penalty
    d = -ret * (np.array([0.0, 1.0]) - p)
    errs = [np.abs(grads["gate.head.b"] - d).max(), np.abs(grads["gate.head.W"] - np.outer(d, h)).max(),
            abs(losses["gate"].item() + ret * np.log(p[1]))]
    errs += [np.abs(grads[k]).max() for k in ("value.W", "value.b", "action.W", "action.b")]
    return float(max(errs))
