"""Layers, stochastic units and the optimizer built on :mod:`commgate.tensor`."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as T
from .tensor import Tensor

_TINY = np.finfo(np.float64).tiny


class Module:
    """Container that registers Tensor parameters and child modules by attribute name."""

    def __init__(self) -> None:
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_children", {})

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, child in self._children.items():
            yield from child.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, Tensor]:
        return dict(self.named_parameters())

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape))


class Linear(Module):
    """y = x W^T + b with W of shape (out, in)."""

    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.W = _uniform(rng, (out_features, in_features), in_features)
        self.b = _uniform(rng, (out_features,), in_features)

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[-1] != self.in_features:
            raise T.ShapeError(f"Linear: expected input width {self.in_features}, got shape {x.shape}")
        return T.linear(x, self.W, self.b)


class MLP(Module):
    """Two linear layers with a tanh hidden activation."""

    def __init__(self, in_features: int, hidden: int, out_features: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.fc1 = Linear(in_features, hidden, rng)
        self.fc2 = Linear(hidden, out_features, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(T.tanh(self.fc1(x)))


@dataclass
class LstmState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch: int, hidden: int) -> "LstmState":
        return cls(Tensor(np.zeros((batch, hidden))), Tensor(np.zeros((batch, hidden))))


class LSTMCell(Module):
    """Standard four-gate LSTM cell over a concatenated input vector.

    Gate order in the fused weight is input, forget, output, cell candidate.
    ``__call__`` uses the single-op kernel; :meth:`composed` builds the same
    update from elementwise ops and serves as its reference.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.input_size = input_size
        self.hidden_size = hidden_size
        fan_in = input_size + hidden_size
        self.W = _uniform(rng, (4 * hidden_size, fan_in), fan_in)
        self.b = _uniform(rng, (4 * hidden_size,), fan_in)

    def _check(self, x: Tensor) -> None:
        if x.shape[-1] != self.input_size:
            raise T.ShapeError(f"LSTMCell: expected input width {self.input_size}, got shape {x.shape}")

    def __call__(self, x: Tensor, state: LstmState) -> LstmState:
        self._check(x)
        H = self.hidden_size
        hc = T.lstm_cell(x, state.h, state.c, self.W, self.b)
        return LstmState(hc[..., :H], hc[..., H:])

    def composed(self, x: Tensor, state: LstmState) -> LstmState:
        self._check(x)
        H = self.hidden_size
        z = T.add(T.matmul(T.concat([x, state.h], axis=-1), T.transpose(self.W)), self.b)
        gates = T.sigmoid(z[..., : 3 * H])
        i, f, o = gates[..., :H], gates[..., H: 2 * H], gates[..., 2 * H: 3 * H]
        g = T.tanh(z[..., 3 * H:])
        c = T.add(T.mul(f, state.c), T.mul(i, g))
        h = T.mul(o, T.tanh(c))
        return LstmState(h, c)


def lstm_step(cell: LSTMCell, x: Tensor, state: LstmState) -> LstmState:
    return cell(x, state)


# ----------------------------------------------------------------------------
# stochastic units

def _check_finite(logits: Tensor, who: str) -> None:
    if np.isnan(logits.data).any():
        raise ValueError(f"{who}: logits contain NaN")


def sample_index(probs: np.ndarray, rng) -> np.ndarray:
    """Inverse-CDF draw of one index per row of ``probs``."""
    u = rng.random(probs.shape[:-1])
    idx = (np.cumsum(probs, axis=-1) < u[..., None]).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def sample_categorical(logits: Tensor, rng) -> tuple[np.ndarray, Tensor]:
    """Draw one index per row of ``logits`` (last axis is the support).

    Returns the indices and their log-probabilities; the log-probabilities are
    the only differentiable output.
    """
    _check_finite(logits, "sample_categorical")
    logp = T.log_softmax(logits, axis=-1)
    idx = sample_index(np.exp(logp.data), rng)
    return idx, select(logp, idx)


def select(x: Tensor, idx: np.ndarray) -> Tensor:
    """Pick ``x[..., idx]`` per row through a constant one-hot mask."""
    onehot = np.zeros(x.shape)
    np.put_along_axis(onehot, np.asarray(idx)[..., None], 1.0, axis=-1)
    return T.sum_(T.mul(x, Tensor(onehot)), axis=-1)


def entropy(logits: Tensor) -> Tensor:
    logp = T.log_softmax(logits, axis=-1)
    p = T.exp(logp)
    return T.mul(T.sum_(T.mul(p, logp), axis=-1), -1.0)


@dataclass(frozen=True)
class GumbelConfig:
    temperature: float = 1.0

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"Gumbel temperature must be positive, got {self.temperature}")


def gumbel_noise(shape, rng) -> np.ndarray:
    u = np.maximum(rng.random(shape), _TINY)
    return -np.log(-np.log(u))


def gumbel_softmax_st(logits: Tensor, cfg: GumbelConfig | float, rng) -> tuple[Tensor, Tensor]:
    """Straight-through Gumbel-Softmax sample along the last axis.

    Returns ``(hard, soft)``: ``hard`` is exactly one-hot in the forward pass
    and carries the gradient of ``soft``.
    """
    tau = cfg.temperature if isinstance(cfg, GumbelConfig) else float(cfg)
    if not tau > 0:
        raise ValueError(f"Gumbel temperature must be positive, got {tau}")
    _check_finite(logits, "gumbel_softmax_st")
    g = gumbel_noise(logits.shape, rng)
    soft = T.softmax(T.mul(T.add(logits, Tensor(g)), 1.0 / tau), axis=-1)
    k = soft.data.argmax(axis=-1)
    onehot = np.zeros(soft.shape)
    np.put_along_axis(onehot, k[..., None], 1.0, axis=-1)
    hard = T.add(T.stop_gradient(T.sub(Tensor(onehot), soft)), soft)
    # stop_gradient(onehot - y) + y rounds to within an ulp of the one-hot; pin it
    hard.data = onehot
    return hard, soft


# ----------------------------------------------------------------------------
# optimisation

def clip_grad_norm(params: list[Tensor], max_norm: float) -> float:
    grads = [p.grad for p in params if p.grad is not None]
    total = math.sqrt(sum(float((g * g).sum()) for g in grads))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad = p.grad * scale
    return total


class Adam:
    def __init__(self, params: list[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8) -> None:
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data = p.data - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None
