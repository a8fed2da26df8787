"""Message generation and gated aggregation: CommNet, TarMAC, TarMAC-Sigmoid.

Aggregators take sender-indexed stacks: ``values`` of shape ``(..., S, d)``
and ``gates`` of shape ``(..., S)`` holding each sender's delivery mask for
this recipient. Gates may be constants or straight-through samples; closed
senders still enter the computation so a gate gets gradient either way.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

from . import tensor as T
from .nn import Linear, Module
from .tensor import Tensor

COMMNET_DIM = 64
TARMAC_KEY_DIM = 16
TARMAC_VALUE_DIM = 32


class Arch(str, Enum):
    COMMNET = "commnet"
    TARMAC = "tarmac"
    TARMAC_SIGMOID = "tarmac_sigmoid"


def _gate_weighted_sum(weights: Tensor, values: Tensor) -> Tensor:
    """sum_j weights[..., j] * values[..., j, :]"""
    w = T.expand(weights, -1, values.shape[-1])
    return T.sum_(T.mul(w, values), axis=-2)


def _scores(q: Tensor, keys: Tensor) -> Tensor:
    """q^T k_j for every sender j; q is (..., dk), keys (..., S, dk)."""
    qb = T.expand(q, -2, keys.shape[-2])
    return T.sum_(T.mul(qb, keys), axis=-1)


def _check(values: Tensor, gates: Tensor, who: str) -> None:
    if gates.shape != values.shape[:-1]:
        raise T.ShapeError(f"{who}: gates {gates.shape} do not match values {values.shape}")


def aggregate_commnet(values, gates, n_agents: int | None = None) -> Tensor:
    """x = (1/N) sum_j c_j v_j; the divisor is N however many gates are open."""
    values, gates = T.as_tensor(values), T.as_tensor(gates)
    _check(values, gates, "aggregate_commnet")
    n = values.shape[-2] if n_agents is None else n_agents
    return T.mul(_gate_weighted_sum(gates, values), 1.0 / n)


def tarmac_attention(q, keys, gates, masked: bool = False) -> Tensor:
    """Softmax attention weights with the gate multiplying each score.

    With ``masked=False`` a closed sender still contributes exp(0) to the
    normaliser. ``masked=True`` removes closed senders from the softmax.
    """
    q, keys, gates = T.as_tensor(q), T.as_tensor(keys), T.as_tensor(gates)
    s = _scores(q, keys)
    if masked:
        closed = gates.data <= 0
        logits = T.add(s, Tensor(np.where(closed, -1e30, 0.0)))
    else:
        logits = T.mul(gates, s)
    return T.softmax(logits, axis=-1)


def aggregate_tarmac(q, keys, values, gates, masked: bool = False) -> Tensor:
    values, gates = T.as_tensor(values), T.as_tensor(gates)
    _check(values, gates, "aggregate_tarmac")
    alpha = tarmac_attention(q, keys, gates, masked=masked)
    return _gate_weighted_sum(T.mul(gates, alpha), values)


def aggregate_tarmac_sigmoid(q, keys, values, gates, w_scale, b_scale) -> Tensor:
    """x = sum_j c_j sigmoid(w_scale q^T k_j + b_scale) v_j; no cross-sender coupling."""
    values, gates = T.as_tensor(values), T.as_tensor(gates)
    _check(values, gates, "aggregate_tarmac_sigmoid")
    s = _scores(T.as_tensor(q), T.as_tensor(keys))
    alpha = T.sigmoid(T.add(T.mul(s, T.as_tensor(w_scale)), T.as_tensor(b_scale)))
    return _gate_weighted_sum(T.mul(gates, alpha), values)


def generate_tarmac(comm: "TarmacComm", h: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    """Key, value and query for hidden states ``h``."""
    return comm.key(h), comm.value(h), comm.query(h)


class CommNetComm(Module):
    """Linear value messages averaged over the population."""

    def __init__(self, hidden: int, rng: np.random.Generator, n_agents: int) -> None:
        super().__init__()
        self.n_agents = n_agents
        self.msg = Linear(hidden, COMMNET_DIM, rng)
        self.message_dim = COMMNET_DIM
        self.input_dim = COMMNET_DIM

    def generate(self, h: Tensor) -> Tensor:
        return self.msg(h)

    def aggregate(self, h: Tensor, messages: Tensor, gates) -> Tensor:
        return aggregate_commnet(messages, gates, self.n_agents)


class TarmacComm(Module):
    """Key/value messages matched against a locally generated query."""

    def __init__(self, hidden: int, rng: np.random.Generator, sigmoid: bool = False,
                 masked: bool = False) -> None:
        super().__init__()
        self.key = Linear(hidden, TARMAC_KEY_DIM, rng)
        self.value = Linear(hidden, TARMAC_VALUE_DIM, rng)
        self.query = Linear(hidden, TARMAC_KEY_DIM, rng)
        self.sigmoid = sigmoid
        self.masked = masked
        if sigmoid:
            self.w_scale = T.parameter(np.ones(1))
            self.b_scale = T.parameter(np.zeros(1))
        self.message_dim = TARMAC_KEY_DIM + TARMAC_VALUE_DIM
        self.input_dim = TARMAC_VALUE_DIM

    def generate(self, h: Tensor) -> Tensor:
        """Packed message ``k ⊕ v``."""
        return T.concat([self.key(h), self.value(h)], axis=-1)

    def query_from(self, h: Tensor) -> Tensor:
        return self.query(h)

    def aggregate(self, h: Tensor, messages: Tensor, gates) -> Tensor:
        """``h`` is the recipient's previous hidden state, shaped like ``messages[..., 0, :]``."""
        q = self.query(h)
        keys = messages[..., :TARMAC_KEY_DIM]
        values = messages[..., TARMAC_KEY_DIM:]
        if self.sigmoid:
            return aggregate_tarmac_sigmoid(q, keys, values, gates, self.w_scale, self.b_scale)
        return aggregate_tarmac(q, keys, values, gates, masked=self.masked)


def build_comm(arch: Arch | str, hidden: int, rng: np.random.Generator, n_agents: int,
               masked_softmax: bool = False) -> Module:
    arch = Arch(arch)
    if arch is Arch.COMMNET:
        return CommNetComm(hidden, rng, n_agents)
    return TarmacComm(hidden, rng, sigmoid=arch is Arch.TARMAC_SIGMOID, masked=masked_softmax)
