"""Binary communication gates: global (one bit per sender) or pairwise (one per recipient).

Logit index 0 means "stay silent", index 1 means "send".
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import tensor as T
from .nn import MLP, GumbelConfig, Linear, Module, gumbel_softmax_st, log_softmax_np, sample_index
from .tensor import Tensor

GATE_KINDS = ("gs", "reinforce", "always_on", "always_off", "random")
LEARNED = ("gs", "reinforce")


@dataclass(frozen=True)
class GateMode:
    kind: str = "always_on"
    p: float = 0.5

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate mode {self.kind!r}; expected one of {GATE_KINDS}")
        if self.kind == "random" and not 0.0 <= self.p <= 1.0:
            raise ValueError(f"random gate probability must lie in [0, 1], got {self.p}")

    @property
    def learned(self) -> bool:
        return self.kind in LEARNED

    @classmethod
    def parse(cls, text: str) -> "GateMode":
        """Accepts ``gs``, ``reinforce``, ``always_on``, ``random:0.3`` and the like."""
        if text.startswith("random"):
            _, _, p = text.partition(":")
            return cls("random", float(p) if p else 0.5)
        return cls(text)

    def __str__(self) -> str:
        return f"random:{self.p:g}" if self.kind == "random" else self.kind


@dataclass
class GateDecision:
    """One batch of gate decisions.

    ``mask`` is the binary decision; ``gate`` is what aggregation multiplies by
    (a straight-through sample in GS mode, otherwise a constant). REINFORCE
    decisions carry ``log_prob`` (values of log softmax(logits) at the sampled
    bit; the trainer rebuilds the differentiable version from ``logits``), GS
    decisions carry the relaxed sample ``soft``. ``active`` marks decisions
    that were actually sampled rather than fixed or overridden.
    """

    mask: np.ndarray
    gate: Tensor
    log_prob: np.ndarray | None = None
    soft: Tensor | None = None
    logits: Tensor | None = None
    active: np.ndarray | None = None

    @property
    def soft_on(self) -> Tensor | None:
        """Differentiable probability-like weight of the "send" coordinate."""
        return None if self.soft is None else self.soft[..., 1]


def _decide(logits: Tensor, mode: GateMode, rng, cfg: GumbelConfig, deterministic: bool) -> GateDecision:
    shape = logits.shape[:-1]
    if mode.kind == "always_on":
        mask = np.ones(shape)
        return GateDecision(mask, Tensor(mask), active=np.zeros(shape, dtype=bool))
    if mode.kind == "always_off":
        mask = np.zeros(shape)
        return GateDecision(mask, Tensor(mask), active=np.zeros(shape, dtype=bool))
    if mode.kind == "random":
        mask = (rng.random(shape) < mode.p).astype(np.float64)
        return GateDecision(mask, Tensor(mask), active=np.zeros(shape, dtype=bool))
    if np.isnan(logits.data).any():
        raise ValueError("gate logits contain NaN")
    active = np.ones(shape, dtype=bool)
    if deterministic:
        mask = logits.data.argmax(axis=-1).astype(np.float64)
        return GateDecision(mask, Tensor(mask), logits=logits, active=active)
    if mode.kind == "reinforce":
        logp = log_softmax_np(logits.data)
        idx = sample_index(np.exp(logp), rng)
        mask = idx.astype(np.float64)
        lp = np.take_along_axis(logp, idx[..., None], axis=-1)[..., 0]
        return GateDecision(mask, Tensor(mask), log_prob=lp, logits=logits, active=active)
    if mode.kind == "gs":
        hard, soft = gumbel_softmax_st(logits, cfg, rng)
        return GateDecision(hard.data[..., 1].copy(), hard[..., 1], soft=soft,
                            logits=logits, active=active)
    raise ValueError(f"unknown gate mode {mode.kind!r}")


class GlobalGate(Module):
    """Linear head on the hidden state; one broadcast bit per agent."""

    def __init__(self, hidden: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.head = Linear(hidden, 2, rng)

    def __call__(self, h: Tensor, mode: GateMode, rng=None, cfg: GumbelConfig = GumbelConfig(),
                 deterministic: bool = False) -> GateDecision:
        logits = self.head(h) if mode.learned else Tensor(np.zeros(h.shape[:-1] + (2,)))
        return _decide(logits, mode, rng, cfg, deterministic)


def global_gate(gate: GlobalGate, h: Tensor, o=None, mode: GateMode = GateMode(), rng=None,
                cfg: GumbelConfig = GumbelConfig(), deterministic: bool = False) -> GateDecision:
    """Functional form; the observation is accepted but the global gate reads only ``h``."""
    return gate(h, mode, rng, cfg, deterministic)


class PairwiseGate(Module):
    """Two-layer MLP over (observation, peer info) giving one decision per recipient."""

    def __init__(self, in_features: int, n_agents: int, rng: np.random.Generator, hidden: int = 64) -> None:
        super().__init__()
        self.n_agents = n_agents
        self.in_features = in_features
        self.mlp = MLP(in_features, hidden, 2 * n_agents, rng)

    def __call__(self, features: Tensor, mode: GateMode, rng=None, cfg: GumbelConfig = GumbelConfig(),
                 deterministic: bool = False) -> GateDecision:
        lead = features.shape[:-1]
        if mode.learned:
            logits = T.reshape(self.mlp(features), lead + (self.n_agents, 2))
        else:
            logits = Tensor(np.zeros(lead + (self.n_agents, 2)))
        return _decide(logits, mode, rng, cfg, deterministic)


def pairwise_gate(gate: PairwiseGate, o: np.ndarray, peer_info: np.ndarray, mode: GateMode, rng=None,
                  cfg: GumbelConfig = GumbelConfig(), deterministic: bool = False) -> GateDecision:
    """``peer_info`` is (..., N, peer_dim): one feature row per potential recipient."""
    peer_info = np.asarray(peer_info, dtype=np.float64)
    if peer_info.shape[-2] != gate.n_agents:
        raise ValueError(f"pairwise_gate: expected peer info for {gate.n_agents} agents, got {peer_info.shape[-2]}")
    feats = np.concatenate([np.asarray(o, dtype=np.float64),
                            peer_info.reshape(peer_info.shape[:-2] + (-1,))], axis=-1)
    return gate(Tensor(feats), mode, rng, cfg, deterministic)


def force_open_override(decision: GateDecision, penalty_free, enabled: bool) -> GateDecision:
    """Open every gate on penalty-free rows; those rows drop out of gate training.

    ``penalty_free`` is a bool array over the leading axes of ``decision.mask``
    (it is broadcast across recipients for pairwise decisions).
    """
    if not enabled:
        return decision
    free = np.asarray(penalty_free, dtype=bool)
    free = free.reshape(free.shape + (1,) * (decision.mask.ndim - free.ndim))
    free = np.broadcast_to(free, decision.mask.shape)
    if not free.any():
        return decision
    keep = (~free).astype(np.float64)
    mask = np.where(free, 1.0, decision.mask)
    gate = T.add(T.mul(decision.gate, Tensor(keep)), Tensor(1.0 - keep))
    gate.data = mask.copy()
    active = None if decision.active is None else decision.active & ~free
    return replace(decision, mask=mask, gate=gate, active=active)
