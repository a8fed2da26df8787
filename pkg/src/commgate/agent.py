"""Per-agent policy: aggregate inbox, encode, gate, generate message, act.

All agents share one :class:`PolicyNet`. A step processes every agent of
every episode at once; tensors are laid out ``(E, N, ...)`` and inbox
tensors ``(E, recipient, sender, ...)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .comm import Arch, build_comm
from .gating import GateDecision, GateMode, GlobalGate, PairwiseGate, force_open_override
from .nn import GumbelConfig, Linear, LSTMCell, LstmState, Module, log_softmax_np, sample_index
from .tensor import Tensor

HIDDEN = 64


class PolicyNet(Module):
    def __init__(self, obs_dim: int, n_agents: int, n_actions: int, rng: np.random.Generator,
                 arch: Arch | str = Arch.COMMNET, pairwise: bool = False, peer_dim: int = 0,
                 hidden: int = HIDDEN, masked_softmax: bool = False) -> None:
        super().__init__()
        self.obs_dim = obs_dim
        self.n_agents = n_agents
        self.n_actions = n_actions
        self.arch = Arch(arch)
        self.pairwise = pairwise
        self.hidden = hidden
        self.comm = build_comm(self.arch, hidden, rng, n_agents, masked_softmax=masked_softmax)
        # +1 for the penalty flag appended to every observation
        self.encoder = LSTMCell(obs_dim + 1 + self.comm.input_dim, hidden, rng)
        if pairwise:
            self.gate = PairwiseGate(obs_dim + 1 + n_agents * peer_dim, n_agents, rng)
        else:
            self.gate = GlobalGate(hidden, rng)
        self.action = Linear(hidden, n_actions, rng)
        self.value = Linear(hidden, 1, rng)

    @property
    def message_dim(self) -> int:
        return self.comm.message_dim


def shared_parameters(net: PolicyNet) -> dict[str, Tensor]:
    """The single parameter set every agent evaluates."""
    return net.state_dict()


@dataclass
class Inbox:
    """Per (recipient, sender) slot: last usable message, its gate, and its age.

    ``gates`` is what aggregation multiplies by; with forwarding a slot stays
    open once anything has been delivered on it.
    """

    messages: Tensor
    gates: Tensor
    age: np.ndarray

    @classmethod
    def empty(cls, E: int, N: int, dim: int) -> "Inbox":
        return cls(Tensor(np.zeros((E, N, N, dim))), Tensor(np.zeros((E, N, N))),
                   np.zeros((E, N, N), dtype=np.int64))

    @property
    def present(self) -> np.ndarray:
        return self.gates.data > 0


@dataclass
class AgentState:
    lstm: LstmState
    inbox: Inbox

    @classmethod
    def initial(cls, net: PolicyNet, E: int) -> "AgentState":
        N = net.n_agents
        zeros = Tensor(np.zeros((E, N, net.hidden)))
        return cls(LstmState(zeros, Tensor(np.zeros((E, N, net.hidden)))),
                   Inbox.empty(E, N, net.message_dim))


@dataclass
class AgentStepOutput:
    action: np.ndarray          # (E, N)
    action_logp: np.ndarray     # (E, N), value of log pi(action)
    logits: Tensor              # (E, N, |A|)
    value: Tensor               # (E, N, 1)
    message: Tensor             # (E, N, message_dim)
    decision: GateDecision      # mask (E, N) global or (E, N, N) rows [sender, recipient]
    recipient_gates: Tensor     # (E, recipient, sender)
    lstm: LstmState


def with_flag(obs: np.ndarray, penalty_flag) -> np.ndarray:
    E, N, _ = obs.shape
    flag = np.broadcast_to(np.asarray(penalty_flag, dtype=np.float64).reshape(-1, 1, 1), (E, N, 1))
    return np.concatenate([obs, flag], axis=-1)


def aggregate_inbox(net: PolicyNet, h_prev: Tensor, inbox: Inbox) -> Tensor:
    return net.comm.aggregate(h_prev, inbox.messages, inbox.gates)


def agent_step(net: PolicyNet, obs: np.ndarray, penalty_flag, state: AgentState, mode: GateMode,
               rng, gumbel: GumbelConfig = GumbelConfig(), deterministic: bool = False,
               peer_info: np.ndarray | None = None, force_open: bool = False) -> AgentStepOutput:
    """One synchronous step for all agents.

    ``penalty_flag`` is 1 on penalised episodes, 0 otherwise, shaped (E,).
    The inbox must hold the messages generated on the previous step.
    """
    E, N = obs.shape[:2]
    o = with_flag(obs, penalty_flag)
    x = aggregate_inbox(net, state.lstm.h, state.inbox)
    lstm = net.encoder(T.concat([Tensor(o), x], axis=-1), state.lstm)
    h = lstm.h

    if net.pairwise:
        if peer_info is None:
            raise ValueError("pairwise gating needs peer_info from the environment")
        if peer_info.shape[-2] != N:
            raise ValueError(f"peer_info must describe {N} agents, got {peer_info.shape[-2]}")
        feats = np.concatenate([o, np.broadcast_to(peer_info.reshape(E, 1, -1), (E, N, peer_info[0].size))], axis=-1)
        decision = net.gate(Tensor(feats), mode, rng, gumbel, deterministic)
    else:
        decision = net.gate(h, mode, rng, gumbel, deterministic)
    free = np.asarray(penalty_flag).reshape(-1) == 0
    decision = force_open_override(decision, np.broadcast_to(free[:, None], (E, N)), force_open)

    if net.pairwise:
        recipient_gates = T.transpose(decision.gate)
    else:
        recipient_gates = T.expand(decision.gate, 1, N)

    message = net.comm.generate(h)
    logits = net.action(h)
    if np.isnan(logits.data).any():
        raise ValueError("action logits contain NaN")
    logp_all = log_softmax_np(logits.data)
    if deterministic:
        action = logits.data.argmax(axis=-1)
    else:
        action = sample_index(np.exp(logp_all), rng)
    logp = np.take_along_axis(logp_all, action[..., None], axis=-1)[..., 0]
    value = net.value(h)
    return AgentStepOutput(action, logp, logits, value, message, decision, recipient_gates, lstm)


def update_inbox(inbox: Inbox, messages: Tensor, gates, forwarding: bool) -> Inbox:
    """Deliver this step's messages for reading on the next step.

    ``messages`` is (E, S, d); ``gates`` is (E, R, S). Without forwarding a
    closed slot reads as absent. With forwarding it keeps the last message it
    received, and a slot that never received anything stays absent.
    """
    gates = T.as_tensor(gates)
    E, S, d = messages.shape
    R = gates.shape[1]
    fresh = T.expand(messages, 1, R)
    fresh_mask = gates.data > 0
    if not forwarding:
        return Inbox(fresh, gates, np.zeros(gates.shape, dtype=np.int64))
    g4 = T.expand(gates, -1, d)
    keep4 = T.sub(1.0, g4)
    msgs = T.add(T.mul(g4, fresh), T.mul(keep4, inbox.messages))
    new_gates = T.add(gates, T.mul(T.sub(1.0, gates), inbox.gates))
    age = np.where(fresh_mask, 0, np.where(inbox.present, inbox.age + 1, 0))
    return Inbox(msgs, new_gates, age)
