"""Synchronous advantage actor-critic with Gumbel-Softmax or REINFORCE gate training."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .agent import AgentState, PolicyNet, agent_step, update_inbox
from .envs import Env, comms_count
from .gating import GateMode
from .nn import Adam, GumbelConfig, clip_grad_norm
from .tensor import Tape, Tensor


@dataclass
class TrainConfig:
    penalty: float = 0.0
    gamma: float = 1.0
    lr: float = 1e-3
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    episodes_per_update: int = 16
    workers: int = 4
    total_steps: int = 2_000_000
    multitask: bool = True
    forwarding: bool = True
    baseline: bool = True
    max_grad_norm: float = 0.5
    temperature: float = 1.0
    force_open: bool = False
    gate: GateMode = field(default_factory=GateMode)

    def __post_init__(self):
        if self.penalty < 0:
            raise ValueError(f"penalty must be non-negative, got {self.penalty}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.episodes_per_update < 1 or self.workers < 1:
            raise ValueError("episodes_per_update and workers must be positive")
        if self.episodes_per_update % self.workers:
            raise ValueError("episodes_per_update must be divisible by workers")


class ShardedRNG:
    """Draws each worker's rows (leading axis) from that worker's own stream."""

    def __init__(self, rngs: list[np.random.Generator], sizes: list[int]) -> None:
        self.rngs = rngs
        self.sizes = sizes

    def random(self, shape) -> np.ndarray:
        shape = tuple(shape)
        if len(self.rngs) == 1:
            return self.rngs[0].random(shape)
        return np.concatenate([r.random((s,) + shape[1:]) for r, s in zip(self.rngs, self.sizes)], axis=0)


def multitask_schedule(episode_index, enabled: bool = True):
    """1 = penalised episode, 0 = penalty-free. Even indices are penalty-free."""
    idx = np.asarray(episode_index)
    if not enabled:
        return np.ones_like(idx, dtype=np.int64)
    return (idx % 2).astype(np.int64)


def compute_returns(rewards, gamma: float, alive=None) -> np.ndarray:
    """Discounted returns along axis 0, bootstrapping zero at the end."""
    r = np.asarray(rewards, dtype=np.float64)
    if alive is not None:
        a = np.asarray(alive, dtype=np.float64)
        r = r * a.reshape(a.shape + (1,) * (r.ndim - a.ndim))
    out = np.zeros_like(r)
    acc = np.zeros_like(r[0])
    for t in range(r.shape[0] - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def advantage(returns, values) -> np.ndarray:
    return np.asarray(returns) - np.asarray(values)


@dataclass
class RolloutBatch:
    """Lists hold one differentiable tensor per step; arrays are stacked as (T, E, ...)."""

    obs: np.ndarray
    actions: np.ndarray
    action_logp: np.ndarray
    rewards: np.ndarray
    alive: np.ndarray
    flags: np.ndarray
    masks: np.ndarray
    active: np.ndarray
    lengths: np.ndarray
    logits: list[Tensor]
    values: list[Tensor]
    gate_logits: list[Tensor | None]
    gate_soft: list[Tensor | None]
    gate_logp: np.ndarray | None = None
    success: np.ndarray | None = None
    senders: np.ndarray | None = None
    pairwise: bool = False

    @property
    def n_episodes(self) -> int:
        return self.rewards.shape[1]

    @property
    def n_steps(self) -> int:
        return self.rewards.shape[0]

    @property
    def env_steps(self) -> int:
        return int(self.lengths.sum())

    def comms(self) -> np.ndarray:
        return comms_count(self.masks, self.lengths, pairwise=self.pairwise)


def collect_rollout(net: PolicyNet, envs: list[Env], rngs: list[np.random.Generator], flags,
                    cfg: TrainConfig, deterministic: bool = False) -> RolloutBatch:
    """Run one episode in every environment of every worker, in lockstep.

    Workers' episodes are stacked along the batch axis; each worker's
    environments and random draws come only from its own stream.
    """
    sizes = [e.num_envs for e in envs]
    E = sum(sizes)
    flags = np.asarray(flags, dtype=np.float64).reshape(E)
    rng = ShardedRNG(rngs, sizes)
    obs = np.concatenate([env.reset(r) for env, r in zip(envs, rngs)], axis=0)
    state = AgentState.initial(net, E)
    gumbel = GumbelConfig(cfg.temperature)
    T_max = envs[0].spec.max_steps
    keys = ("obs", "actions", "action_logp", "rewards", "alive", "masks", "active",
            "logits", "values", "gate_logits", "gate_soft", "gate_logp")
    rec = {k: [] for k in keys}
    done = np.zeros(E, dtype=bool)
    info = {}
    splits = np.cumsum(sizes)[:-1]
    for t in range(T_max):
        if done.all():
            break
        peers = None
        if net.pairwise:
            peers = np.concatenate([env.peer_info() for env in envs], axis=0)
        out = agent_step(net, obs, flags, state, cfg.gate, rng, gumbel, deterministic,
                         peer_info=peers, force_open=cfg.force_open)
        alive = ~done
        state = AgentState(out.lstm, update_inbox(state.inbox, out.message, out.recipient_gates, cfg.forwarding))
        steps = [env.step(a) for env, a in zip(envs, np.split(out.action, splits, axis=0))]
        rec["obs"].append(obs)
        obs = np.concatenate([s[0] for s in steps], axis=0)
        rewards = np.concatenate([s[1] for s in steps], axis=0)
        done = np.concatenate([s[2] for s in steps], axis=0)
        info = {k: np.concatenate([s[3][k] for s in steps]) for k in steps[0][3]}
        d = out.decision
        rec["actions"].append(out.action)
        rec["action_logp"].append(out.action_logp)
        rec["rewards"].append(rewards)
        rec["alive"].append(alive)
        rec["masks"].append(d.mask)
        rec["active"].append(np.zeros(d.mask.shape, dtype=bool) if d.active is None else d.active)
        rec["logits"].append(out.logits)
        rec["values"].append(out.value)
        rec["gate_logits"].append(d.logits)
        rec["gate_soft"].append(d.soft)
        rec["gate_logp"].append(d.log_prob)
    senders = [env.sender_mask() for env in envs]
    gate_logp = None
    if rec["gate_logp"] and all(lp is not None for lp in rec["gate_logp"]):
        gate_logp = np.stack(rec["gate_logp"])
    return RolloutBatch(
        obs=np.stack(rec["obs"]), actions=np.stack(rec["actions"]), action_logp=np.stack(rec["action_logp"]),
        rewards=np.stack(rec["rewards"]), alive=np.stack(rec["alive"]), flags=flags,
        masks=np.stack(rec["masks"]), active=np.stack(rec["active"]), lengths=info["length"],
        logits=rec["logits"], values=rec["values"], gate_logits=rec["gate_logits"],
        gate_soft=rec["gate_soft"], gate_logp=gate_logp, success=info.get("success"),
        senders=None if senders[0] is None else np.concatenate(senders, axis=0),
        pairwise=net.pairwise,
    )


def gate_cost(masks: np.ndarray, pairwise: bool) -> np.ndarray:
    """Messages each agent pays for per step: its gate bit, or its open non-self row entries."""
    if pairwise:
        N = masks.shape[-1]
        return (masks * (1.0 - np.eye(N))).sum(axis=-1)
    return masks


def _lift(arr: np.ndarray, shape) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    return np.broadcast_to(arr.reshape(arr.shape + (1,) * (len(shape) - arr.ndim)), shape)


def _one_hot(idx: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(idx.shape + (n,))
    np.put_along_axis(out, idx[..., None].astype(np.int64), 1.0, axis=-1)
    return out


def penalised_rewards(batch: RolloutBatch, cfg: TrainConfig) -> np.ndarray:
    """Environment rewards, minus penalty x messages in REINFORCE mode on penalised episodes."""
    alive = batch.alive.astype(np.float64)[..., None]
    rewards = batch.rewards * alive
    if cfg.gate.kind == "reinforce" and cfg.penalty > 0:
        sampled = batch.active.reshape(batch.masks.shape[:3] + (-1,)).any(axis=-1)
        cost = gate_cost(batch.masks, batch.pairwise) * sampled
        rewards = rewards - cfg.penalty * cost * batch.flags[None, :, None] * alive
    return rewards


def compute_losses(batch: RolloutBatch, cfg: TrainConfig) -> dict[str, Tensor]:
    """All loss terms, summed over steps and agents and averaged over episodes.

    REINFORCE order: penalise rewards, then returns, then shared returns.
    """
    E = batch.n_episodes
    pen = batch.flags
    alive = batch.alive.astype(np.float64)  # (T, E)
    returns = compute_returns(penalised_rewards(batch, cfg), cfg.gamma, batch.alive)
    values = T.reshape(T.stack(batch.values), returns.shape)
    adv = advantage(returns, values.data) if cfg.baseline else returns
    live = _lift(alive, returns.shape)

    logp = T.log_softmax(T.stack(batch.logits), axis=-1)
    n_act = logp.shape[-1]
    chosen = T.sum_(T.mul(logp, Tensor(_one_hot(batch.actions, n_act))), axis=-1)
    policy = T.mul(T.sum_(T.mul(chosen, Tensor(adv * live))), -1.0)
    ent = T.sum_(T.mul(T.mul(T.exp(logp), logp), Tensor(_lift(live, logp.shape))))
    zero = Tensor(0.0)
    value = zero
    if cfg.baseline:
        err = T.sub(values, Tensor(returns))
        value = T.sum_(T.mul(T.mul(err, err), Tensor(0.5 * live)))

    gate = comm = zero
    if cfg.gate.kind == "reinforce" and batch.active.any():
        if any(g is None for g in batch.gate_logits) or batch.gate_logp is None:
            raise ValueError("REINFORCE gate loss needs sampled gate log-probabilities")
        glogp = T.log_softmax(T.stack(batch.gate_logits), axis=-1)
        lp = T.sum_(T.mul(glogp, Tensor(_one_hot(batch.masks, 2))), axis=-1)
        shared = returns.mean(axis=-1)  # SR^t, (T, E)
        if cfg.baseline:
            shared = shared - values.data.mean(axis=-1)
        w = _lift(shared * alive, lp.shape) * batch.active
        gate = T.mul(T.sum_(T.mul(lp, Tensor(w))), -1.0)
    if cfg.gate.kind == "gs" and cfg.penalty > 0 and batch.gate_soft[0] is not None:
        soft_on = T.stack(batch.gate_soft)[..., 1]
        w = _lift(pen[None, :] * alive, soft_on.shape) * batch.active
        if batch.pairwise:
            w = w * (1.0 - np.eye(soft_on.shape[-1]))
        assert not w[:, pen == 0].any(), "communication penalty leaked into a penalty-free episode"
        comm = T.sum_(T.mul(soft_on, Tensor(w)))

    scale = 1.0 / E
    losses = {
        "policy": T.mul(policy, scale),
        "value": T.mul(value, cfg.value_coef * scale),
        "entropy": T.mul(ent, cfg.entropy_coef * scale),
        "gate": T.mul(gate, scale),
        "comm": T.mul(comm, cfg.penalty * scale),
    }
    total = zero
    for v in losses.values():
        total = T.add(total, v)
    losses["total"] = total
    return losses


def compute_gradients(net: PolicyNet, envs, rngs, flags, cfg: TrainConfig):
    """Roll out, build the loss, back-propagate. Returns (batch, losses, grads by name)."""
    net.zero_grad()
    with Tape():
        batch = collect_rollout(net, envs, rngs, flags, cfg)
        losses = compute_losses(batch, cfg)
        T.backward(losses["total"])
    grads = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
             for name, p in net.named_parameters()}
    return batch, losses, grads


class NonFiniteLoss(FloatingPointError):
    pass


class Trainer:
    """Owns the shared network, optimiser, per-worker environments and streams."""

    def __init__(self, net: PolicyNet, make_env, cfg: TrainConfig, seed: int) -> None:
        self.net = net
        self.cfg = cfg
        per = cfg.episodes_per_update // cfg.workers
        self.envs = [make_env(per) for _ in range(cfg.workers)]
        self.rngs = [np.random.default_rng(seed + w) for w in range(cfg.workers)]
        self.opt = Adam(net.parameters(), lr=cfg.lr)
        self.episodes = 0
        self.env_steps = 0
        self.updates = 0

    def next_flags(self) -> np.ndarray:
        n = self.cfg.episodes_per_update
        idx = np.arange(self.episodes, self.episodes + n)
        return multitask_schedule(idx, self.cfg.multitask)

    def update(self) -> dict[str, float]:
        flags = self.next_flags()
        batch, losses, _ = compute_gradients(self.net, self.envs, self.rngs, flags, self.cfg)
        total = losses["total"].item()
        if not math.isfinite(total):
            raise NonFiniteLoss(f"non-finite loss at update {self.updates}: {total}")
        gnorm = clip_grad_norm(self.opt.params, self.cfg.max_grad_norm)
        self.opt.step()
        self.opt.zero_grad()
        self.episodes += batch.n_episodes
        self.env_steps += batch.env_steps
        self.updates += 1
        stats = {k: v.item() for k, v in losses.items()}
        stats["grad_norm"] = gnorm
        stats["train_return"] = float(batch.rewards.sum(axis=0).mean())
        return stats


def gs_update(trainer: Trainer) -> dict[str, float]:
    if trainer.cfg.gate.kind != "gs":
        raise ValueError("gs_update needs gates in Gumbel-Softmax mode")
    return trainer.update()


def reinforce_update(trainer: Trainer) -> dict[str, float]:
    if trainer.cfg.gate.kind != "reinforce":
        raise ValueError("reinforce_update needs gates in REINFORCE mode")
    return trainer.update()
