"""Greedy evaluation episodes and role-split aggregates."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .agent import PolicyNet
from .envs import Env
from .trainer import RolloutBatch, TrainConfig, collect_rollout

EVAL_EPISODES = 100


@dataclass
class EpisodeRecord:
    """Raw per-episode numbers; every summary statistic is derived from these."""

    returns: list[float]
    comms: list[float]
    senders: list[bool] | None
    length: int
    success: bool | None
    msg_prob: float
    sent: list[list[float]] | None = None
    partner_sent: float | None = None

    def to_json(self) -> str:
        return json.dumps(self.__dict__)

    @classmethod
    def from_json(cls, line: str) -> "EpisodeRecord":
        return cls(**json.loads(line))


def message_probability(masks: np.ndarray, lengths: np.ndarray, pairwise: bool) -> np.ndarray:
    """Fraction of gate decisions that were open over each episode's live steps, (E,)."""
    T_ = masks.shape[0]
    live = (np.arange(T_)[:, None] < lengths[None, :]).astype(np.float64)
    if pairwise:
        N = masks.shape[-1]
        opened = (masks * (1.0 - np.eye(N))).sum(axis=(-1, -2)) / (N * (N - 1))
    else:
        opened = masks.mean(axis=-1)
    return (opened * live).sum(axis=0) / np.maximum(lengths, 1)


def sent_matrix(masks: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Delivered non-self messages per (sender, recipient), (E, N, N), pairwise gates only."""
    T_ = masks.shape[0]
    N = masks.shape[-1]
    window = (np.arange(T_)[:, None] < (lengths[None, :] - 1)).astype(np.float64)
    return (masks * (1.0 - np.eye(N)) * window[:, :, None, None]).sum(axis=0)


def episode_records(batch: RolloutBatch, partner: np.ndarray | None = None) -> list[EpisodeRecord]:
    """``partner`` is an optional (N, N) 0/1 matrix marking the intended sender-recipient links."""
    returns = batch.rewards.sum(axis=0)
    comms = batch.comms()
    lengths = batch.lengths
    probs = message_probability(batch.masks, lengths, batch.pairwise)
    sent = sent_matrix(batch.masks, lengths) if batch.pairwise else None
    out = []
    for e in range(batch.n_episodes):
        rec = EpisodeRecord(
            returns=returns[e].tolist(),
            comms=comms[e].tolist(),
            senders=None if batch.senders is None else batch.senders[e].tolist(),
            length=int(lengths[e]),
            success=None if batch.success is None else bool(batch.success[e]),
            msg_prob=float(probs[e]),
        )
        if sent is not None:
            rec.sent = sent[e].tolist()
            if partner is not None:
                rec.partner_sent = float((sent[e] * partner).sum())
        out.append(rec)
    return out


def _stat(values) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "std": float(v.std())}


def summarize(records: list[EpisodeRecord]) -> dict[str, dict[str, float]]:
    """Mean and standard deviation over episodes of every reported metric.

    Sender and receiver values are per-agent averages within each episode,
    so the two role groups partition the agents exactly.
    """
    if not records:
        raise ValueError("summarize: no episodes")
    out: dict[str, dict[str, float]] = {}
    ret = np.array([r.returns for r in records])
    com = np.array([r.comms for r in records])
    out["return"] = _stat(ret.mean(axis=1))
    out["comms"] = _stat(com.mean(axis=1))
    out["length"] = _stat([r.length for r in records])
    out["msg_prob"] = _stat([r.msg_prob for r in records])
    if records[0].senders is not None:
        snd = np.array([r.senders for r in records], dtype=bool)
        if snd.any(axis=1).all() and (~snd).any(axis=1).all():
            def role(x, m):
                return (x * m).sum(axis=1) / m.sum(axis=1)
            out["sender_return"] = _stat(role(ret, snd))
            out["receiver_return"] = _stat(role(ret, ~snd))
            out["sender_comms"] = _stat(role(com, snd))
            out["receiver_comms"] = _stat(role(com, ~snd))
    if records[0].success is not None:
        out["success"] = _stat([float(r.success) for r in records])
    if records[0].partner_sent is not None:
        total = sum(float(np.sum(r.sent)) for r in records)
        partner = sum(r.partner_sent for r in records)
        out["partner_fraction"] = {"mean": partner / total if total > 0 else 0.0, "std": 0.0}
        out["messages_sent"] = _stat([float(np.sum(r.sent)) for r in records])
    return out


@dataclass
class EvalResult:
    records: list[EpisodeRecord]
    summary: dict = field(default_factory=dict)


def evaluate(net: PolicyNet, env: Env, cfg: TrainConfig, seed: int, penalty_flag: int = 1,
             deterministic: bool = True) -> EvalResult:
    """Run ``env.num_envs`` evaluation episodes at once without recording gradients.

    Learned gates and actions are taken greedily; fixed and random gates keep
    their own rule.
    """
    rng = np.random.default_rng(seed)
    flags = np.full(env.num_envs, penalty_flag)
    with T.no_grad():
        batch = collect_rollout(net, [env], [rng], flags, cfg, deterministic=deterministic)
    partner = None
    if hasattr(env, "partner_mask"):
        partner = env.partner_mask()
    records = episode_records(batch, partner)
    return EvalResult(records, summarize(records))
