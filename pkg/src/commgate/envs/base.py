"""Shared episodic interface for the batched cooperative tasks."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EnvSpec:
    name: str
    n_agents: int
    max_steps: int
    n_actions: int
    obs_dim: int
    peer_dim: int = 0
    roles: tuple[str, ...] = ()
    layout: dict = field(default_factory=dict)


def one_hot(idx, n: int) -> np.ndarray:
    idx = np.asarray(idx)
    out = np.zeros(idx.shape + (n,))
    np.put_along_axis(out, idx[..., None].astype(np.int64), 1.0, axis=-1)
    return out


class Env:
    """Runs ``num_envs`` independent episodes in lockstep.

    ``reset(rng)`` returns observations shaped (E, N, obs_dim); ``step`` takes
    integer actions shaped (E, N) and returns ``(obs, rewards, done, info)``.
    Finished episodes ignore further actions and yield zero reward.
    """

    spec: EnvSpec

    def __init__(self, num_envs: int = 1) -> None:
        self.num_envs = num_envs
        self.t = 0
        self.done = np.zeros(num_envs, dtype=bool)
        self.length = np.zeros(num_envs, dtype=np.int64)
        self.rng: np.random.Generator | None = None

    @property
    def n_agents(self) -> int:
        return self.spec.n_agents

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        self.rng = rng
        self.t = 0
        self.done = np.zeros(self.num_envs, dtype=bool)
        self.length = np.zeros(self.num_envs, dtype=np.int64)
        self._reset()
        return self._observe()

    def step(self, actions) -> tuple[np.ndarray, np.ndarray, np.ndarray, dict]:
        actions = np.asarray(actions, dtype=np.int64)
        E, N = self.num_envs, self.spec.n_agents
        if actions.shape != (E, N):
            raise ValueError(f"{self.spec.name}: actions must have shape {(E, N)}, got {actions.shape}")
        if ((actions < 0) | (actions >= self.spec.n_actions)).any():
            raise ValueError(f"{self.spec.name}: actions must lie in [0, {self.spec.n_actions})")
        alive = ~self.done
        rewards = self._step(actions, alive) * alive[:, None]
        self.length += alive
        self.t += 1
        finished = self._finished(alive) | (self.t >= self.spec.max_steps)
        self.done = self.done | finished
        self._after_step(alive & ~self.done)
        return self._observe(), rewards, self.done.copy(), self._info()

    def sender_mask(self) -> np.ndarray | None:
        """Boolean (E, N) marking the information holders, or None without roles."""
        return None

    def peer_info(self) -> np.ndarray | None:
        return None

    # hooks
    def _reset(self) -> None:
        raise NotImplementedError

    def _observe(self) -> np.ndarray:
        raise NotImplementedError

    def _step(self, actions: np.ndarray, alive: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _finished(self, alive: np.ndarray) -> np.ndarray:
        return np.zeros(self.num_envs, dtype=bool)

    def _after_step(self, continuing: np.ndarray) -> None:
        pass

    def _info(self) -> dict:
        return {"length": self.length.copy()}


def comms_count(masks: np.ndarray, lengths, pairwise: bool | None = None) -> np.ndarray:
    """Per-agent delivered message counts per episode.

    ``masks`` is (T, E, N) for global gates or (T, E, N, N) for pairwise rows
    ``[sender, recipient]``. A gate opened on an episode's last step delivers
    nothing, so only steps ``t < length - 1`` count. Self-messages never count.
    """
    masks = np.asarray(masks, dtype=np.float64)
    if pairwise is None:
        pairwise = masks.ndim == 4
    T_, E = masks.shape[:2]
    N = masks.shape[2]
    lengths = np.broadcast_to(np.asarray(lengths), (E,))
    window = (np.arange(T_)[:, None] < (lengths[None, :] - 1)).astype(np.float64)
    if pairwise:
        off_diag = 1.0 - np.eye(N)
        per_step = (masks * off_diag).sum(axis=-1)
    else:
        per_step = masks * (N - 1)
    return (per_step * window[:, :, None]).sum(axis=0)


def obs_hash(obs: np.ndarray) -> str:
    return hashlib.sha1(np.ascontiguousarray(obs, dtype=np.float64).tobytes()).hexdigest()[:16]


class TraceWriter:
    """Line-delimited JSON trace of one episode batch, for replay comparisons."""

    def __init__(self, path) -> None:
        self.fh = open(path, "w")

    def write(self, step: int, obs: np.ndarray, actions, gates, rewards) -> None:
        for e in range(obs.shape[0]):
            rec = {
                "episode": e,
                "step": step,
                "obs": [obs_hash(obs[e, i]) for i in range(obs.shape[1])],
                "actions": np.asarray(actions)[e].tolist(),
                "gates": np.asarray(gates)[e].tolist(),
                "rewards": np.asarray(rewards)[e].tolist(),
            }
            self.fh.write(json.dumps(rec) + "\n")

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
