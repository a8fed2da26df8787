"""Secret Pairs: three pairs, one holder each, secret re-drawn every few steps."""
from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec, one_hot


class SecretPairs(Env):
    """Agent k (k < P) holds pair k's secret; agent P + k is its partner.

    Observation: secret one-hot (holders only), null bit, pair id one-hot,
    holder bit, own id one-hot. Peer info for the pairwise gate is each
    agent's pair id one-hot plus holder bit.
    """

    def __init__(self, num_envs: int = 1, n_pairs: int = 3, max_steps: int = 20, n_actions: int = 5,
                 phase: int = 5) -> None:
        super().__init__(num_envs)
        N = 2 * n_pairs
        self.n_pairs = n_pairs
        self.phase = phase
        self.spec = EnvSpec(
            "secret_pairs", N, max_steps, n_actions,
            obs_dim=n_actions + 1 + n_pairs + 1 + N,
            peer_dim=n_pairs + 1,
            roles=("sender",) * n_pairs + ("receiver",) * n_pairs,
            layout={"secret": n_actions, "null": 1, "pair": n_pairs, "holder": 1, "id": N},
        )
        self.pair_id = np.concatenate([np.arange(n_pairs), np.arange(n_pairs)])
        self.holder = np.arange(N) < n_pairs
        self.secrets = np.zeros((num_envs, n_pairs), dtype=np.int64)

    def partner(self, agent: int) -> int:
        return (agent + self.n_pairs) % (2 * self.n_pairs)

    def _draw(self) -> None:
        self.secrets = self.rng.integers(0, self.spec.n_actions, size=(self.num_envs, self.n_pairs))

    def _reset(self) -> None:
        self._draw()

    def _observe(self) -> np.ndarray:
        E, N, A, P = self.num_envs, self.spec.n_agents, self.spec.n_actions, self.n_pairs
        obs = np.zeros((E, N, self.spec.obs_dim))
        obs[:, :P, :A] = one_hot(self.secrets, A)
        obs[:, P:, A] = 1.0
        obs[:, :, A + 1: A + 1 + P] = one_hot(self.pair_id, P)
        obs[:, :, A + 1 + P] = self.holder
        obs[:, :, A + 2 + P:] = np.eye(N)
        return obs

    def current_targets(self) -> np.ndarray:
        return self.secrets[:, self.pair_id]

    def _step(self, actions, alive):
        return (actions == self.current_targets()).astype(np.float64)

    def _after_step(self, continuing):
        if self.t % self.phase == 0:
            fresh = self.rng.integers(0, self.spec.n_actions, size=(self.num_envs, self.n_pairs))
            self.secrets = np.where(continuing[:, None], fresh, self.secrets)

    def sender_mask(self) -> np.ndarray:
        return np.broadcast_to(self.holder, (self.num_envs, self.spec.n_agents)).copy()

    def peer_info(self) -> np.ndarray:
        rows = np.concatenate([one_hot(self.pair_id, self.n_pairs), self.holder[:, None].astype(float)], axis=-1)
        return np.broadcast_to(rows, (self.num_envs,) + rows.shape).copy()

    def partner_mask(self) -> np.ndarray:
        """(N, N) boolean: True at [holder k, partner of k]."""
        N = self.spec.n_agents
        m = np.zeros((N, N), dtype=bool)
        for k in range(self.n_pairs):
            m[k, self.partner(k)] = True
        return m
