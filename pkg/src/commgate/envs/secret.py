"""Secret: agent 0 sees a secret action; everyone is paid for playing it."""
from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec, one_hot


class Secret(Env):
    """Observation: secret one-hot (zeros for receivers), null-token bit, own id one-hot."""

    def __init__(self, num_envs: int = 1, n_agents: int = 5, max_steps: int = 20, n_actions: int = 20) -> None:
        super().__init__(num_envs)
        self.spec = EnvSpec(
            "secret", n_agents, max_steps, n_actions,
            obs_dim=n_actions + 1 + n_agents,
            roles=("sender",) + ("receiver",) * (n_agents - 1),
            layout={"secret": n_actions, "null": 1, "id": n_agents},
        )
        self.secret = np.zeros(num_envs, dtype=np.int64)

    def _reset(self) -> None:
        self.secret = self.rng.integers(0, self.spec.n_actions, size=self.num_envs)

    def _observe(self) -> np.ndarray:
        E, N, A = self.num_envs, self.spec.n_agents, self.spec.n_actions
        obs = np.zeros((E, N, self.spec.obs_dim))
        obs[:, 0, :A] = one_hot(self.secret, A)
        obs[:, 1:, A] = 1.0
        obs[:, :, A + 1:] = np.eye(N)
        return obs

    def _step(self, actions, alive):
        return (actions == self.secret[:, None]).astype(np.float64)

    def sender_mask(self) -> np.ndarray:
        m = np.zeros((self.num_envs, self.spec.n_agents), dtype=bool)
        m[:, 0] = True
        return m


def secret_step(secret: int, actions) -> np.ndarray:
    """Reward vector for one step of a single Secret episode."""
    return (np.asarray(actions) == secret).astype(np.float64)
