"""Predator-Prey: agents search a grid for a stationary prey they can only see up close."""
from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec, one_hot

# up, down, left, right, stay as (dx, dy)
MOVES = np.array([[0, -1], [0, 1], [-1, 0], [1, 0], [0, 0]], dtype=np.int64)
WINDOW = MOVES[[4, 0, 1, 2, 3]]  # own cell first, then the four neighbours


class PredatorPrey(Env):
    """Observation per agent: prey flag and other-agent flag for own cell and
    the four neighbours, one-hot x and y coordinates, own id one-hot."""

    def __init__(self, num_envs: int = 1, n_agents: int = 10, grid: int = 20, max_steps: int = 80) -> None:
        super().__init__(num_envs)
        self.grid = grid
        self.spec = EnvSpec(
            "predprey", n_agents, max_steps, n_actions=5,
            obs_dim=10 + 2 * grid + n_agents,
            layout={"prey": 5, "agents": 5, "x": grid, "y": grid, "id": n_agents},
        )
        self.pos = np.zeros((num_envs, n_agents, 2), dtype=np.int64)
        self.prey = np.zeros((num_envs, 2), dtype=np.int64)
        self.success = np.zeros(num_envs, dtype=bool)

    def _reset(self) -> None:
        G, E, N = self.grid, self.num_envs, self.spec.n_agents
        self.prey = self.rng.integers(0, G, size=(E, 2))
        self.pos = self.rng.integers(0, G, size=(E, N, 2))
        self.success = np.zeros(E, dtype=bool)

    def on_prey(self) -> np.ndarray:
        return (self.pos == self.prey[:, None, :]).all(axis=-1)

    def _observe(self) -> np.ndarray:
        E, N, G = self.num_envs, self.spec.n_agents, self.grid
        cells = self.pos[:, :, None, :] + WINDOW[None, None]  # (E, N, 5, 2)
        prey_flag = (cells == self.prey[:, None, None, :]).all(axis=-1)
        # other-agent occupancy: compare every window cell with every other agent
        same = (cells[:, :, :, None, :] == self.pos[:, None, None, :, :]).all(axis=-1)  # (E, N, 5, N)
        same &= ~np.eye(N, dtype=bool)[None, :, None, :]
        occupied = same.any(axis=-1)
        obs = np.concatenate([
            prey_flag.astype(float), occupied.astype(float),
            one_hot(self.pos[..., 0], G), one_hot(self.pos[..., 1], G),
            np.broadcast_to(np.eye(N), (E, N, N)),
        ], axis=-1)
        return obs

    def _step(self, actions, alive):
        moved = np.clip(self.pos + MOVES[actions], 0, self.grid - 1)
        self.pos = np.where(alive[:, None, None], moved, self.pos)
        on = self.on_prey()
        self.success |= on.all(axis=-1) & alive
        return on.astype(np.float64)

    def _info(self) -> dict:
        return {"length": self.length.copy(), "success": self.success.copy()}
