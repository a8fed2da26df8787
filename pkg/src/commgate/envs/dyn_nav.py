"""Dynamic cooperative navigation: each agent's destination is shown only to its teammate."""
from __future__ import annotations

import numpy as np

from .base import Env, EnvSpec, one_hot
from .predprey import MOVES


class DynamicNav(Env):
    """Two agents on a square grid; destinations jump to a fresh uniform cell
    with probability ``p_move`` per step.

    With ``latch`` (the default) an agent that steps onto its destination has
    arrived: it stays there, its destination stops moving and it stops paying
    ``step_cost``. The episode ends once both have arrived. With
    ``latch=False`` both agents must stand on their destinations at the same
    time, and both pay ``step_cost`` every step until then.

    ``shaping`` adds ``shaping * (d_before - d_after)`` per agent, with d the
    Manhattan distance to its current destination. Being potential based, it
    leaves the best policy unchanged.

    Observation: own x/y one-hot, teammate's destination x/y one-hot, own id.
    """

    def __init__(self, num_envs: int = 1, grid: int = 10, max_steps: int = 50, p_move: float = 0.05,
                 step_cost: float = 0.1, latch: bool = True, shaping: float = 0.1) -> None:
        super().__init__(num_envs)
        self.shaping = float(shaping)
        self.latch = bool(latch)
        self.grid = grid
        self.p_move = p_move
        self.step_cost = step_cost
        self.spec = EnvSpec(
            "dyn_nav", 2, max_steps, n_actions=5,
            obs_dim=4 * grid + 2,
            layout={"x": grid, "y": grid, "dest_x": grid, "dest_y": grid, "id": 2},
        )
        self.pos = np.zeros((num_envs, 2, 2), dtype=np.int64)
        self.dest = np.zeros((num_envs, 2, 2), dtype=np.int64)
        self.reached = np.zeros((num_envs, 2), dtype=bool)

    def _reset(self) -> None:
        G, E = self.grid, self.num_envs
        self.pos = self.rng.integers(0, G, size=(E, 2, 2))
        self.dest = self.rng.integers(0, G, size=(E, 2, 2))
        self.reached = np.zeros((E, 2), dtype=bool)

    def _observe(self) -> np.ndarray:
        G, E = self.grid, self.num_envs
        other = self.dest[:, ::-1]
        return np.concatenate([
            one_hot(self.pos[..., 0], G), one_hot(self.pos[..., 1], G),
            one_hot(other[..., 0], G), one_hot(other[..., 1], G),
            np.broadcast_to(np.eye(2), (E, 2, 2)),
        ], axis=-1)

    def arrived(self) -> np.ndarray:
        return (self.pos == self.dest).all(axis=-1)

    def distance(self) -> np.ndarray:
        return np.abs(self.pos - self.dest).sum(axis=-1)

    def _step(self, actions, alive):
        before = self.distance()
        r = self._move(actions, alive)
        return r + self.shaping * (before - self.distance())

    def _move(self, actions, alive):
        moved = np.clip(self.pos + MOVES[actions], 0, self.grid - 1)
        if not self.latch:
            self.pos = np.where(alive[:, None, None], moved, self.pos)
            return np.full((self.num_envs, 2), -self.step_cost)
        paying = alive[:, None] & ~self.reached
        self.pos = np.where(paying[..., None], moved, self.pos)
        self.reached |= paying & self.arrived()
        return -self.step_cost * paying

    def _finished(self, alive):
        done = self.reached if self.latch else self.arrived()
        return done.all(axis=-1) & alive

    def _after_step(self, continuing):
        if self.p_move <= 0:
            return
        jump = (self.rng.random((self.num_envs, 2)) < self.p_move) & continuing[:, None] & ~self.reached
        fresh = self.rng.integers(0, self.grid, size=(self.num_envs, 2, 2))
        self.dest = np.where(jump[..., None], fresh, self.dest)
