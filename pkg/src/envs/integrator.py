"""Double-integrator reach: drive a point mass to a seeded target position."""

from __future__ import annotations

from typing import Any

import numpy as np

from envs.base import DoneReason, ToyEnv

SUCCESS_RADIUS = 0.05
SUCCESS_BONUS = 1.0


class DoubleIntegratorReach(ToyEnv):
    """State [pos, vel, target]; the episode only ends by timeout."""

    name = "double_integrator_reach"
    obs_dim = 3

    def _reset_state(self) -> None:
        target = self.rng.uniform(-self.spec.target_position, self.spec.target_position)
        self.state = np.array([0.0, 0.0, target])

    def _advance(self, action: np.ndarray) -> tuple[float, DoneReason]:
        pos, vel, target = self.state
        dt = self.spec.dt
        pos_next = pos + vel * dt
        vel_next = vel + action[0] * dt
        self.state = np.array([pos_next, vel_next, target])
        err = abs(pos_next - target)
        reward = -err + (SUCCESS_BONUS if err < SUCCESS_RADIUS else 0.0)
        return reward, "none"

    def observation(self) -> np.ndarray:
        return self.state.copy()

    def info(self) -> dict[str, Any]:
        pos, vel, target = self.state
        return {
            "speed": float(abs(vel)),
            "position": float(pos),
            "path_completion": 1.0 if abs(pos - target) < SUCCESS_RADIUS else 0.0,
        }

    def reward_bound(self) -> float:
        travel = 0.5 * self.spec.a_max * (self.spec.dt * self.spec.horizon) ** 2
        return self.spec.target_position + travel + SUCCESS_BONUS
