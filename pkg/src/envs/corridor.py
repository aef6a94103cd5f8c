"""
Narrow corridor: lateral keeping while moving forward at constant speed.

Leaving the corridor (|y| > half_width) terminates the episode, so lateral
jitter is punished the way a narrow drivable lane punishes it.
"""

from __future__ import annotations

from typing import Any

import numpy as np

from envs.base import DoneReason, ToyEnv
from envs.spec import EnvSpec


class NarrowCorridor(ToyEnv):
    """State [y, v_lat, x]; observation [y, v_lat, x / D]."""

    name = "narrow_corridor"
    obs_dim = 3
    has_expert = True

    def _reset_state(self) -> None:
        y0 = self.rng.uniform(-0.5 * self.spec.half_width, 0.5 * self.spec.half_width)
        self.state = np.array([y0, 0.0, 0.0])

    def _advance(self, action: np.ndarray) -> tuple[float, DoneReason]:
        y, v_lat, x = self.state
        dt = self.spec.dt
        y_next = y + v_lat * dt
        v_next = v_lat + action[0] * dt
        progress = self.spec.cruise_speed * dt
        x_next = x + progress
        self.state = np.array([y_next, v_next, x_next])
        reward = progress - 0.5 * abs(y_next)
        if abs(y_next) > self.spec.half_width:
            return reward, "boundary"
        if x_next >= self.spec.target_position:
            return reward, "success"
        return reward, "none"

    def observation(self) -> np.ndarray:
        y, v_lat, x = self.state
        return np.array([y, v_lat, x / self.spec.target_position])

    def info(self) -> dict[str, Any]:
        y, v_lat, x = self.state
        return {
            "speed": self.spec.cruise_speed,
            "lateral": float(y),
            "path_completion": float(min(1.0, x / self.spec.target_position)),
        }

    def reward_bound(self) -> float:
        v_max = self.spec.a_max * self.spec.dt * self.spec.horizon
        return self.spec.cruise_speed * self.spec.dt + 0.5 * (
            self.spec.half_width + v_max * self.spec.dt
        )

    @classmethod
    def expert(cls, spec: EnvSpec, state: np.ndarray) -> tuple[np.ndarray, bool]:
        """PD law -kp*y - kd*v_lat; intervene outside the inner band of the corridor."""
        y, v_lat = float(state[0]), float(state[1])
        a = np.clip(-spec.kp * y - spec.kd * v_lat, -spec.a_max, spec.a_max)
        intervene = abs(y) > spec.intervene_fraction * spec.half_width
        return np.full(spec.action_dim, a), bool(intervene)
