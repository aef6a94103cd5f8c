"""
Emergency braking: a stopped obstacle blocks the lane until a seeded time.

The action is a normalized brake command (negative values mean no brake).
Progress is rewarded, harsh braking mildly penalized and a collision costs
`collision_penalty`. The episode succeeds when the obstacle clears while the
gap is still positive.
"""

from __future__ import annotations

import logging
from typing import Any

import numpy as np

from envs.base import DoneReason, ToyEnv
from envs.spec import EnvSpec

logger = logging.getLogger(__name__)

BRAKE_COST = 0.01


def time_to_collision(gap: float, speed: float) -> float:
    return gap / speed if speed > 0.0 else float("inf")


def expert_stop_speed(spec: EnvSpec) -> float:
    """Highest cruise speed from which the TTC expert still stops short of the obstacle.

    The expert starts braking with at least `ttc_threshold - dt` seconds of gap
    and covers about v^2 / (2 decel) + v dt / 2 before standing still.
    """
    decel = spec.a_max * spec.b_max
    return 2.0 * decel * (spec.ttc_threshold - 1.5 * spec.dt)


class EmergencyBrake(ToyEnv):
    """State [v, gap, t, clear_at, traveled]."""

    name = "emergency_brake"
    obs_dim = 3
    has_expert = True

    def __init__(self, spec: EnvSpec):
        super().__init__(spec)
        limit = expert_stop_speed(spec)
        if spec.cruise_speed >= limit:
            logger.warning(
                f"cruise_speed {spec.cruise_speed} is above the expert stop speed {limit:.1f}; "
                "expert rollouts may collide"
            )

    def _reset_state(self) -> None:
        jitter = self.spec.clear_jitter
        clear_at = self.spec.clear_time + self.rng.uniform(-jitter, jitter)
        spec = self.spec
        self.state = np.array([spec.cruise_speed, spec.obstacle_distance, 0.0, clear_at, 0.0])

    def _advance(self, action: np.ndarray) -> tuple[float, DoneReason]:
        v, gap, t, clear_at, traveled = self.state
        dt = self.spec.dt
        brake = float(np.clip(action[0], 0.0, self.spec.a_max))
        v_next = max(0.0, v - brake * self.spec.b_max * dt)
        progress = v * dt
        gap_next = gap - progress
        t_next = t + dt
        self.state = np.array([v_next, gap_next, t_next, clear_at, traveled + progress])
        reward = progress - BRAKE_COST * float(action[0]) ** 2
        if gap_next <= 0.0:
            return reward - self.spec.collision_penalty, "collision"
        if t_next >= clear_at:
            return reward, "success"
        return reward, "none"

    def observation(self) -> np.ndarray:
        v, gap, t, clear_at, _ = self.state
        time_to_clear = max(0.0, clear_at - t)
        return np.array(
            [
                v / self.spec.cruise_speed,
                gap / self.spec.obstacle_distance,
                time_to_clear / self.spec.clear_time,
            ]
        )

    def info(self) -> dict[str, Any]:
        v, gap, t, clear_at, traveled = self.state
        cleared = t >= clear_at and gap > 0.0
        covered = float(min(1.0, traveled / self.spec.obstacle_distance))
        return {
            "speed": float(v),
            "gap": float(gap),
            "path_completion": 1.0 if cleared else covered,
        }

    def reward_bound(self) -> float:
        return (
            self.spec.cruise_speed * self.spec.dt
            + self.spec.collision_penalty
            + BRAKE_COST * self.spec.a_max**2
        )

    @classmethod
    def expert(cls, spec: EnvSpec, state: np.ndarray) -> tuple[np.ndarray, bool]:
        """Full brake while time-to-collision is under the threshold."""
        ttc = time_to_collision(float(state[1]), float(state[0]))
        intervene = ttc < spec.ttc_threshold
        a = spec.a_max if intervene else 0.0
        return np.full(spec.action_dim, a), bool(intervene)
