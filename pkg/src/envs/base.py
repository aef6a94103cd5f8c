"""
Shared environment machinery: step bookkeeping, clipping, termination.

Subclasses implement `_reset_state`, `_advance`, `observation` and, when the
task has a scripted expert, `expert`.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np

from envs.spec import EnvSpec
from utils.safety import CapabilityError, NumericError, UsageError, as_vector

logger = logging.getLogger(__name__)

DoneReason = Literal["none", "success", "boundary", "collision", "timeout"]
DONE_REASONS: tuple[str, ...] = ("none", "success", "boundary", "collision", "timeout")


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    done_reason: DoneReason = "none"
    info: dict[str, Any] = field(default_factory=dict)

    @property
    def terminal(self) -> bool:
        """True when the step ends the MDP (timeouts only truncate)."""
        return self.done and self.done_reason != "timeout"


class ToyEnv:
    """Base class for the deterministic toy tasks."""

    name: str = ""
    obs_dim: int = 0
    has_expert: bool = False

    def __init__(self, spec: EnvSpec):
        self.spec = spec
        self.t = 0
        self.done = True
        self.rng: np.random.Generator | None = None
        self.state = np.zeros(0)

    # -- lifecycle ---------------------------------------------------------

    def reset(self, seed: int) -> np.ndarray:
        self.rng = np.random.default_rng(seed)
        self.t = 0
        self.done = False
        self._reset_state()
        return self.observation()

    def step(self, action) -> StepResult:
        """Advance one dt.

        Raises:
            UsageError: the episode is over (or reset was never called).
        """
        if self.done:
            raise UsageError(f"{self.name}: step called after the episode ended")
        a = np.clip(
            as_vector(action, self.spec.action_dim, "action"), -self.spec.a_max, self.spec.a_max
        )
        reward, reason = self._advance(a)
        self.t += 1
        if reason == "none" and self.t >= self.spec.horizon:
            reason = "timeout"
        if not np.isfinite(reward):
            raise NumericError(f"{self.name}: non-finite reward at step {self.t}")
        self.done = reason != "none"
        return StepResult(self.observation(), float(reward), self.done, reason, self.info())

    # -- per-task hooks ----------------------------------------------------

    def _reset_state(self) -> None:
        raise NotImplementedError

    def _advance(self, action: np.ndarray) -> tuple[float, DoneReason]:
        raise NotImplementedError

    def observation(self) -> np.ndarray:
        raise NotImplementedError

    def info(self) -> dict[str, Any]:
        return {}

    def reward_bound(self) -> float:
        """Upper bound on |reward| for any step of this task."""
        raise NotImplementedError

    @classmethod
    def expert(cls, spec: EnvSpec, state: np.ndarray) -> tuple[np.ndarray, bool]:
        raise CapabilityError(f"environment '{spec.name}' has no scripted expert")

    def expert_action(self) -> tuple[np.ndarray, bool]:
        """Expert action and intervention flag for the current state."""
        return self.expert(self.spec, self.state)
