"""Toy continuous-control environments and their scripted experts."""

from __future__ import annotations

import numpy as np

from envs.base import DONE_REASONS, StepResult, ToyEnv
from envs.brake import EmergencyBrake
from envs.corridor import NarrowCorridor
from envs.integrator import DoubleIntegratorReach
from envs.spec import ENV_DEFAULTS, EnvSpec, default_spec

ENV_CLASSES: dict[str, type[ToyEnv]] = {
    DoubleIntegratorReach.name: DoubleIntegratorReach,
    NarrowCorridor.name: NarrowCorridor,
    EmergencyBrake.name: EmergencyBrake,
}


def make_env(spec: EnvSpec) -> ToyEnv:
    return ENV_CLASSES[spec.name](spec)


def expert_action(spec: EnvSpec, state: np.ndarray) -> tuple[np.ndarray, bool]:
    """Scripted expert for `spec` evaluated at an internal env state.

    Raises:
        CapabilityError: the environment has no expert.
    """
    return ENV_CLASSES[spec.name].expert(spec, np.asarray(state, dtype=np.float64))


__all__ = [
    "DONE_REASONS",
    "ENV_CLASSES",
    "ENV_DEFAULTS",
    "EnvSpec",
    "StepResult",
    "ToyEnv",
    "default_spec",
    "expert_action",
    "make_env",
]
