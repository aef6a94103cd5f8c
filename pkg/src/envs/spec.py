"""
Environment specification shared by the environments and the run config.

Each environment has its own default parameter set; a spec built from a
partial mapping (e.g. a config file that only sets `env.half_width`) is
filled from the defaults of the named environment before validation, so the
resolved manifest always carries every physical parameter.
"""

from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

EnvName = Literal["double_integrator_reach", "narrow_corridor", "emergency_brake"]
DEFAULT_ENV_NAME = "narrow_corridor"

ENV_DEFAULTS: dict[str, dict[str, Any]] = {
    "double_integrator_reach": {
        "dt": 0.05,
        "horizon": 200,
        "a_max": 1.0,
        "target_position": 1.0,
    },
    "narrow_corridor": {
        "dt": 0.05,
        "horizon": 400,
        "a_max": 1.0,
        "half_width": 0.5,
        "target_position": 15.0,
        "cruise_speed": 1.0,
        "kp": 2.0,
        "kd": 1.0,
        "intervene_fraction": 0.7,
    },
    "emergency_brake": {
        "dt": 0.1,
        "horizon": 100,
        "a_max": 1.0,
        "cruise_speed": 10.0,
        "obstacle_distance": 40.0,
        "clear_time": 6.0,
        "clear_jitter": 0.5,
        "b_max": 8.0,
        "ttc_threshold": 1.5,
        "collision_penalty": 100.0,
    },
}


class EnvSpec(BaseModel):
    """Physical and task parameters of one toy environment."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    name: EnvName = DEFAULT_ENV_NAME
    dt: float = Field(0.05, gt=0)
    horizon: int = Field(200, ge=1)
    action_dim: int = Field(1, ge=1)
    a_max: float = Field(1.0, gt=0)

    # Task parameters; only the ones an environment reads matter to it.
    half_width: float = Field(0.5, gt=0)
    target_position: float = Field(1.0, gt=0)
    obstacle_distance: float = Field(40.0, gt=0)
    cruise_speed: float = Field(10.0, gt=0)
    clear_time: float = Field(6.0, gt=0)
    clear_jitter: float = Field(0.5, ge=0)
    b_max: float = Field(8.0, gt=0)
    ttc_threshold: float = Field(1.5, gt=0)
    collision_penalty: float = Field(100.0, ge=0)
    kp: float = Field(2.0, ge=0)
    kd: float = Field(1.0, ge=0)
    intervene_fraction: float = Field(0.7, gt=0, le=1)

    @model_validator(mode="before")
    @classmethod
    def _fill_env_defaults(cls, data: Any) -> Any:
        if isinstance(data, dict):
            name = data.get("name", DEFAULT_ENV_NAME)
            defaults = ENV_DEFAULTS.get(name, {})
            return {**defaults, **data, "name": name}
        return data


def default_spec(name: str, **overrides: Any) -> EnvSpec:
    """Build the default spec of `name`, with optional field overrides."""
    return EnvSpec(name=name, **overrides)
