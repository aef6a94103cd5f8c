"""
Run configuration: validated models, key=value config files and manifests.

Config files are flat text, one `key = value` per line, `#` starts a comment,
nested models use dotted keys and lists are comma separated:

    algorithm = dws
    env.name = narrow_corridor
    env.half_width = 0.4
    dws.h = 3
    seeds = 0,1,2,3,4

Precedence, lowest first: model defaults, config file, named CLI flags,
`--set key=value` overrides.
"""

from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from envs.spec import DEFAULT_ENV_NAME, EnvSpec
from utils.safety import ConfigError

logger = logging.getLogger(__name__)

Algorithm = Literal["vanilla", "dws", "action_chunk", "dws_eg"]
ProfileKind = Literal["zoh", "dissipative_linear"]


def _split_list(value: Any) -> Any:
    if isinstance(value, str):
        return [v.strip() for v in value.split(",") if v.strip()]
    if isinstance(value, int):
        return [value]
    return value


class HyperParams(BaseModel):
    """Backbone hyperparameters shared by every algorithm."""

    model_config = ConfigDict(extra="forbid")

    replay_capacity: int = Field(50_000, ge=1)
    batch_size: int = Field(128, ge=1)
    gamma: float = Field(0.98, gt=0, lt=1)
    lr_critic: float = Field(3e-4, gt=0)
    lr_actor: float = Field(2e-4, gt=0)
    tau: float = Field(0.005, ge=0, le=1)
    policy_noise: float = Field(0.15, ge=0)
    noise_clip: float = Field(0.5, ge=0)
    policy_update_frequency: int = Field(1, ge=1)
    exploration_initial: float = Field(0.5, ge=0)
    exploration_min: float = Field(0.005, ge=0)
    exploration_decay: float = Field(0.99988, gt=0, le=1)
    adam_beta1: float = Field(0.9, ge=0, lt=1)
    adam_beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)


class DWSSettings(BaseModel):
    """Window horizon, regularizer weight, profile and component toggles."""

    model_config = ConfigDict(extra="forbid")

    h: int = Field(3, ge=1)
    lambda_s: float = Field(0.10, ge=0)
    profile: ProfileKind = "zoh"
    execution_window: bool = True
    value_window: bool = True
    smooth_reg: bool = True
    window_fraction: float = Field(0.5, ge=0, le=1)
    window_capacity: int = Field(4096, ge=1)
    lambda_eg: float = Field(1.0, ge=0)
    force_intervention: bool = False

    @field_validator("profile", mode="before")
    @classmethod
    def _profile_alias(cls, value: Any) -> Any:
        # "decay" is the CLI spelling of the linear dissipative profile
        return "dissipative_linear" if value == "decay" else value


class NetworkSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    hidden_widths: list[int] = Field(default_factory=lambda: [64, 64])
    hidden_activation: Literal["relu", "tanh"] = "relu"

    @field_validator("hidden_widths", mode="before")
    @classmethod
    def _widths(cls, value: Any) -> Any:
        return _split_list(value)

    @field_validator("hidden_widths")
    @classmethod
    def _positive(cls, value: list[int]) -> list[int]:
        if any(w < 1 for w in value):
            raise ValueError("hidden widths must be positive")
        return value


class RunConfig(BaseModel):
    """Everything needed to reproduce a run, given one seed from `seeds`."""

    model_config = ConfigDict(extra="forbid")

    algorithm: Algorithm = "dws"
    env: EnvSpec = Field(default_factory=EnvSpec)
    hyper: HyperParams = Field(default_factory=HyperParams)
    dws: DWSSettings = Field(default_factory=DWSSettings)
    network: NetworkSettings = Field(default_factory=NetworkSettings)
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    episodes: int = Field(100, ge=1)
    eval_every: int = Field(5, ge=0)
    eval_episodes: int = Field(5, ge=1)
    checkpoint_every: int = Field(25, ge=0)
    warmup: int | None = Field(None, ge=1)
    write_trajectories: bool = True
    output_dir: str = Field(default_factory=lambda: os.getenv("DWS_OUTPUT_DIR", "runs"))

    @field_validator("seeds", mode="before")
    @classmethod
    def _seeds(cls, value: Any) -> Any:
        return _split_list(value)

    @property
    def warmup_steps(self) -> int:
        return self.warmup if self.warmup is not None else self.hyper.batch_size

    def effective_dws(self) -> DWSSettings:
        """DWS settings as the training loop applies them for this algorithm.

        vanilla turns every component off and queries the policy every step;
        action_chunk keeps `h` as the chunk length and turns the components off.
        """
        if self.algorithm == "vanilla":
            return self.dws.model_copy(
                update={
                    "h": 1,
                    "execution_window": False,
                    "value_window": False,
                    "smooth_reg": False,
                    "force_intervention": False,
                }
            )
        if self.algorithm == "action_chunk":
            return self.dws.model_copy(
                update={"execution_window": False, "value_window": False, "smooth_reg": False}
            )
        return self.dws


# ---------------------------------------------------------------------------
# key=value files and overrides
# ---------------------------------------------------------------------------


def parse_kv_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse flat `key = value` lines into a dict of raw strings."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        values[key] = value
    return values


def parse_set_args(items: list[str] | None) -> dict[str, str]:
    """Parse repeated `--set key=value` arguments."""
    values: dict[str, str] = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got '{item}'")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _nest(flat: dict[str, Any]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"'{key}' nests under a scalar field", fields=[key])
            node = child
        node[parts[-1]] = value
    return nested


def _merge(base: dict[str, Any], extra: dict[str, Any]) -> dict[str, Any]:
    out = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def build_config(*layers: dict[str, Any]) -> RunConfig:
    """Validate merged layers (flat dotted or nested dicts) into a RunConfig.

    Raises:
        ConfigError: naming every offending dotted field.
    """
    merged: dict[str, Any] = {}
    for layer in layers:
        if not layer:
            continue
        flat_keys = {k: v for k, v in layer.items() if "." in k}
        plain = {k: v for k, v in layer.items() if "." not in k}
        nested = _merge(plain, _nest(flat_keys))
        env_layer = nested.get("env")
        if isinstance(env_layer, dict) and isinstance(merged.get("env"), dict):
            # A new env.name starts from that environment's defaults.
            current = merged["env"].get("name", DEFAULT_ENV_NAME)
            if env_layer.get("name", current) != current:
                merged = {k: v for k, v in merged.items() if k != "env"}
        merged = _merge(merged, nested)
    try:
        return RunConfig.model_validate(merged)
    except ValidationError as exc:
        fields = [".".join(str(p) for p in err["loc"]) for err in exc.errors()]
        details = "; ".join(
            f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in exc.errors()
        )
        raise ConfigError(f"invalid config: {details}", fields=fields) from exc


def override_config(config: RunConfig, overrides: dict[str, Any]) -> RunConfig:
    """Copy of `config` with dotted-key overrides applied and re-validated."""
    return build_config(config.model_dump(mode="json"), overrides)


def load_config(
    path: str | Path | None = None,
    flags: dict[str, Any] | None = None,
    sets: list[str] | None = None,
) -> RunConfig:
    """Resolve a RunConfig from an optional file, CLI flags and `--set` overrides."""
    file_layer: dict[str, Any] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        file_layer = parse_kv_text(p.read_text(encoding="utf-8"), source=p.name)
        logger.info(f"Loaded {len(file_layer)} config keys from {p.name}")
    flag_layer = {k: v for k, v in (flags or {}).items() if v is not None}
    return build_config(file_layer, flag_layer, parse_set_args(sets))


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------


def write_manifest(
    run_dir: str | Path,
    config: RunConfig,
    seed: int | None,
    status: str,
    artifacts: dict[str, str] | None = None,
    error: str | None = None,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write manifest.json with the fully resolved config."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    payload: dict[str, Any] = {
        "status": status,
        "seed": seed,
        "config": config.model_dump(mode="json"),
        "artifacts": artifacts or {},
    }
    if error:
        payload["error"] = error
    if extra:
        payload.update(extra)
    path = run_dir / "manifest.json"
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")
    return path


def load_manifest(path: str | Path) -> tuple[RunConfig, int | None]:
    """Read a manifest back into (config, seed)."""
    p = Path(path)
    if p.is_dir():
        p = p / "manifest.json"
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"unreadable manifest {p.name}: {exc}") from exc
    if "config" not in payload:
        raise ConfigError(f"manifest {p.name} has no 'config' section", fields=["config"])
    return build_config(payload["config"]), payload.get("seed")
