"""Noise-free evaluation of a saved checkpoint."""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

from agents.trainer import evaluate_actor
from core.execution_window import make_profile
from core.metrics import reports_frame, summarize
from data.checkpoints import check_compatible, load_checkpoint
from envs import make_env
from envs.spec import EnvSpec, default_spec
from utils.safety import DataError, clamp, safe_error

logger = logging.getLogger(__name__)


def resolve_env(env: str | EnvSpec | None, meta: dict[str, Any]) -> EnvSpec:
    """The env to evaluate on: an explicit spec, else the one the checkpoint trained on.

    A different env name starts from that environment's defaults.
    """
    if isinstance(env, EnvSpec):
        return env
    stored = meta.get("env_spec")
    if stored and env in (None, stored.get("name")):
        return EnvSpec(**stored)
    return default_spec(env or meta["env"])


def cmd_eval(
    checkpoint: str | Path,
    env: str | EnvSpec | None = None,
    n_episodes: int = 20,
    seed: int = 0,
    out: str | Path | None = None,
) -> dict[str, Any]:
    """
    Evaluate the actor of `checkpoint` with the execution profile it was trained with.

    Writes one row per episode plus `mean` and `std` rows to `out` (default
    `<checkpoint>/eval_seed<seed>.csv`).

    Returns:
        {"checkpoint", "env", "episodes", "csv", "summary"} or {"error"}.
    """
    n_episodes = clamp(n_episodes, 1, 10_000, default=20)
    try:
        nets, meta = load_checkpoint(checkpoint)
        if "actor" not in nets:
            raise DataError(f"checkpoint {Path(checkpoint).name} holds no actor")
        spec = resolve_env(env, meta)
        check_compatible(meta, make_env(spec).obs_dim, spec.action_dim)
        chunk_h = meta.get("chunk_h")
        profile = None
        if not chunk_h:
            profile = make_profile(meta.get("profile", "zoh"), int(meta.get("h", 1)))
        reports, _ = evaluate_actor(nets["actor"], spec, n_episodes, seed, profile, chunk_h)
        frame = reports_frame(reports)
        path = Path(out) if out else Path(checkpoint) / f"eval_seed{seed}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, encoding="utf-8")
        logger.info(f"Evaluated {n_episodes} episodes of {spec.name} into {path.name}")
        return {
            "checkpoint": str(checkpoint),
            "env": spec.name,
            "episodes": n_episodes,
            "csv": str(path),
            "summary": summarize(reports),
        }
    except Exception as e:
        return {"error": safe_error(e, "eval")}
