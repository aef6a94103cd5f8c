"""
Per-step trajectory logs.

Column order (UTF-8, comma separated, header row):

    episode, t, obs_0..obs_{n-1}, action_0..action_{d-1},
    executed_0..executed_{d-1}, reward, done, done_reason,
    speed, gap, path_completion, intervened

`action_*` is the reference action held by the execution window (the
expert action on intervened steps) and `executed_*` the action actually sent
to the environment. `gap` is empty for tasks without an obstacle.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

TAIL_COLUMNS = ["reward", "done", "done_reason", "speed", "gap", "path_completion", "intervened"]


def trajectory_columns(obs_dim: int, action_dim: int) -> list[str]:
    return (
        ["episode", "t"]
        + [f"obs_{i}" for i in range(obs_dim)]
        + [f"action_{i}" for i in range(action_dim)]
        + [f"executed_{i}" for i in range(action_dim)]
        + TAIL_COLUMNS
    )


def _row(
    episode: int,
    t: int,
    obs: np.ndarray,
    action: np.ndarray,
    executed: np.ndarray,
    reward: float,
    done: bool,
    done_reason: str,
    info: dict[str, Any] | None,
    intervened: bool,
) -> dict[str, Any]:
    info = info or {}
    row: dict[str, Any] = {"episode": int(episode), "t": int(t)}
    row.update({f"obs_{i}": float(v) for i, v in enumerate(obs)})
    row.update({f"action_{i}": float(v) for i, v in enumerate(action)})
    row.update({f"executed_{i}": float(v) for i, v in enumerate(executed)})
    row.update(
        {
            "reward": float(reward),
            "done": bool(done),
            "done_reason": done_reason,
            "speed": info.get("speed", np.nan),
            "gap": info.get("gap", np.nan),
            "path_completion": info.get("path_completion", np.nan),
            "intervened": bool(intervened),
        }
    )
    return row


class TrajectoryLog:
    """Accumulates rows in memory; written once per run."""

    def __init__(self, obs_dim: int, action_dim: int):
        self.columns = trajectory_columns(obs_dim, action_dim)
        self.rows: list[dict[str, Any]] = []

    def __len__(self) -> int:
        return len(self.rows)

    def record(
        self,
        episode: int,
        t: int,
        obs,
        action,
        executed,
        reward: float,
        done: bool,
        done_reason: str,
        info: dict[str, Any] | None = None,
        intervened: bool = False,
    ) -> None:
        self.rows.append(
            _row(
                episode,
                t,
                np.asarray(obs),
                np.asarray(action),
                np.asarray(executed),
                reward,
                done,
                done_reason,
                info,
                intervened,
            )
        )

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=self.columns)

    def episode_frames(self) -> list[pd.DataFrame]:
        df = self.frame()
        if df.empty:
            return []
        return [g.reset_index(drop=True) for _, g in df.groupby("episode", sort=False)]

    def write(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame().to_csv(path, index=False, encoding="utf-8")
        logger.info(f"Wrote {len(self.rows)} trajectory rows to {path.name}")
        return path


def transitions_frame(transitions) -> pd.DataFrame:
    """Stored transitions in the trajectory schema (action = executed)."""
    rows = []
    obs_dim = action_dim = 0
    for tr in transitions:
        s = np.asarray(tr.s)
        u = np.asarray(tr.u)
        obs_dim, action_dim = s.shape[0], u.shape[0]
        reason = tr.done_reason
        done = reason != "none"
        rows.append(
            _row(tr.episode_id, tr.step_index, s, u, u, tr.r, done, reason, None, tr.intervened)
        )
    return pd.DataFrame(rows, columns=trajectory_columns(obs_dim, action_dim))


def read_log(path: str | Path) -> pd.DataFrame:
    return pd.read_csv(Path(path), encoding="utf-8")
