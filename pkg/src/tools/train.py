"""
Training command: one run directory per seed, each with its own manifest.

Layout under `output_dir`:

    <label>/seed_<n>/manifest.json
    <label>/seed_<n>/train_log.csv, train_episodes.csv, eval.csv,
                     final_eval.csv, trajectories.csv
    <label>/seed_<n>/checkpoints/ep_XXXX/, checkpoints/final/

Seeds run as independent worker processes when more than one worker is
allowed (`workers` argument, else `DWS_WORKERS`, else 1).
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import pandas as pd

from agents.trainer import dws_train
from utils.config import RunConfig, write_manifest
from utils.safety import clamp, safe_error

logger = logging.getLogger(__name__)

MAX_WORKERS = 32


def default_label(config: RunConfig) -> str:
    return f"{config.algorithm}_{config.env.name}"


def resolve_workers(workers: int | None) -> int:
    raw = workers if workers is not None else os.getenv("DWS_WORKERS", "1")
    return clamp(raw, 1, MAX_WORKERS, default=1)


def train_one(config: RunConfig, seed: int, run_dir: str | Path) -> dict[str, Any]:
    """Train one seed and record its manifest; never raises."""
    run_dir = Path(run_dir)
    write_manifest(run_dir, config, seed, "running")
    try:
        result = dws_train(config, seed, run_dir)
    except Exception as e:
        message = safe_error(e, f"train seed {seed}")
        partial = {p.stem: p.name for p in sorted(run_dir.glob("*.csv"))}
        write_manifest(run_dir, config, seed, "failed", artifacts=partial, error=message)
        return {"seed": seed, "run_dir": str(run_dir), "status": "failed", "error": message}
    write_manifest(
        run_dir,
        config,
        seed,
        "complete",
        artifacts=result.artifacts,
        extra={
            "final": result.final,
            "env_steps": result.env_steps,
            "updates": result.updates,
        },
    )
    return {
        "seed": seed,
        "run_dir": str(run_dir),
        "status": "complete",
        "final": result.final,
    }


def run_seeds(
    config: RunConfig, label: str | None = None, workers: int | None = None
) -> list[dict[str, Any]]:
    """Train every seed of `config`; results come back in seed order."""
    root = Path(config.output_dir) / (label or default_label(config))
    jobs = [(config, seed, root / f"seed_{seed}") for seed in config.seeds]
    n_workers = min(resolve_workers(workers), len(jobs))
    logger.info(f"Training {len(jobs)} seed(s) of {root.name} with {n_workers} worker(s)")
    if n_workers == 1:
        return [train_one(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=n_workers) as pool:
        futures = [pool.submit(train_one, *job) for job in jobs]
        return [f.result() for f in futures]


def aggregate_finals(runs: list[dict[str, Any]]) -> dict[str, float]:
    """Mean and population std over seeds of every final-evaluation figure."""
    finals = [r["final"] for r in runs if r.get("status") == "complete"]
    if not finals:
        return {}
    df = pd.DataFrame(finals).apply(pd.to_numeric, errors="coerce")
    out: dict[str, float] = {}
    for col in df.columns:
        out[f"{col}_mean"] = float(df[col].mean())
        out[f"{col}_std"] = float(df[col].std(ddof=0))
    return out


def run_cell(
    config: RunConfig, label: str, workers: int | None = None, **fields: Any
) -> dict[str, Any]:
    """Train all seeds of one sweep/ablation cell; returns its aggregate row."""
    runs = run_seeds(config, label, workers)
    failed = [r for r in runs if r["status"] != "complete"]
    row = {**fields, "n_seeds": len(runs), "n_failed": len(failed), **aggregate_finals(runs)}
    if failed:
        row["error"] = failed[0]["error"]
    return row


def cmd_train(
    config: RunConfig, label: str | None = None, workers: int | None = None
) -> dict[str, Any]:
    """
    Train every seed of a resolved config.

    Returns:
        {
          "algorithm": str,
          "env": str,
          "output_dir": str,
          "runs": [{seed, run_dir, status, final | error}, ...],
          "summary": {<metric>_mean, <metric>_std, ...},
        }
        plus "error" when any seed failed.
    """
    try:
        runs = run_seeds(config, label, workers)
    except Exception as e:
        return {"error": safe_error(e, "train")}

    result: dict[str, Any] = {
        "algorithm": config.algorithm,
        "env": config.env.name,
        "output_dir": str(Path(config.output_dir) / (label or default_label(config))),
        "runs": runs,
        "summary": aggregate_finals(runs),
    }
    failed = [r for r in runs if r["status"] != "complete"]
    if failed:
        result["error"] = f"{len(failed)} of {len(runs)} seed(s) failed: {failed[0]['error']}"
    return result
