"""
Sensitivity sweeps over one axis of a base config.

Axes and default grids:

    h           1, 2, 3, 4, 5
    lambda_s    0, 0.03, 0.10, 0.30, 0.40
    profile     zoh, decay
    half_width  0.3, 0.4, 0.5   (narrow_corridor only)

Each grid value is one cell trained over every seed of the base config; the
table holds one aggregate row per cell and, for numeric axes, the Spearman
rank correlation between the swept value and mean AFR.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from scipy.stats import spearmanr

from tools.train import run_cell
from utils.config import RunConfig, override_config
from utils.safety import ParameterError, safe_error

logger = logging.getLogger(__name__)

SWEEP_AXES = {
    "h": "dws.h",
    "lambda_s": "dws.lambda_s",
    "profile": "dws.profile",
    "half_width": "env.half_width",
}

DEFAULT_GRIDS: dict[str, list[Any]] = {
    "h": [1, 2, 3, 4, 5],
    "lambda_s": [0.0, 0.03, 0.10, 0.30, 0.40],
    "profile": ["zoh", "decay"],
    "half_width": [0.3, 0.4, 0.5],
}

AXIS_TYPES = {"h": int, "lambda_s": float, "profile": str, "half_width": float}


def parse_grid(axis: str, grid: str | list[Any] | None) -> list[Any]:
    """Grid values for `axis`; a comma separated string is accepted."""
    if axis not in SWEEP_AXES:
        raise ParameterError(f"unknown sweep axis '{axis}' (known: {', '.join(SWEEP_AXES)})")
    if grid is None:
        return list(DEFAULT_GRIDS[axis])
    if isinstance(grid, str):
        grid = [g.strip() for g in grid.split(",") if g.strip()]
    if not grid:
        raise ParameterError(f"empty grid for axis '{axis}'")
    cast = AXIS_TYPES[axis]
    try:
        return [cast(g) for g in grid]
    except (TypeError, ValueError) as e:
        raise ParameterError(f"grid for '{axis}' must hold {cast.__name__} values: {e}") from e


def spearman_trend(values: list[float], afr: list[float]) -> float | None:
    """Rank correlation of value against AFR; None when undefined."""
    x = np.asarray(values, dtype=np.float64)
    y = np.asarray(afr, dtype=np.float64)
    if x.size < 2 or not np.isfinite(y).all() or np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    return float(spearmanr(x, y)[0])


def sweep_rows(
    config: RunConfig, axis: str, values: list[Any], workers: int | None = None
) -> list[dict[str, Any]]:
    rows = []
    for value in values:
        cell = override_config(config, {SWEEP_AXES[axis]: value})
        logger.info("sweep_cell", extra={"axis": axis, "value": value})
        rows.append(run_cell(cell, f"sweep_{axis}/{axis}_{value}", workers, axis=axis, value=value))
    return rows


def cmd_sweep(
    config: RunConfig,
    axis: str,
    grid: str | list[Any] | None = None,
    workers: int | None = None,
    out: str | Path | None = None,
) -> dict[str, Any]:
    """
    Run one sweep and write its table (default `<output_dir>/sweep_<axis>.csv`).

    Returns:
        {"axis", "cells", "csv", "spearman_afr", "table"} or {"error"}.
    """
    try:
        values = parse_grid(axis, grid)
        if axis == "half_width" and config.env.name != "narrow_corridor":
            raise ParameterError("the half_width axis only applies to narrow_corridor")
        rows = sweep_rows(config, axis, values, workers)
        df = pd.DataFrame(rows)
        rho = None
        if axis != "profile" and "afr_l2_mean" in df.columns:
            rho = spearman_trend(values, df["afr_l2_mean"].tolist())
        df["spearman_afr"] = np.nan if rho is None else rho
        path = Path(out) if out else Path(config.output_dir) / f"sweep_{axis}.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, encoding="utf-8")
        result: dict[str, Any] = {
            "axis": axis,
            "cells": len(df),
            "csv": str(path),
            "spearman_afr": rho,
            "table": json.loads(df.to_json(orient="records")),
        }
        failed = [r for r in rows if r.get("n_failed")]
        if failed:
            result["error"] = f"{len(failed)} cell(s) had failed seeds: {failed[0]['error']}"
        return result
    except Exception as e:
        return {"error": safe_error(e, "sweep")}
