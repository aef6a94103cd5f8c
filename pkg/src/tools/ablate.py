"""Component ablation: the six on/off combinations of the three DWS components."""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any

import pandas as pd

from tools.train import run_cell
from utils.config import RunConfig, override_config
from utils.safety import safe_error

logger = logging.getLogger(__name__)

# variant -> (execution_window, value_window, smooth_reg)
ABLATION_VARIANTS: dict[str, tuple[bool, bool, bool]] = {
    "backbone": (False, False, False),
    "value_window": (False, True, False),
    "smooth_reg": (False, False, True),
    "value_window+smooth_reg": (False, True, True),
    "execution_window": (True, False, False),
    "full": (True, True, True),
}


def variant_config(config: RunConfig, variant: str) -> RunConfig:
    execution, value, reg = ABLATION_VARIANTS[variant]
    algorithm = config.algorithm if config.algorithm in ("dws", "dws_eg") else "dws"
    return override_config(
        config,
        {
            "algorithm": algorithm,
            "dws.execution_window": execution,
            "dws.value_window": value,
            "dws.smooth_reg": reg,
        },
    )


def cmd_ablate(
    config: RunConfig, workers: int | None = None, out: str | Path | None = None
) -> dict[str, Any]:
    """
    Train every ablation variant over the seeds of `config`.

    Returns:
        {"variants", "csv", "table"} or {"error"}; the table is also written to
        `out` (default `<output_dir>/ablation.csv`).
    """
    try:
        rows = []
        for variant, (execution, value, reg) in ABLATION_VARIANTS.items():
            logger.info("ablation_variant", extra={"variant": variant})
            rows.append(
                run_cell(
                    variant_config(config, variant),
                    f"ablation/{variant}",
                    workers,
                    variant=variant,
                    execution_window=execution,
                    value_window=value,
                    smooth_reg=reg,
                )
            )
        df = pd.DataFrame(rows)
        path = Path(out) if out else Path(config.output_dir) / "ablation.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, encoding="utf-8")
        result: dict[str, Any] = {
            "variants": len(df),
            "csv": str(path),
            "table": json.loads(df.to_json(orient="records")),
        }
        failed = [r for r in rows if r.get("n_failed")]
        if failed:
            result["error"] = f"{len(failed)} variant(s) had failed seeds: {failed[0]['error']}"
        return result
    except Exception as e:
        return {"error": safe_error(e, "ablate")}
