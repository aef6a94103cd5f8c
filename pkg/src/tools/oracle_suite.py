"""
Windowed-return oracle suite.

For both execution profiles and h in {1, 2, 3}, sampled windowed returns on a
finite MDP are compared with the exhaustive backup of every augmented key.
"""

from __future__ import annotations

import logging
import os
from dataclasses import asdict
from pathlib import Path
from typing import Any

import pandas as pd

from core.execution_window import PROFILE_KINDS, make_profile
from core.oracle import chain5, compare_with_sampling, load_mdp
from utils.rng import stream
from utils.safety import clamp, safe_error

logger = logging.getLogger(__name__)

ORACLE_HORIZONS = (1, 2, 3)


def run_suite(
    mdp_path: str | Path | None = None,
    gamma: float = 0.98,
    n_per_key: int = 20_000,
    seed: int = 0,
    horizons: tuple[int, ...] = ORACLE_HORIZONS,
) -> pd.DataFrame:
    """One row per (profile, h, augmented key)."""
    mdp = load_mdp(mdp_path) if mdp_path else chain5()
    rng = stream(seed, "oracle")
    rows = []
    for kind in PROFILE_KINDS:
        for h in horizons:
            checks = compare_with_sampling(mdp, make_profile(kind, h), gamma, n_per_key, rng)
            rows.extend({**asdict(c), "passed": c.passed} for c in checks)
            logger.info(
                f"oracle {kind} h={h}: {sum(c.passed for c in checks)}/{len(checks)} keys passed"
            )
    return pd.DataFrame(rows)


def cmd_oracle_test(
    mdp_path: str | Path | None = None,
    gamma: float = 0.98,
    n_per_key: int = 20_000,
    seed: int = 0,
    out: str | Path | None = None,
) -> dict[str, Any]:
    """
    Run the suite and write one CSV row per checked key.

    Returns:
        {"keys", "failed", "samples", "csv", "passed"}; "error" is set when any
        key falls outside its tolerance.
    """
    n_per_key = clamp(n_per_key, 2, 10_000_000, default=20_000)
    try:
        df = run_suite(mdp_path, gamma, n_per_key, seed)
        path = Path(out) if out else Path(os.getenv("DWS_OUTPUT_DIR", "runs")) / "oracle_suite.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, encoding="utf-8")
        failed = int((~df["passed"]).sum())
        result: dict[str, Any] = {
            "keys": len(df),
            "failed": failed,
            "samples": int(df["n_valid"].sum()),
            "csv": str(path),
            "passed": failed == 0,
        }
        if failed:
            worst = df.loc[df["z"].abs().idxmax()]
            result["error"] = (
                f"{failed} key(s) outside tolerance; worst: {worst['profile']} h={worst['h']} "
                f"state {worst['state']} z={worst['z']:.2f}"
            )
        return result
    except Exception as e:
        return {"error": safe_error(e, "oracle-test")}
