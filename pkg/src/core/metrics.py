"""
Smoothness, comfort and task metrics over executed trajectories.

Action-space statistics use per-step units (dt = 1): delta is the first
difference of the executed action, jerk the second. Vehicle comfort
statistics of the braking task use finite differences of the logged speed
over the environment dt, restricted to the active window (gap > 0.5 and
speed > 0.5). Percentiles are nearest-rank.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np
import pandas as pd

from envs.base import DONE_REASONS
from utils.safety import InsufficientDataError, LogParseError, ParameterError

logger = logging.getLogger(__name__)

ACTIVE_GAP = 0.5
ACTIVE_SPEED = 0.5


@dataclass
class MetricsReport:
    episode_return: float
    length: int
    afr_l1: float
    afr_l2: float
    smoothness: float
    jerk_rms: float
    jerk_p95: float
    delta_max: float
    delta_p95: float
    success: bool
    collision: bool
    boundary: bool
    path_completion: float
    ttc_mean_active: float | None = None
    ttc_min_active: float | None = None
    acc_rms_active: float | None = None
    jerk_rms_active: float | None = None
    acc_rms: float | None = None
    speed_jerk_rms: float | None = None

    def as_row(self) -> dict:
        row = asdict(self)
        row["return"] = row.pop("episode_return")
        return row


REPORT_COLUMNS = ["return"] + [f.name for f in fields(MetricsReport) if f.name != "episode_return"]


@dataclass
class ActiveWindowStats:
    ttc_mean: float | None
    ttc_min: float | None
    acc_rms: float | None
    jerk_rms: float | None


def _as_matrix(actions) -> np.ndarray:
    arr = np.asarray(actions, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ParameterError(f"actions must be a sequence of vectors, got shape {arr.shape}")
    return arr


def nearest_rank(values, q: float) -> float:
    return float(np.percentile(np.asarray(values, dtype=np.float64), q, method="inverted_cdf"))


def _rms(values) -> float:
    v = np.asarray(values, dtype=np.float64)
    return float(np.sqrt(np.mean(v * v)))


def afr(actions, norm: str = "l2") -> float:
    """Mean per-step action-difference norm.

    Raises:
        InsufficientDataError: fewer than two actions.
    """
    a = _as_matrix(actions)
    if a.shape[0] < 2:
        raise InsufficientDataError("AFR needs at least two actions")
    diffs = np.diff(a, axis=0)
    if norm == "l1":
        return float(np.mean(np.sum(np.abs(diffs), axis=1)))
    if norm == "l2":
        return float(np.mean(np.linalg.norm(diffs, axis=1)))
    raise ParameterError(f"unknown norm '{norm}' (l1, l2)")


def smoothness(actions) -> float:
    """Mean squared per-step action difference."""
    a = _as_matrix(actions)
    if a.shape[0] < 2:
        raise InsufficientDataError("smoothness needs at least two actions")
    return float(np.mean(np.sum(np.diff(a, axis=0) ** 2, axis=1)))


def delta_and_jerk_stats(actions) -> tuple[float, float, float, float]:
    """(delta_max, delta_p95, jerk_rms, jerk_p95) over per-step norms.

    Raises:
        InsufficientDataError: fewer than three actions.
    """
    a = _as_matrix(actions)
    if a.shape[0] < 3:
        raise InsufficientDataError("jerk statistics need at least three actions")
    delta = np.diff(a, axis=0)
    jerk = np.diff(delta, axis=0)
    dn = np.linalg.norm(delta, axis=1)
    jn = np.linalg.norm(jerk, axis=1)
    return float(dn.max()), nearest_rank(dn, 95), _rms(jn), nearest_rank(jn, 95)


def active_window_stats(speeds, gaps, dt: float) -> ActiveWindowStats:
    """TTC and longitudinal comfort on steps with gap > 0.5 and speed > 0.5.

    Statistics with no active sample are None rather than zero.
    """
    if dt <= 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    v = np.asarray(speeds, dtype=np.float64)
    g = np.asarray(gaps, dtype=np.float64)
    if v.shape != g.shape:
        raise ParameterError("speeds and gaps must be aligned")
    active = (g > ACTIVE_GAP) & (v > ACTIVE_SPEED)
    if not active.any():
        return ActiveWindowStats(None, None, None, None)
    ttc = g[active] / v[active]
    acc = np.diff(v) / dt
    jerk = np.diff(acc) / dt
    acc_active = acc[active[1:]]
    jerk_active = jerk[active[2:]]
    return ActiveWindowStats(
        ttc_mean=float(ttc.mean()),
        ttc_min=float(ttc.min()),
        acc_rms=_rms(acc_active) if acc_active.size else None,
        jerk_rms=_rms(jerk_active) if jerk_active.size else None,
    )


# ---------------------------------------------------------------------------
# Episode reports
# ---------------------------------------------------------------------------


def _numeric_column(df: pd.DataFrame, col: str) -> np.ndarray:
    values = pd.to_numeric(df[col], errors="coerce")
    bad = np.flatnonzero(values.isna().to_numpy())
    if bad.size:
        raise LogParseError(f"column '{col}' is not numeric", row=int(bad[0]))
    return values.to_numpy(dtype=np.float64)


def _bool_column(df: pd.DataFrame, col: str) -> np.ndarray:
    mapping = {"true": True, "false": False, "1": True, "0": False}
    out = np.zeros(len(df), dtype=bool)
    for i, value in enumerate(df[col].tolist()):
        if isinstance(value, bool | np.bool_):
            out[i] = bool(value)
            continue
        key = str(value).strip().lower()
        if key not in mapping:
            raise LogParseError(f"column '{col}' holds '{value}', expected a boolean", row=i)
        out[i] = mapping[key]
    return out


def _or_zero(fn, *args) -> float:
    try:
        return fn(*args)
    except InsufficientDataError:
        return 0.0


def episode_report(log, dt: float = 1.0) -> MetricsReport:
    """Report for one complete episode log (DataFrame, row dicts or CSV path).

    Episodes too short for a difference statistic report it as 0.

    Raises:
        LogParseError: a missing column or a malformed row (row index attached).
    """
    if isinstance(log, str | Path):
        df = pd.read_csv(log)
    elif isinstance(log, pd.DataFrame):
        df = log.reset_index(drop=True)
    else:
        df = pd.DataFrame(list(log))
    if df.empty:
        raise LogParseError("empty episode log", row=0)
    executed_cols = sorted(
        (c for c in df.columns if str(c).startswith("executed_")),
        key=lambda c: int(c.split("_")[1]),
    )
    for col in ("reward", "done", "done_reason"):
        if col not in df.columns:
            raise LogParseError(f"missing column '{col}'", row=0)
    if not executed_cols:
        raise LogParseError("missing executed_* columns", row=0)

    actions = np.column_stack([_numeric_column(df, c) for c in executed_cols])
    rewards = _numeric_column(df, "reward")
    done = _bool_column(df, "done")
    reasons = df["done_reason"].astype(str).tolist()
    for i, reason in enumerate(reasons):
        if reason not in DONE_REASONS:
            raise LogParseError(f"unknown done_reason '{reason}'", row=i)
        if (reason == "none") == bool(done[i]):
            raise LogParseError("done flag disagrees with done_reason", row=i)
        if done[i] and i != len(reasons) - 1:
            raise LogParseError("done before the last row of the episode", row=i)
    final = reasons[-1]

    delta_max, delta_p95, jerk_rms, jerk_p95 = (
        delta_and_jerk_stats(actions) if actions.shape[0] >= 3 else (0.0, 0.0, 0.0, 0.0)
    )
    if actions.shape[0] == 2:
        dn = np.linalg.norm(np.diff(actions, axis=0), axis=1)
        delta_max = delta_p95 = float(dn[0])

    completion = 0.0
    if "path_completion" in df.columns:
        pc = pd.to_numeric(df["path_completion"], errors="coerce").to_numpy()
        completion = float(pc[-1]) if np.isfinite(pc[-1]) else 0.0

    report = MetricsReport(
        episode_return=float(rewards.sum()),
        length=int(len(df)),
        afr_l1=_or_zero(afr, actions, "l1"),
        afr_l2=_or_zero(afr, actions, "l2"),
        smoothness=_or_zero(smoothness, actions),
        jerk_rms=jerk_rms,
        jerk_p95=jerk_p95,
        delta_max=delta_max,
        delta_p95=delta_p95,
        success=final == "success",
        collision=final == "collision",
        boundary=final == "boundary",
        path_completion=completion,
    )

    if "gap" in df.columns and "speed" in df.columns:
        gaps = pd.to_numeric(df["gap"], errors="coerce").to_numpy(dtype=np.float64)
        if np.isfinite(gaps).all():
            speeds = _numeric_column(df, "speed")
            stats = active_window_stats(speeds, gaps, dt)
            report.ttc_mean_active = stats.ttc_mean
            report.ttc_min_active = stats.ttc_min
            report.acc_rms_active = stats.acc_rms
            report.jerk_rms_active = stats.jerk_rms
            acc = np.diff(speeds) / dt
            report.acc_rms = _rms(acc) if acc.size else None
            report.speed_jerk_rms = _rms(np.diff(acc) / dt) if acc.size > 1 else None
    return report


def reports_frame(reports: list[MetricsReport], extra: dict | None = None) -> pd.DataFrame:
    """One row per episode followed by `mean` and `std` (ddof=0) rows."""
    if not reports:
        raise InsufficientDataError("no episode reports to aggregate")
    df = pd.DataFrame([r.as_row() for r in reports], columns=REPORT_COLUMNS)
    df.insert(0, "row", [str(i) for i in range(len(df))])
    numeric = df[REPORT_COLUMNS].apply(pd.to_numeric, errors="coerce").astype(float)
    mean = numeric.mean(axis=0)
    std = numeric.std(axis=0, ddof=0)
    agg = pd.DataFrame([mean, std], columns=REPORT_COLUMNS)
    agg.insert(0, "row", ["mean", "std"])
    out = pd.concat([df, agg], ignore_index=True)
    if extra:
        for i, (key, value) in enumerate(extra.items()):
            out.insert(1 + i, key, value)
    return out


def summarize(reports: list[MetricsReport]) -> dict[str, float]:
    """Headline rates and means: SR, CR, BR, PC, return, AFR, smoothness, jerk."""
    if not reports:
        raise InsufficientDataError("no episode reports to summarize")
    df = pd.DataFrame([r.as_row() for r in reports], columns=REPORT_COLUMNS)
    out = {
        "episodes": len(reports),
        "success_rate": float(df["success"].mean()),
        "collision_rate": float(df["collision"].mean()),
        "boundary_rate": float(df["boundary"].mean()),
        "path_completion": float(df["path_completion"].mean()),
        "return": float(df["return"].mean()),
        "afr_l1": float(df["afr_l1"].mean()),
        "afr_l2": float(df["afr_l2"].mean()),
        "smoothness": float(df["smoothness"].mean()),
        "jerk_rms": float(df["jerk_rms"].mean()),
    }
    active = pd.to_numeric(df["jerk_rms_active"], errors="coerce")
    if active.notna().any():
        out["jerk_rms_active"] = float(active.mean())
        out["ttc_mean_active"] = float(pd.to_numeric(df["ttc_mean_active"], errors="coerce").mean())
    return out
