"""
Desk-scale training experiments on the toy tasks.

These train real agents for minutes and are deselected by default; run them
with `pytest -m slow` (set DWS_WORKERS to train seeds in parallel).
"""

import numpy as np
import pytest

from envs import default_spec, make_env
from tools.ablate import ABLATION_VARIANTS, cmd_ablate
from tools.sweep import cmd_sweep
from tools.train import cmd_train
from utils.config import build_config

pytestmark = pytest.mark.slow

SEEDS = "0,1,2,3,4"


def experiment_config(tmp_path, overrides: dict):
    base = {
        "seeds": SEEDS,
        "eval_every": 0,
        "eval_episodes": 10,
        "checkpoint_every": 0,
        "write_trajectories": False,
        "output_dir": str(tmp_path),
    }
    return build_config(base, overrides)


def _summary(result: dict) -> dict:
    assert "error" not in result, result.get("error")
    return result["summary"]


def _random_policy_return(spec, episodes: int = 20) -> float:
    rng = np.random.default_rng(0)
    env = make_env(spec)
    returns = []
    for ep in range(episodes):
        env.reset(ep)
        total, done = 0.0, False
        while not done:
            res = env.step(rng.uniform(-spec.a_max, spec.a_max, size=spec.action_dim))
            total, done = total + res.reward, res.done
        returns.append(total)
    return float(np.mean(returns))


def test_lambda_sweep_lowers_fluctuation(tmp_path):
    """Mean AFR at the largest regularizer weight undercuts the unregularized cell."""
    config = experiment_config(
        tmp_path, {"env.name": "double_integrator_reach", "episodes": 30}
    )
    result = cmd_sweep(config, "lambda_s")
    assert "error" not in result, result.get("error")
    afr = [row["afr_l2_mean"] for row in result["table"]]
    assert afr[-1] < afr[0]
    assert result["spearman_afr"] < 0


def test_corridor_smoothness_with_success(tmp_path):
    """Windowed training succeeds more often and fluctuates far less than vanilla."""
    overrides = {"env.name": "narrow_corridor", "episodes": 60}
    dws = _summary(cmd_train(experiment_config(tmp_path, {**overrides, "algorithm": "dws"})))
    vanilla = _summary(
        cmd_train(experiment_config(tmp_path, {**overrides, "algorithm": "vanilla"}))
    )
    assert dws["success_rate_mean"] >= vanilla["success_rate_mean"] + 0.2
    assert dws["afr_l2_mean"] <= 0.5 * vanilla["afr_l2_mean"]


def test_brake_profiles_are_safe_and_smoother(tmp_path):
    """Both profiles avoid collisions and cut active-window jerk versus vanilla."""
    overrides = {"env.name": "emergency_brake", "episodes": 80}
    vanilla = _summary(
        cmd_train(experiment_config(tmp_path, {**overrides, "algorithm": "vanilla"}))
    )
    for profile in ("zoh", "decay"):
        cfg = experiment_config(tmp_path, {**overrides, "dws.profile": profile})
        summary = _summary(cmd_train(cfg, label=f"brake_{profile}"))
        assert summary["success_rate_mean"] == 1.0
        assert summary["collision_rate_mean"] == 0.0
        assert summary["jerk_rms_active_mean"] <= 0.7 * vanilla["jerk_rms_active_mean"]


def test_chunk_baseline_beats_random(tmp_path):
    """The chunking baseline learns past a uniformly random policy."""
    cfg = experiment_config(
        tmp_path,
        {"algorithm": "action_chunk", "env.name": "double_integrator_reach", "episodes": 40},
    )
    summary = _summary(cmd_train(cfg))
    assert summary["return_mean"] > _random_policy_return(default_spec("double_integrator_reach"))


def test_full_variant_is_smoothest(tmp_path):
    """All three components together give the lowest AFR of the six variants."""
    cfg = experiment_config(tmp_path, {"env.name": "narrow_corridor", "episodes": 60})
    result = cmd_ablate(cfg)
    assert "error" not in result, result.get("error")
    table = {row["variant"]: row for row in result["table"]}
    assert list(table) == list(ABLATION_VARIANTS)
    full = table["full"]["afr_l2_mean"]
    assert all(full <= row["afr_l2_mean"] for row in table.values())
