from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

from agents.trainer import chunk_train, dws_train, evaluate_actor
from core.approximator import NetworkSpec, zeros
from envs import default_spec, expert_action
from envs.integrator import DoubleIntegratorReach
from utils.config import build_config
from utils.safety import CapabilityError, RunAbortedError


def tiny_config(overrides: dict | None = None):
    """Small integrator run that trains within a second or two."""
    base = {
        "algorithm": "dws",
        "env.name": "double_integrator_reach",
        "env.horizon": 40,
        "hyper.batch_size": 16,
        "network.hidden_widths": "16,16",
        "seeds": "0",
        "episodes": 2,
        "eval_every": 0,
        "eval_episodes": 1,
        "checkpoint_every": 0,
    }
    return build_config(base, overrides or {})


# --- Tests for dws_train ---


def test_reduced_dws_matches_vanilla_bitwise():
    """dws with h=1, lambda_s=0 and no value window is the vanilla backbone."""
    overrides = {"env.horizon": 200, "episodes": 6, "hyper.batch_size": 32}
    vanilla = dws_train(tiny_config({**overrides, "algorithm": "vanilla"}), seed=0)
    reduced = dws_train(
        tiny_config({**overrides, "dws.h": 1, "dws.lambda_s": 0.0, "dws.value_window": False}),
        seed=0,
    )
    assert vanilla.updates >= 1000
    for name, net in vanilla.agent.networks().items():
        np.testing.assert_array_equal(net.params, reduced.agent.networks()[name].params)
    assert vanilla.frames["train_log"].equals(reduced.frames["train_log"])


def test_zoh_window_holds_each_reference_for_h_steps():
    """Executed actions change only at window boundaries."""
    config = tiny_config({"env.horizon": 200, "episodes": 1, "warmup": 1_000_000})
    result = dws_train(config, seed=1)
    executed = result.frames["trajectories"]["executed_0"].to_numpy()
    assert len(executed) == 200
    for t in range(200):
        assert executed[t] == executed[3 * (t // 3)]
    assert result.frames["train_episodes"].loc[0, "queries"] == 67
    assert result.updates == 0


def test_query_counts_are_per_episode():
    """Each episode logs its own ceil(T / h) queries, not a running total."""
    config = tiny_config({"env.horizon": 30, "episodes": 3, "warmup": 1_000_000})
    result = dws_train(config, seed=0)
    assert list(result.frames["train_episodes"]["queries"]) == [10, 10, 10]


def test_forced_intervention_executes_expert():
    """Under forced intervention every executed action is the expert's."""
    config = tiny_config(
        {
            "algorithm": "dws_eg",
            "env.name": "narrow_corridor",
            "env.horizon": 60,
            "episodes": 1,
            "dws.force_intervention": True,
        }
    )
    result = dws_train(config, seed=0)
    traj = result.frames["trajectories"]
    spec = config.env
    for _, row in traj.iterrows():
        a, _ = expert_action(spec, np.array([row["obs_0"], row["obs_1"], 0.0]))
        assert row["executed_0"] == a[0]
        assert row["intervened"]
    assert result.agent.exploration_queries == 0
    assert result.frames["train_log"]["imitation"].notna().all()


def test_expert_guided_needs_expert():
    """dws_eg on the reach task raises CapabilityError."""
    with pytest.raises(CapabilityError):
        dws_train(tiny_config({"algorithm": "dws_eg"}), seed=0)


def test_env_failure_aborts_with_position():
    """An environment exception stops the run and names episode and step."""
    side_effect = [(0.0, "none")] * 4 + [ValueError("sensor dropout")]
    with patch.object(DoubleIntegratorReach, "_advance", side_effect=side_effect):
        with pytest.raises(RunAbortedError) as exc:
            dws_train(tiny_config(), seed=0)
    assert exc.value.episode == 0
    assert exc.value.step == 4
    assert "sensor dropout" in str(exc.value)


def test_aborted_run_keeps_partial_tables(tmp_path):
    """An env failure in episode 1 still leaves the logs of episode 0 on disk."""
    side_effect = [(0.0, "none")] * 45 + [ValueError("sensor dropout")]
    with patch.object(DoubleIntegratorReach, "_advance", side_effect=side_effect):
        with pytest.raises(RunAbortedError):
            dws_train(tiny_config(), seed=0, run_dir=tmp_path)
    episodes = pd.read_csv(tmp_path / "train_episodes.csv")
    assert list(episodes["episode"]) == [0]
    assert len(pd.read_csv(tmp_path / "train_log.csv")) > 0
    traj = pd.read_csv(tmp_path / "trajectories.csv")
    assert len(traj) == 45
    assert not (tmp_path / "final_eval.csv").exists()


def test_run_is_reproducible(tmp_path):
    """Same config and seed write byte-identical logs."""
    config = tiny_config()
    dws_train(config, seed=3, run_dir=tmp_path / "a")
    dws_train(config, seed=3, run_dir=tmp_path / "b")
    for name in ("train_log.csv", "trajectories.csv", "final_eval.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_dir_artifacts(tmp_path):
    """A run directory receives the CSV tables and a final checkpoint."""
    config = tiny_config({"eval_every": 1, "checkpoint_every": 1})
    result = dws_train(config, seed=0, run_dir=tmp_path)
    for name in ("train_log", "train_episodes", "final_eval", "trajectories", "eval"):
        assert (tmp_path / f"{name}.csv").is_file()
    assert result.artifacts["checkpoint"] == "checkpoints/final"
    assert (tmp_path / "checkpoints" / "final" / "meta.json").is_file()
    assert (tmp_path / "checkpoints" / "ep_0002" / "actor.bin").is_file()


def test_trajectories_can_be_skipped(tmp_path):
    """write_trajectories = false leaves the trajectory CSV out."""
    dws_train(tiny_config({"write_trajectories": False}), seed=0, run_dir=tmp_path)
    assert not (tmp_path / "trajectories.csv").exists()


# --- Tests for chunk_train ---


def test_chunk_train_runs_open_loop_chunks():
    """The chunking baseline decides once per chunk and updates per step."""
    config = tiny_config({"algorithm": "action_chunk", "env.horizon": 30, "hyper.batch_size": 4})
    result = chunk_train(config, seed=0)
    assert result.env_steps == 60
    assert list(result.frames["train_episodes"]["queries"]) == [10, 10]
    assert result.updates > 0
    assert result.agent.actor.spec.output_dim == 3


def test_dws_train_delegates_chunking():
    """dws_train routes action_chunk configs to the chunk loop."""
    config = tiny_config({"algorithm": "action_chunk", "env.horizon": 30})
    assert dws_train(config, seed=0).agent.chunk_h == 3


# --- Tests for evaluate_actor ---


def test_zero_policy_on_brake():
    """A never-braking policy collides, with zero fluctuation and active TTC."""
    actor = zeros(NetworkSpec((3, 8, 1), "relu", "tanh"))
    reports, frame = evaluate_actor(actor, default_spec("emergency_brake"), 2, seed=0)
    assert all(r.collision for r in reports)
    assert all(r.afr_l2 == 0.0 for r in reports)
    assert reports[0].ttc_mean_active is not None
    assert reports[0].length == 40
    assert (frame["executed_0"] == 0.0).all()


def test_evaluation_is_deterministic():
    """Two evaluations with the same seed agree exactly."""
    actor = zeros(NetworkSpec((3, 8, 1), "relu", "tanh"))
    spec = default_spec("double_integrator_reach", horizon=20)
    _, a = evaluate_actor(actor, spec, 3, seed=5)
    _, b = evaluate_actor(actor, spec, 3, seed=5)
    assert a.equals(b)
