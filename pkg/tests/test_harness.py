import json
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest

import cli
from agents.trainer import evaluate_actor
from core.approximator import NetworkSpec, zeros
from data.checkpoints import save_checkpoint
from envs import default_spec
from tools.ablate import ABLATION_VARIANTS, cmd_ablate, variant_config
from tools.evaluate import cmd_eval, resolve_env
from tools.oracle_suite import cmd_oracle_test
from tools.sweep import cmd_sweep, parse_grid, spearman_trend
from tools.train import aggregate_finals, cmd_train, resolve_workers
from utils.config import build_config
from utils.safety import ParameterError


def tiny_config(tmp_path, overrides: dict | None = None):
    base = {
        "env.name": "double_integrator_reach",
        "env.horizon": 20,
        "hyper.batch_size": 8,
        "network.hidden_widths": "8",
        "seeds": "0",
        "episodes": 1,
        "eval_every": 0,
        "eval_episodes": 2,
        "checkpoint_every": 0,
        "output_dir": str(tmp_path),
    }
    return build_config(base, overrides or {})


def fake_cell(calls):
    """run_cell stand-in: AFR falls as the cell index grows."""

    def run_cell(config, label, workers=None, **fields):
        calls.append((config, label, fields))
        return {**fields, "n_seeds": 1, "n_failed": 0, "afr_l2_mean": 1.0 / len(calls)}

    return run_cell


def _zero_checkpoint(directory, env="emergency_brake"):
    actor = zeros(NetworkSpec((3, 8, 1), "relu", "tanh"))
    meta = {"env": env, "obs_dim": 3, "action_dim": 1, "profile": "zoh", "h": 3, "chunk_h": None}
    return save_checkpoint(directory, {"actor": actor}, meta)


# --- Tests for cmd_train ---


def test_cmd_train_writes_manifest_and_tables(tmp_path):
    """A complete run records its status, artifacts and final figures."""
    result = cmd_train(tiny_config(tmp_path), label="smoke")
    assert "error" not in result
    run_dir = tmp_path / "smoke" / "seed_0"
    manifest = json.loads((run_dir / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert manifest["seed"] == 0
    assert manifest["artifacts"]["checkpoint"] == "checkpoints/final"
    assert (run_dir / "train_log.csv").is_file()
    assert "return_mean" in result["summary"]


def test_cmd_train_records_failure(tmp_path):
    """A crashing seed is reported in the result and its manifest."""
    with patch("tools.train.dws_train", side_effect=RuntimeError("diverged")):
        result = cmd_train(tiny_config(tmp_path), label="broken")
    assert "diverged" in result["error"]
    manifest = json.loads((tmp_path / "broken" / "seed_0" / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert "diverged" in manifest["error"]


def test_cmd_train_failure_lists_partial_tables(tmp_path):
    """Tables flushed before a crash are named in the failed manifest."""

    def crash(config, seed, run_dir):
        (run_dir / "train_log.csv").write_text("episode,step\n0,0\n")
        raise RuntimeError("diverged")

    with patch("tools.train.dws_train", side_effect=crash):
        cmd_train(tiny_config(tmp_path), label="broken")
    manifest = json.loads((tmp_path / "broken" / "seed_0" / "manifest.json").read_text())
    assert manifest["status"] == "failed"
    assert manifest["artifacts"] == {"train_log": "train_log.csv"}


def test_resolve_workers(monkeypatch):
    """Explicit workers win; the env var is the fallback; junk means one."""
    monkeypatch.setenv("DWS_WORKERS", "4")
    assert resolve_workers(None) == 4
    assert resolve_workers(2) == 2
    monkeypatch.setenv("DWS_WORKERS", "many")
    assert resolve_workers(None) == 1


def test_aggregate_finals_population_std():
    """Seed aggregates use ddof = 0 and skip failed seeds."""
    runs = [
        {"status": "complete", "final": {"return": 1.0}},
        {"status": "complete", "final": {"return": 3.0}},
        {"status": "failed", "error": "x"},
    ]
    assert aggregate_finals(runs) == {"return_mean": 2.0, "return_std": 1.0}


# --- Tests for cmd_eval ---


def test_cmd_eval_brake_table(tmp_path):
    """Twenty episodes give 22 rows, including active-window TTC."""
    ckpt = _zero_checkpoint(tmp_path / "ckpt")
    result = cmd_eval(ckpt, n_episodes=20, seed=0)
    assert "error" not in result
    df = pd.read_csv(result["csv"])
    assert len(df) == 22
    assert list(df["row"].iloc[-2:]) == ["mean", "std"]
    assert df["ttc_mean_active"].notna().all()
    assert (df["afr_l2"] == 0.0).all()


def test_cmd_eval_is_deterministic(tmp_path):
    """Repeating an evaluation writes identical bytes."""
    ckpt = _zero_checkpoint(tmp_path / "ckpt", env="narrow_corridor")
    a = cmd_eval(ckpt, n_episodes=3, seed=1, out=tmp_path / "a.csv")
    b = cmd_eval(ckpt, n_episodes=3, seed=1, out=tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert a["summary"] == b["summary"]


def test_cmd_eval_incompatible_env(tmp_path):
    """A checkpoint evaluated on mismatched action dimensions is refused."""
    ckpt = _zero_checkpoint(tmp_path / "ckpt")
    spec = default_spec("double_integrator_reach", action_dim=2)
    result = cmd_eval(ckpt, env=spec, n_episodes=2)
    assert "does not match" in result["error"]


def test_resolve_env_prefers_stored_spec():
    """The stored env spec wins unless another env is named."""
    stored = default_spec("narrow_corridor", half_width=0.3).model_dump(mode="json")
    meta = {"env": "narrow_corridor", "env_spec": stored}
    assert resolve_env(None, meta).half_width == 0.3
    assert resolve_env("narrow_corridor", meta).half_width == 0.3
    assert resolve_env("emergency_brake", meta) == default_spec("emergency_brake")
    assert resolve_env(None, {"env": "narrow_corridor"}).half_width == 0.5


def test_cmd_eval_uses_trained_env_parameters(tmp_path):
    """A narrowed-corridor checkpoint is evaluated in the same narrowed corridor."""
    config = tiny_config(
        tmp_path, {"env.name": "narrow_corridor", "env.half_width": 0.3, "env.horizon": 20}
    )
    result = cmd_train(config, label="narrow")
    assert "error" not in result
    ckpt = tmp_path / "narrow" / "seed_0" / "checkpoints" / "final"
    with patch("tools.evaluate.evaluate_actor", wraps=evaluate_actor) as spy:
        evaluated = cmd_eval(ckpt, n_episodes=2)
    assert "error" not in evaluated
    spec = spy.call_args.args[1]
    assert spec.half_width == 0.3
    assert spec.horizon == 20


def test_cmd_eval_missing_checkpoint(tmp_path):
    """A directory without metadata comes back as an error dict."""
    result = cmd_eval(tmp_path / "nothing")
    assert result["error"].startswith("eval failed")


# --- Tests for cmd_sweep ---


def test_sweep_h_axis(tmp_path):
    """Each grid value becomes one cell with the override applied."""
    calls = []
    with patch("tools.sweep.run_cell", side_effect=fake_cell(calls)):
        result = cmd_sweep(tiny_config(tmp_path), "h")
    assert result["cells"] == 5
    assert [c[0].dws.h for c in calls] == [1, 2, 3, 4, 5]
    assert calls[2][1] == "sweep_h/h_3"
    assert result["spearman_afr"] == pytest.approx(-1.0)
    assert (tmp_path / "sweep_h.csv").is_file()


def test_sweep_profile_axis_has_no_trend(tmp_path):
    """The categorical profile axis reports no correlation."""
    calls = []
    with patch("tools.sweep.run_cell", side_effect=fake_cell(calls)):
        result = cmd_sweep(tiny_config(tmp_path), "profile")
    assert [c[0].dws.profile for c in calls] == ["zoh", "dissipative_linear"]
    assert result["spearman_afr"] is None


def test_sweep_half_width_needs_corridor(tmp_path):
    """half_width is refused for tasks without a corridor."""
    result = cmd_sweep(tiny_config(tmp_path), "half_width")
    assert "narrow_corridor" in result["error"]


def test_parse_grid():
    """Grids are typed per axis and unknown axes are rejected."""
    assert parse_grid("h", "2,4") == [2, 4]
    assert parse_grid("lambda_s", None)[2] == 0.10
    with pytest.raises(ParameterError):
        parse_grid("gamma", "0.9")
    with pytest.raises(ParameterError):
        parse_grid("h", "two")


def test_spearman_trend_undefined_for_flat_afr():
    """A constant AFR column has no rank correlation."""
    assert spearman_trend([1, 2, 3], [0.5, 0.5, 0.5]) is None
    assert spearman_trend([1, 2, 3], [0.1, 0.2, 0.3]) == pytest.approx(1.0)


# --- Tests for cmd_ablate ---


def test_ablation_variants(tmp_path):
    """Six variants with their component flags applied."""
    calls = []
    with patch("tools.ablate.run_cell", side_effect=fake_cell(calls)):
        result = cmd_ablate(tiny_config(tmp_path))
    assert result["variants"] == 6
    for call, (name, flags) in zip(calls, ABLATION_VARIANTS.items(), strict=True):
        config, label, fields = call
        assert label == f"ablation/{name}"
        dws = config.dws
        assert (dws.execution_window, dws.value_window, dws.smooth_reg) == flags
        assert fields["variant"] == name
    assert (tmp_path / "ablation.csv").is_file()


def test_backbone_variant_matches_vanilla(tmp_path):
    """With every component off the ablation backbone trains like vanilla."""
    from agents.trainer import dws_train

    base = tiny_config(tmp_path, {"episodes": 2})
    backbone = dws_train(variant_config(base, "backbone"), seed=0)
    vanilla = dws_train(build_config(base.model_dump(mode="json"), {"algorithm": "vanilla"}), 0)
    np.testing.assert_array_equal(backbone.agent.actor.params, vanilla.agent.actor.params)
    np.testing.assert_array_equal(backbone.agent.critic1.params, vanilla.agent.critic1.params)


# --- Tests for cmd_oracle_test ---


def test_oracle_suite_table(tmp_path):
    """The suite checks every augmented key of both profiles."""
    out = tmp_path / "oracle.csv"
    result = cmd_oracle_test(n_per_key=500, seed=0, out=out)
    assert result["keys"] == 96
    df = pd.read_csv(out)
    assert set(df["profile"]) == {"zoh", "dissipative_linear"}
    assert set(df["h"]) == {1, 2, 3}


def test_oracle_suite_bad_model(tmp_path):
    """An unreadable model file comes back as an error dict."""
    path = tmp_path / "bad.mdp"
    path.write_text("states 2\nwarp 9\n")
    assert "unknown directive" in cmd_oracle_test(mdp_path=path, n_per_key=10)["error"]


# --- Tests for the command line ---


def test_cli_flags_resolve_config(tmp_path):
    """Named flags map onto dotted config keys."""
    args = cli.build_parser().parse_args(
        [
            "train", "--env", "emergency_brake", "--window-h", "5", "--lambda-s", "0.3",
            "--profile", "decay", "--seeds", "1,2", "--out", str(tmp_path),
            "--set", "hyper.gamma=0.95",
        ]
    )
    config = cli.resolve_config(args)
    assert config.env.name == "emergency_brake"
    assert config.dws.h == 5
    assert config.dws.lambda_s == 0.3
    assert config.dws.profile == "dissipative_linear"
    assert config.seeds == [1, 2]
    assert config.hyper.gamma == 0.95
    assert config.output_dir == str(tmp_path)


def test_cli_invalid_config_exits_nonzero(tmp_path, capsys):
    """A config error prints an error object and returns 1."""
    code = cli.main(["train", "--episodes", "0", "--out", str(tmp_path)])
    assert code == 1
    assert "episodes" in json.loads(capsys.readouterr().out)["error"]


def test_cli_unknown_command():
    """Dispatching an unknown command raises ValueError."""
    with pytest.raises(ValueError, match="Command not found"):
        cli.execute_command("deploy", None)


def test_cli_train_from_manifest(tmp_path):
    """--manifest re-runs the recorded seed with the recorded config."""
    cmd_train(tiny_config(tmp_path), label="first")
    manifest = tmp_path / "first" / "seed_0" / "manifest.json"
    with patch("cli.cmd_train", return_value={"ok": True}) as fake:
        code = cli.main(["train", "--manifest", str(manifest), "--set", "episodes=2"])
    assert code == 0
    config = fake.call_args.args[0]
    assert config.seeds == [0]
    assert config.episodes == 2
    assert config.env.horizon == 20
