"""
Interaction/update loops and noise-free evaluation rollouts.

`dws_train` drives vanilla, dws and dws_eg runs: window-boundary reference
query, execution-window emission, env step, push to both stores, gated
critic update, regularized actor update, soft target updates. `chunk_train`
drives the explicit chunking baseline. Given (config, seed) every artifact is
reproducible byte for byte.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from agents.chunk import (
    ChunkAgentState,
    ChunkTransition,
    build_chunk_agent,
    chunk_return,
    chunk_select,
    chunk_train_step,
    execute_chunk,
)
from agents.td3 import AgentState, UpdateStats, build_agent, select_reference, train_step
from core.approximator import Network, forward
from core.execution_window import ExecutionProfile, WindowCache, execute_step, make_profile
from core.metrics import MetricsReport, episode_report, reports_frame, summarize
from data.checkpoints import save_checkpoint
from data.replay import ExperienceStore, ReplayStore, Transition
from data.trajectory_log import TrajectoryLog
from envs import make_env
from envs.base import ToyEnv
from envs.spec import EnvSpec
from utils.config import RunConfig
from utils.rng import RunStreams, stream
from utils.safety import CapabilityError, RunAbortedError, as_vector

logger = logging.getLogger(__name__)


@dataclass
class RunResult:
    seed: int
    algorithm: str
    episodes: int
    env_steps: int
    updates: int
    agent: AgentState
    final: dict[str, float] = field(default_factory=dict)
    frames: dict[str, pd.DataFrame] = field(default_factory=dict)
    artifacts: dict[str, str] = field(default_factory=dict)


def _step_env(env: ToyEnv, action, episode: int, t: int):
    try:
        return env.step(action)
    except Exception as e:
        raise RunAbortedError(f"{type(e).__name__}: {e}", episode, t) from e


def _update_row(
    episode: int, step: int, stats: UpdateStats, agent: AgentState, intervened: bool
) -> dict[str, Any]:
    actor = stats.actor
    return {
        "episode": episode,
        "step": step,
        "critic_loss1": stats.critic.loss1,
        "critic_loss2": stats.critic.loss2,
        "z_ratio": stats.critic.z_ratio,
        "actor_loss": actor.loss if actor else np.nan,
        "actor_base": actor.base if actor else np.nan,
        "smooth_mse": actor.smooth_mse if actor and actor.smooth_mse is not None else np.nan,
        "imitation": actor.imitation if actor and actor.imitation is not None else np.nan,
        "n_pairs": actor.n_pairs if actor else 0,
        "exploration_scale": agent.exploration_scale,
        "intervened": bool(intervened),
    }


def checkpoint_meta(
    config: RunConfig, agent: AgentState, seed: int, episode: int, obs_dim: int
) -> dict[str, Any]:
    chunk_h = agent.chunk_h if isinstance(agent, ChunkAgentState) else None
    dws = config.effective_dws()
    return {
        "algorithm": config.algorithm,
        "env": config.env.name,
        "env_spec": config.env.model_dump(mode="json"),
        "obs_dim": obs_dim,
        "action_dim": config.env.action_dim,
        "a_max": config.env.a_max,
        "profile": dws.profile,
        "h": dws.h if dws.execution_window else 1,
        "chunk_h": chunk_h,
        "seed": seed,
        "episode": episode,
    }


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def rollout_policy(
    actor: Network,
    spec: EnvSpec,
    env_seed: int,
    profile: ExecutionProfile | None = None,
    chunk_h: int | None = None,
    episode: int = 0,
) -> pd.DataFrame:
    """One noise-free episode; returns its trajectory log."""
    env = make_env(spec)
    log = TrajectoryLog(env.obs_dim, spec.action_dim)
    obs = env.reset(env_seed)
    t = 0

    def reference(s):
        return np.clip(spec.a_max * forward(actor, s), -spec.a_max, spec.a_max)

    if chunk_h is not None:
        done = False
        while not done:
            chunk = reference(obs).reshape(chunk_h, spec.action_dim)
            for a, res in zip(chunk, execute_chunk(env, chunk), strict=False):
                log.record(episode, t, obs, a, a, res.reward, res.done, res.done_reason, res.info)
                obs, t, done = res.observation, t + 1, res.done
        return log.frame()

    profile = profile or make_profile("zoh", 1)
    cache = WindowCache(spec.action_dim)
    while True:
        u = execute_step(cache, profile, reference, obs, spec.a_max)
        res = env.step(u)
        a_hat = cache.a_hat
        log.record(episode, t, obs, a_hat, u, res.reward, res.done, res.done_reason, res.info)
        obs, t = res.observation, t + 1
        if res.done:
            return log.frame()


def evaluate_actor(
    actor: Network,
    spec: EnvSpec,
    n_episodes: int,
    seed: int,
    profile: ExecutionProfile | None = None,
    chunk_h: int | None = None,
) -> tuple[list[MetricsReport], pd.DataFrame]:
    """Reports and trajectories of `n_episodes` deterministic rollouts.

    Env seeds come from the `eval` stream of `seed`, so two calls with the
    same arguments see the same episodes.
    """
    rng = stream(seed, "eval")
    env_seeds = rng.integers(0, 2**31 - 1, size=n_episodes)
    frames = [
        rollout_policy(actor, spec, int(s), profile, chunk_h, episode=i)
        for i, s in enumerate(env_seeds)
    ]
    reports = [episode_report(f, dt=spec.dt) for f in frames]
    return reports, pd.concat(frames, ignore_index=True)


# ---------------------------------------------------------------------------
# Shared bookkeeping
# ---------------------------------------------------------------------------


class _RunRecorder:
    """Collects per-run tables and writes them under `run_dir` when given."""

    def __init__(self, config: RunConfig, seed: int, run_dir: str | Path | None, obs_dim: int):
        self.config = config
        self.seed = seed
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.obs_dim = obs_dim
        self.trajectories = TrajectoryLog(obs_dim, config.env.action_dim)
        self.updates: list[dict[str, Any]] = []
        self.episodes: list[dict[str, Any]] = []
        self.evals: list[pd.DataFrame] = []
        self.artifacts: dict[str, str] = {}

    def evaluate(self, agent: AgentState, episode: int, profile, chunk_h) -> pd.DataFrame:
        reports, _ = evaluate_actor(
            agent.actor, self.config.env, self.config.eval_episodes, self.seed, profile, chunk_h
        )
        return reports_frame(reports, extra={"train_episode": episode})

    def end_episode(self, agent: AgentState, episode: int, row: dict[str, Any], profile, chunk_h):
        self.episodes.append(row)
        logger.info("episode_done", extra=row)
        done_count = episode + 1
        cfg = self.config
        if cfg.eval_every and done_count % cfg.eval_every == 0:
            self.evals.append(self.evaluate(agent, done_count, profile, chunk_h))
        checkpoint_due = cfg.checkpoint_every and done_count % cfg.checkpoint_every == 0
        if self.run_dir is not None and checkpoint_due:
            name = f"ep_{done_count:04d}"
            save_checkpoint(
                self.run_dir / "checkpoints" / name,
                agent.networks(),
                checkpoint_meta(cfg, agent, self.seed, done_count, self.obs_dim),
            )

    def tables(self) -> dict[str, pd.DataFrame]:
        frames = {
            "train_log": pd.DataFrame(self.updates),
            "train_episodes": pd.DataFrame(self.episodes),
            "trajectories": self.trajectories.frame(),
        }
        if self.evals:
            frames["eval"] = pd.concat(self.evals, ignore_index=True)
        return frames

    def write_tables(self, frames: dict[str, pd.DataFrame]) -> None:
        if self.run_dir is None:
            return
        self.run_dir.mkdir(parents=True, exist_ok=True)
        for name, frame in frames.items():
            if name == "trajectories" and not self.config.write_trajectories:
                continue
            path = self.run_dir / f"{name}.csv"
            frame.to_csv(path, index=False, encoding="utf-8")
            self.artifacts[name] = path.name

    def write_partial(self) -> None:
        """Flush what an aborted run has logged so far."""
        self.write_tables(self.tables())
        if self.run_dir is not None:
            logger.warning(f"Run aborted; partial tables written to {self.run_dir.name}")

    def finish(self, agent: AgentState, env_steps: int, profile, chunk_h) -> RunResult:
        cfg = self.config
        reports, _ = evaluate_actor(
            agent.actor, cfg.env, cfg.eval_episodes, self.seed, profile, chunk_h
        )
        frames = {**self.tables(), "final_eval": reports_frame(reports)}
        self.write_tables(frames)
        if self.run_dir is not None:
            final_dir = self.run_dir / "checkpoints" / "final"
            save_checkpoint(
                final_dir,
                agent.networks(),
                checkpoint_meta(cfg, agent, self.seed, len(self.episodes), self.obs_dim),
            )
            self.artifacts["checkpoint"] = str(final_dir.relative_to(self.run_dir))
        return RunResult(
            seed=self.seed,
            algorithm=cfg.algorithm,
            episodes=len(self.episodes),
            env_steps=env_steps,
            updates=len(self.updates),
            agent=agent,
            final=summarize(reports),
            frames=frames,
            artifacts=dict(self.artifacts),
        )


# ---------------------------------------------------------------------------
# Training loops
# ---------------------------------------------------------------------------


def dws_train(config: RunConfig, seed: int, run_dir: str | Path | None = None) -> RunResult:
    """Train one seed of a vanilla, dws or dws_eg configuration.

    Raises:
        CapabilityError: dws_eg on an environment without a scripted expert.
        RunAbortedError: the environment failed mid-run.
    """
    if config.algorithm == "action_chunk":
        return chunk_train(config, seed, run_dir)

    spec = config.env
    dws = config.effective_dws()
    env = make_env(spec)
    expert_guided = config.algorithm == "dws_eg"
    if expert_guided and not env.has_expert:
        raise CapabilityError(f"dws_eg needs a scripted expert; '{spec.name}' has none")

    streams = RunStreams(seed)
    agent = build_agent(
        env.obs_dim, spec.action_dim, spec.a_max, config.hyper, dws, config.network, streams.init
    )
    profile = make_profile(dws.profile, dws.h if dws.execution_window else 1)
    store = ExperienceStore(config.hyper.replay_capacity, dws.window_capacity)
    cache = WindowCache(spec.action_dim)
    rec = _RunRecorder(config, seed, run_dir, env.obs_dim)
    logger.info(
        "run_started",
        extra={"algorithm": config.algorithm, "env": spec.name, "seed": seed, "h": profile.h},
    )

    def provider(s):
        return select_reference(agent, s, True, streams.exploration)

    env_steps = 0
    try:
        for ep in range(config.episodes):
            obs = env.reset(streams.next_env_seed())
            cache.reset()
            queries_before = cache.queries
            ep_return, interventions, t = 0.0, 0, 0
            done = False
            while not done:
                a_expert, intervene = None, False
                if expert_guided:
                    a_expert, intervene = env.expert_action()
                    intervene = intervene or dws.force_intervention
                if intervene:
                    u = as_vector(a_expert, spec.action_dim, "expert action")
                    reference = u
                    cache.reset()
                    interventions += 1
                else:
                    u = execute_step(cache, profile, provider, obs, spec.a_max)
                    reference = cache.a_hat
                res = _step_env(env, u, ep, t)
                store.push(
                    Transition(
                        s=obs,
                        u=u,
                        r=res.reward,
                        s_next=res.observation,
                        d=res.terminal,
                        episode_id=ep,
                        step_index=t,
                        expert_action=a_expert,
                        intervened=intervene,
                        done_reason=res.done_reason,
                    )
                )
                if config.write_trajectories:
                    rec.trajectories.record(
                        ep,
                        t,
                        obs,
                        reference,
                        u,
                        res.reward,
                        res.done,
                        res.done_reason,
                        res.info,
                        intervene,
                    )
                if len(store) >= config.warmup_steps:
                    stats = train_step(agent, store, streams, expert_guided)
                    rec.updates.append(_update_row(ep, env_steps, stats, agent, intervene))
                ep_return += res.reward
                obs, done = res.observation, res.done
                t += 1
                env_steps += 1

            row = {
                "episode": ep,
                "steps": t,
                "return": ep_return,
                "done_reason": res.done_reason,
                "queries": cache.queries - queries_before,
                "intervention_rate": interventions / t,
                "exploration_scale": agent.exploration_scale,
            }
            rec.end_episode(agent, ep, row, profile, None)
    except Exception:
        rec.write_partial()
        raise

    result = rec.finish(agent, env_steps, profile, None)
    logger.info("run_finished", extra={"seed": seed, **result.final})
    return result


def chunk_train(config: RunConfig, seed: int, run_dir: str | Path | None = None) -> RunResult:
    """Train the explicit chunking baseline; chunk length is `dws.h`.

    One update follows every executed env step, matching the update budget
    of the windowed learner.
    """
    spec = config.env
    dws = config.effective_dws()
    env = make_env(spec)
    streams = RunStreams(seed)
    agent = build_chunk_agent(
        env.obs_dim,
        spec.action_dim,
        dws.h,
        spec.a_max,
        config.hyper,
        dws,
        config.network,
        streams.init,
    )
    store = ReplayStore(config.hyper.replay_capacity)
    rec = _RunRecorder(config, seed, run_dir, env.obs_dim)
    logger.info(
        "run_started",
        extra={"algorithm": config.algorithm, "env": spec.name, "seed": seed, "h": dws.h},
    )

    env_steps = 0
    try:
        for ep in range(config.episodes):
            obs = env.reset(streams.next_env_seed())
            ep_return, t, decisions = 0.0, 0, 0
            done = False
            while not done:
                chunk = chunk_select(agent, obs, True, streams.exploration)
                decisions += 1
                start_obs, start_t = obs, t
                rewards = []
                for a in chunk:
                    res = _step_env(env, a, ep, t)
                    rewards.append(res.reward)
                    if config.write_trajectories:
                        rec.trajectories.record(
                            ep, t, obs, a, a, res.reward, res.done, res.done_reason, res.info
                        )
                    obs, done = res.observation, res.done
                    t += 1
                    env_steps += 1
                    if done:
                        break
                store.push(
                    ChunkTransition(
                        s=start_obs,
                        chunk=chunk.reshape(-1),
                        R=chunk_return(rewards, config.hyper.gamma),
                        L=len(rewards),
                        d=res.terminal,
                        s_next=obs,
                        episode_id=ep,
                        step_index=start_t,
                    )
                )
                ep_return += float(np.sum(rewards))
                if len(store) >= config.warmup_steps:
                    for _ in rewards:
                        stats = chunk_train_step(agent, store, streams)
                        rec.updates.append(_update_row(ep, env_steps, stats, agent, False))

            row = {
                "episode": ep,
                "steps": t,
                "return": ep_return,
                "done_reason": res.done_reason,
                "queries": decisions,
                "intervention_rate": 0.0,
                "exploration_scale": agent.exploration_scale,
            }
            rec.end_episode(agent, ep, row, None, agent.chunk_h)
    except Exception:
        rec.write_partial()
        raise

    result = rec.finish(agent, env_steps, None, agent.chunk_h)
    logger.info("run_finished", extra={"seed": seed, **result.final})
    return result
