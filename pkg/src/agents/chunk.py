"""
Explicit action chunking baseline.

The actor emits a whole h-step sequence (h * d outputs) at each chunk
boundary, which is executed open-loop until it runs out or the episode ends.
The critic scores (s, chunk) pairs and regresses to

    R + gamma^L * (1 - d) * Q'(s_{t+L}, next chunk)

where L <= h is the number of steps actually executed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from agents.td3 import (
    ActorStats,
    AgentState,
    CriticStats,
    UpdateStats,
    actor_update,
    apply_critic_targets,
    bootstrap_values,
    build_agent,
    select_reference,
    soft_update_targets,
)
from data.replay import ReplayStore
from envs.base import StepResult, ToyEnv
from utils.config import DWSSettings, HyperParams, NetworkSettings
from utils.rng import RunStreams
from utils.safety import AvailabilityError, ParameterError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ChunkTransition:
    s: np.ndarray
    chunk: np.ndarray
    R: float
    L: int
    d: bool
    s_next: np.ndarray
    episode_id: int
    step_index: int


@dataclass
class ChunkAgentState(AgentState):
    """AgentState whose actor emits `chunk_h * step_dim` outputs."""

    chunk_h: int = 1
    step_dim: int = 1


def build_chunk_agent(
    obs_dim: int,
    step_dim: int,
    chunk_h: int,
    a_max: float,
    hyper: HyperParams,
    dws: DWSSettings,
    network: NetworkSettings,
    rng: np.random.Generator,
) -> ChunkAgentState:
    if chunk_h < 1:
        raise ParameterError(f"chunk length must be >= 1, got {chunk_h}")
    base = build_agent(obs_dim, chunk_h * step_dim, a_max, hyper, dws, network, rng)
    return ChunkAgentState(**vars(base), chunk_h=chunk_h, step_dim=step_dim)


def chunk_select(
    agent: ChunkAgentState, s, explore: bool = False, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Action sequence of shape (chunk_h, step_dim) for observation `s`."""
    flat = select_reference(agent, s, explore, rng)
    return flat.reshape(agent.chunk_h, agent.step_dim)


def execute_chunk(env: ToyEnv, chunk: np.ndarray) -> list[StepResult]:
    """Run the sequence open-loop; stops early when the episode ends."""
    chunk = np.atleast_2d(np.asarray(chunk, dtype=np.float64))
    results: list[StepResult] = []
    for action in chunk:
        res = env.step(action)
        results.append(res)
        if res.done:
            break
    return results


def chunk_return(rewards, gamma: float) -> float:
    acc = 0.0
    for k, r in enumerate(np.asarray(rewards, dtype=np.float64)):
        acc += gamma**k * r
    return float(acc)


def chunk_target(R, L, d, q_next, gamma: float) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    L = np.asarray(L, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    return R + gamma**L * (1.0 - d) * np.asarray(q_next, dtype=np.float64)


def chunk_critic_update(
    agent: ChunkAgentState, rows: list[ChunkTransition], rng: np.random.Generator
) -> CriticStats:
    if not rows:
        raise AvailabilityError("chunk critic update needs a non-empty batch")
    flat = agent.chunk_h * agent.step_dim
    states = np.stack([t.s for t in rows])
    chunks = np.stack([np.asarray(t.chunk, dtype=np.float64).reshape(-1) for t in rows])
    if chunks.shape[1] != agent.action_dim:
        raise ShapeError(f"chunks have {chunks.shape[1]} components, critic expects {flat}")
    q_next = bootstrap_values(agent, np.stack([t.s_next for t in rows]), rng)
    targets = chunk_target(
        [t.R for t in rows], [t.L for t in rows], [t.d for t in rows], q_next, agent.hyper.gamma
    )
    loss1, loss2 = apply_critic_targets(agent, states, chunks, targets)
    return CriticStats(loss1, loss2, 0.0, len(rows))


def chunk_train_step(
    agent: ChunkAgentState, store: ReplayStore, streams: RunStreams
) -> UpdateStats:
    rows = store.sample_uniform(agent.hyper.batch_size, streams.replay_sampling)
    stats = UpdateStats(critic=chunk_critic_update(agent, rows, streams.target_noise))
    if agent.critic_updates % agent.hyper.policy_update_frequency == 0:
        actor: ActorStats = actor_update(agent, np.stack([t.s for t in rows]), None, 0.0)
        stats.actor = actor
        soft_update_targets(agent)
    return stats
