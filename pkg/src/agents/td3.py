"""
Twin-critic deterministic-policy backbone with the window-aware updates.

Critic batches mix one-step rows from the replay ring (gate z = 0) with
window heads from the window ring (z = 1); both regress Q(s_t, u_t) to the
gated target. The actor maximizes Q1 through the critic's input gradient,
optionally plus the adjacent-state smoothness term and the advantage-gated
imitation term of expert-guided training.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from core.approximator import (
    Network,
    NetworkSpec,
    OptimizerState,
    adam_step,
    backward,
    forward,
    forward_with_cache,
    init_network,
    init_optimizer,
    soft_update,
)
from core.value_window import (
    TargetConfig,
    bootstrap_action,
    gated_target,
    one_step_target,
    twin_min,
    windowed_returns,
    wsmbe_gradient,
    wsmbe_loss,
)
from data.replay import ExperienceStore, Transition, WindowSegment
from utils.config import DWSSettings, HyperParams, NetworkSettings
from utils.rng import RunStreams
from utils.safety import AvailabilityError, DataError, ShapeError

logger = logging.getLogger(__name__)


@dataclass
class AgentState:
    actor: Network
    critic1: Network
    critic2: Network
    actor_target: Network
    critic1_target: Network
    critic2_target: Network
    actor_opt: OptimizerState
    critic1_opt: OptimizerState
    critic2_opt: OptimizerState
    hyper: HyperParams
    dws: DWSSettings
    obs_dim: int
    action_dim: int
    a_max: float = 1.0
    exploration_queries: int = 0
    critic_updates: int = 0

    @property
    def exploration_scale(self) -> float:
        hp = self.hyper
        decayed = hp.exploration_initial * hp.exploration_decay**self.exploration_queries
        return max(hp.exploration_min, decayed)

    def target_config(self, h: int | None = None) -> TargetConfig:
        return TargetConfig(
            gamma=self.hyper.gamma,
            h=h if h is not None else self.dws.h,
            target_noise_sigma=self.hyper.policy_noise,
            noise_clip=self.hyper.noise_clip,
            a_max=self.a_max,
        )

    def networks(self) -> dict[str, Network]:
        return {
            "actor": self.actor,
            "critic1": self.critic1,
            "critic2": self.critic2,
            "actor_target": self.actor_target,
            "critic1_target": self.critic1_target,
            "critic2_target": self.critic2_target,
        }


@dataclass
class CriticStats:
    loss1: float
    loss2: float
    z_ratio: float
    batch: int


@dataclass
class ActorStats:
    loss: float
    base: float
    smooth_mse: float | None = None
    imitation: float | None = None
    n_pairs: int = 0


@dataclass
class UpdateStats:
    critic: CriticStats
    actor: ActorStats | None = None
    extra: dict = field(default_factory=dict)


def build_agent(
    obs_dim: int,
    action_dim: int,
    a_max: float,
    hyper: HyperParams,
    dws: DWSSettings,
    network: NetworkSettings,
    rng: np.random.Generator,
) -> AgentState:
    """Fresh actor and twin critics; targets start as exact copies."""
    hidden = tuple(network.hidden_widths)
    actor_spec = NetworkSpec((obs_dim, *hidden, action_dim), network.hidden_activation, "tanh")
    critic_spec = NetworkSpec(
        (obs_dim + action_dim, *hidden, 1), network.hidden_activation, "identity"
    )
    actor = init_network(actor_spec, rng)
    critic1 = init_network(critic_spec, rng)
    critic2 = init_network(critic_spec, rng)

    def opt(net: Network, lr: float) -> OptimizerState:
        return init_optimizer(net, lr, hyper.adam_beta1, hyper.adam_beta2, hyper.adam_eps)

    return AgentState(
        actor=actor,
        critic1=critic1,
        critic2=critic2,
        actor_target=actor.with_params(actor.params),
        critic1_target=critic1.with_params(critic1.params),
        critic2_target=critic2.with_params(critic2.params),
        actor_opt=opt(actor, hyper.lr_actor),
        critic1_opt=opt(critic1, hyper.lr_critic),
        critic2_opt=opt(critic2, hyper.lr_critic),
        hyper=hyper,
        dws=dws,
        obs_dim=obs_dim,
        action_dim=action_dim,
        a_max=a_max,
    )


# ---------------------------------------------------------------------------
# Acting
# ---------------------------------------------------------------------------


def policy_action(agent: AgentState, s) -> np.ndarray:
    return agent.a_max * forward(agent.actor, s)


def select_reference(
    agent: AgentState, s, explore: bool, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Actor output, plus decaying clipped Gaussian noise when exploring.

    Each exploring call counts as one boundary query of the decay schedule.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.shape != (agent.obs_dim,):
        raise ShapeError(f"observation has shape {s.shape}, actor expects ({agent.obs_dim},)")
    a = policy_action(agent, s)
    if explore:
        scale = agent.exploration_scale
        noise = scale * agent.a_max * rng.standard_normal(agent.action_dim)
        a = a + np.clip(noise, -agent.a_max, agent.a_max)
        agent.exploration_queries += 1
    return np.clip(a, -agent.a_max, agent.a_max)


# ---------------------------------------------------------------------------
# Critic
# ---------------------------------------------------------------------------


def critic_loss_and_grad(critic: Network, states, actions, targets) -> tuple[float, np.ndarray]:
    fp = forward_with_cache(critic, np.hstack([states, actions]))
    q = fp.activations[-1][:, 0]
    loss = wsmbe_loss(q, targets)
    grads, _ = backward(critic, fp, wsmbe_gradient(q, targets)[:, None])
    return loss, grads


def bootstrap_values(agent: AgentState, s_boot: np.ndarray, rng: np.random.Generator, h: int = 1):
    """Twin-min target value at each bootstrap state, one noise draw per row."""
    u_tilde = bootstrap_action(agent.actor_target, s_boot, agent.target_config(h), rng)
    q_in = np.hstack([s_boot, u_tilde])
    q1 = forward(agent.critic1_target, q_in)[:, 0]
    q2 = forward(agent.critic2_target, q_in)[:, 0]
    return twin_min(q1, q2)


def gated_targets(
    agent: AgentState,
    replay_rows: list[Transition],
    window_segments: list[WindowSegment],
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(states, actions, targets Y, gates z) for a mixed critic batch."""
    heads = [seg.head for seg in window_segments]
    rows = list(replay_rows) + heads
    if not rows:
        raise AvailabilityError("critic update needs a non-empty batch")
    n_rep = len(replay_rows)
    states = np.stack([t.s for t in rows])
    actions = np.stack([t.u for t in rows])
    s_boot = np.stack([t.s_next for t in replay_rows] + [seg.s_boot for seg in window_segments])
    gamma = agent.hyper.gamma

    q_next = bootstrap_values(agent, s_boot, rng)
    r = np.array([t.r for t in rows], dtype=np.float64)
    d = np.array([t.d for t in rows], dtype=np.float64)
    y = one_step_target(r, d, q_next, gamma)
    z = np.zeros(len(rows), dtype=bool)
    G = None
    if window_segments:
        z[n_rep:] = True
        rewards = np.stack([seg.rewards for seg in window_segments])
        masks = np.array([1.0 if seg.m else 0.0 for seg in window_segments])
        G = np.full(len(rows), np.nan)
        G[n_rep:] = windowed_returns(rewards, masks, q_next[n_rep:], gamma)
    return states, actions, gated_target(y, G, z), z


def apply_critic_targets(agent: AgentState, states, actions, targets) -> tuple[float, float]:
    """One Adam step on each critic toward fixed targets."""
    loss1, g1 = critic_loss_and_grad(agent.critic1, states, actions, targets)
    loss2, g2 = critic_loss_and_grad(agent.critic2, states, actions, targets)
    agent.critic1, agent.critic1_opt = adam_step(agent.critic1, g1, agent.critic1_opt)
    agent.critic2, agent.critic2_opt = adam_step(agent.critic2, g2, agent.critic2_opt)
    agent.critic_updates += 1
    return loss1, loss2


def critic_update(
    agent: AgentState,
    replay_rows: list[Transition],
    window_segments: list[WindowSegment],
    rng: np.random.Generator,
) -> CriticStats:
    """Gated target, then one Adam step on each critic.

    Raises:
        AvailabilityError: both row lists are empty.
    """
    states, actions, targets, z = gated_targets(agent, replay_rows, window_segments, rng)
    loss1, loss2 = apply_critic_targets(agent, states, actions, targets)
    return CriticStats(loss1, loss2, float(z.mean()), len(z))


# ---------------------------------------------------------------------------
# Actor
# ---------------------------------------------------------------------------


def actor_loss_and_grad(
    agent: AgentState,
    states,
    pairs: list[tuple[np.ndarray, np.ndarray]] | None = None,
    lambda_s: float = 0.0,
    expert_actions: np.ndarray | None = None,
    gates: np.ndarray | None = None,
    lambda_eg: float = 0.0,
) -> tuple[ActorStats, np.ndarray]:
    """Actor objective and its gradient, without stepping.

    loss = mean(-Q1(s, pi(s)) + lambda_eg * g * omega * |a_E - pi(s)|^2)
           + lambda_s * mean(|pi(s_t) - pi(s_{t-1})|^2)

    omega = max(0, Q1(s, a_E) - Q1(s, pi(s))) is held constant.
    """
    actor, critic, a_max = agent.actor, agent.critic1, agent.a_max
    S = np.atleast_2d(np.asarray(states, dtype=np.float64))
    B = S.shape[0]
    fp_a = forward_with_cache(actor, S)
    a = a_max * fp_a.activations[-1]
    fp_c = forward_with_cache(critic, np.hstack([S, a]))
    q_pi = fp_c.activations[-1][:, 0]
    base = float(-np.mean(q_pi))
    _, in_grad = backward(critic, fp_c, np.full((B, 1), -1.0 / B))
    d_action = in_grad[:, agent.obs_dim :]

    stats = ActorStats(loss=base, base=base)
    if gates is not None:
        g = np.asarray(gates, dtype=np.float64)
        if expert_actions is None:
            raise DataError("expert-gated rows need expert actions")
        a_e = np.asarray(expert_actions, dtype=np.float64)
        q_e = forward(critic, np.hstack([S, a_e]))[:, 0]
        omega = np.maximum(0.0, q_e - q_pi)
        resid = a_e - a
        weight = lambda_eg * g * omega
        imitation = float(np.mean(weight * np.sum(resid * resid, axis=1)))
        d_action = d_action + (weight[:, None] * -2.0 * resid) / B
        stats.imitation = imitation
        stats.loss += imitation

    grads, _ = backward(actor, fp_a, a_max * d_action)

    if lambda_s > 0.0 and pairs:
        prev = np.stack([p[0] for p in pairs])
        curr = np.stack([p[1] for p in pairs])
        fp_prev = forward_with_cache(actor, prev)
        fp_curr = forward_with_cache(actor, curr)
        diff = a_max * (fp_curr.activations[-1] - fp_prev.activations[-1])
        smooth = float(np.mean(np.sum(diff * diff, axis=1)))
        d_diff = lambda_s * 2.0 * diff / len(pairs)
        g_curr, _ = backward(actor, fp_curr, a_max * d_diff)
        g_prev, _ = backward(actor, fp_prev, -a_max * d_diff)
        grads = grads + g_curr + g_prev
        stats.smooth_mse = smooth
        stats.n_pairs = len(pairs)
        stats.loss += lambda_s * smooth
    elif lambda_s > 0.0:
        logger.debug("no adjacent pairs available; smoothness term contributes 0")
    return stats, grads


def actor_update(
    agent: AgentState,
    states,
    pairs: list[tuple[np.ndarray, np.ndarray]] | None,
    lambda_s: float,
) -> ActorStats:
    stats, grads = actor_loss_and_grad(agent, states, pairs, lambda_s)
    agent.actor, agent.actor_opt = adam_step(agent.actor, grads, agent.actor_opt)
    return stats


def expert_labels(rows: list[Transition], action_dim: int) -> tuple[np.ndarray, np.ndarray]:
    """(expert actions, gates) of a batch; rows with g = 0 get zero actions.

    Raises:
        DataError: an intervened row carries no expert action.
    """
    gates = np.array([1.0 if t.intervened else 0.0 for t in rows])
    actions = np.zeros((len(rows), action_dim))
    for i, t in enumerate(rows):
        if t.expert_action is not None:
            actions[i] = t.expert_action
        elif t.intervened:
            raise DataError(
                f"intervened row (episode {t.episode_id}, step {t.step_index}) has no expert action"
            )
    return actions, gates


def eg_actor_update(
    agent: AgentState,
    rows: list[Transition],
    lambda_eg: float,
    pairs: list[tuple[np.ndarray, np.ndarray]] | None = None,
    lambda_s: float = 0.0,
) -> ActorStats:
    """Expert-guided actor step on rows carrying (a_E, g) labels."""
    if not rows:
        raise AvailabilityError("expert-guided update needs a non-empty batch")
    expert, gates = expert_labels(rows, agent.action_dim)
    states = np.stack([t.s for t in rows])
    stats, grads = actor_loss_and_grad(
        agent, states, pairs, lambda_s, expert_actions=expert, gates=gates, lambda_eg=lambda_eg
    )
    agent.actor, agent.actor_opt = adam_step(agent.actor, grads, agent.actor_opt)
    return stats


def soft_update_targets(agent: AgentState) -> None:
    tau = agent.hyper.tau
    agent.actor_target = soft_update(agent.actor_target, agent.actor, tau)
    agent.critic1_target = soft_update(agent.critic1_target, agent.critic1, tau)
    agent.critic2_target = soft_update(agent.critic2_target, agent.critic2, tau)


# ---------------------------------------------------------------------------
# One training update
# ---------------------------------------------------------------------------


def train_step(
    agent: AgentState,
    store: ExperienceStore,
    streams: RunStreams,
    expert_guided: bool = False,
) -> UpdateStats:
    """Sample, update critics, then (on schedule) the actor and the targets."""
    dws = agent.dws
    batch = agent.hyper.batch_size
    windows: list[WindowSegment] = []
    if dws.value_window:
        n_win = int(round(batch * dws.window_fraction))
        windows = store.sample_windows(dws.h, n_win, streams.window_sampling) if n_win else []
    n_rep = batch - len(windows)
    replay_rows = store.sample_uniform(n_rep, streams.replay_sampling) if n_rep else []
    critic_stats = critic_update(agent, replay_rows, windows, streams.target_noise)
    stats = UpdateStats(critic=critic_stats)

    if agent.critic_updates % agent.hyper.policy_update_frequency == 0:
        lambda_s = dws.lambda_s if dws.smooth_reg else 0.0
        pairs = store.adjacent_pairs(batch, streams.window_sampling) if lambda_s > 0.0 else []
        rows = list(replay_rows) + [seg.head for seg in windows]
        if expert_guided:
            stats.actor = eg_actor_update(agent, rows, dws.lambda_eg, pairs, lambda_s)
        else:
            stats.actor = actor_update(agent, np.stack([t.s for t in rows]), pairs, lambda_s)
        soft_update_targets(agent)
    return stats
