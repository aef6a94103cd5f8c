"""
Brute-force check of the windowed return on a small finite MDP.

The executed process is Markov on the augmented chain (state, phase,
cached reference). For every augmented key this module computes the exact
expectation of the windowed return by enumerating all length-h executed
paths, and independently estimates it by sampling segments and passing them
through `windowed_returns`, the same function the learner uses.

MDP actions are the two reference levels -1 and +1. An executed action
u = w * a in [-1, 1] acts through the convex mixture of the two action rows
with weight (u + 1) / 2 on the +1 row, so mixed rows stay normalized.
Bootstrap actions follow the reference policy without modulation. Only
valid segments count: paths that hit a terminal before the final slot are
dropped and the remaining mass renormalized.

MDP text format (one directive per line, '#' comments):

    states 5
    terminal 4
    policy +1 +1 -1 +1 +1
    reward_std 0.5 0.5 0.5 0.5 0.5
    reward -1 <one mean per state>
    reward +1 <one mean per state>
    transition -1 <state> <one probability per next state>
    transition +1 <state> <one probability per next state>
    qtable <state> <Q at -1> <Q at +1>

Terminal states need no transition rows (they are absorbing).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.stats import norm

from core.execution_window import ExecutionProfile
from core.value_window import one_step_target, windowed_returns
from utils.safety import ModelError, ParameterError

logger = logging.getLogger(__name__)

ACTION_LEVELS = (-1.0, 1.0)
ROW_TOLERANCE = 1e-9

CHAIN5_TEXT = """\
# 5-state chain, state 4 absorbing terminal
states 5
terminal 4
policy +1 +1 -1 +1 +1
reward_std 0.5 0.8 0.5 0.8 0.0
reward -1 0.3 0.2 0.1 0.0 0.0
reward +1 -0.2 0.3 0.8 1.3 0.0
transition -1 0 0.9 0.1 0.0 0.0 0.0
transition -1 1 0.7 0.2 0.1 0.0 0.0
transition -1 2 0.0 0.7 0.2 0.1 0.0
transition -1 3 0.0 0.0 0.7 0.2 0.1
transition +1 0 0.3 0.6 0.1 0.0 0.0
transition +1 1 0.1 0.2 0.6 0.1 0.0
transition +1 2 0.0 0.1 0.2 0.6 0.1
transition +1 3 0.0 0.0 0.1 0.3 0.6
qtable 0 1.0 1.5
qtable 1 1.2 2.0
qtable 2 1.4 2.5
qtable 3 1.6 3.0
qtable 4 0.0 0.0
"""


@dataclass
class FiniteMDP:
    transitions: np.ndarray  # (2, S, S): rows per action level
    reward_mean: np.ndarray  # (2, S)
    reward_std: np.ndarray  # (S,)
    terminal: np.ndarray  # (S,) bool
    policy: np.ndarray  # (S,) reference level index, 0 -> -1, 1 -> +1
    q_table: np.ndarray  # (S, 2)

    @property
    def n_states(self) -> int:
        return self.terminal.shape[0]

    def mixed(self, s: int, u: float) -> tuple[np.ndarray, float]:
        """Next-state distribution and mean reward of executed action u at s."""
        lam = (u + 1.0) / 2.0
        row = (1.0 - lam) * self.transitions[0, s] + lam * self.transitions[1, s]
        mean = (1.0 - lam) * self.reward_mean[0, s] + lam * self.reward_mean[1, s]
        return row, float(mean)

    def reference(self, s: int) -> float:
        return ACTION_LEVELS[int(self.policy[s])]

    def q_boot(self, s: int) -> float:
        return float(self.q_table[s, int(self.policy[s])])


def _level_index(token: str) -> int:
    try:
        level = float(token)
    except ValueError:
        raise ModelError(f"action level '{token}' is not a number") from None
    if level not in ACTION_LEVELS:
        raise ModelError(f"action level must be -1 or +1, got '{token}'")
    return ACTION_LEVELS.index(level)


def parse_mdp(text: str) -> FiniteMDP:
    """Parse the plain-text MDP format.

    Raises:
        ModelError: malformed directives, missing rows or non-normalized rows.
    """
    lines = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            lines.append(line.split())
    sizes = [ln for ln in lines if ln[0] == "states"]
    if len(sizes) != 1 or len(sizes[0]) != 2:
        raise ModelError("exactly one 'states N' directive is required")
    n = int(sizes[0][1])
    if n < 1:
        raise ModelError("an MDP needs at least one state")

    P = np.full((2, n, n), np.nan)
    R = np.zeros((2, n))
    std = np.zeros(n)
    terminal = np.zeros(n, dtype=bool)
    policy = np.ones(n, dtype=np.int64)
    q = np.zeros((n, 2))

    def values(tokens: list[str], count: int, what: str) -> np.ndarray:
        if len(tokens) != count:
            raise ModelError(f"'{what}' expects {count} values, got {len(tokens)}")
        try:
            return np.array([float(t) for t in tokens])
        except ValueError:
            raise ModelError(f"'{what}' has a non-numeric value") from None

    for tokens in lines:
        key, args = tokens[0], tokens[1:]
        if key == "states":
            continue
        if key == "terminal":
            for t in args:
                terminal[int(t)] = True
        elif key == "policy":
            policy = np.array([_level_index(t) for t in args], dtype=np.int64)
            if policy.shape[0] != n:
                raise ModelError(f"'policy' expects {n} levels, got {policy.shape[0]}")
        elif key == "reward_std":
            std = values(args, n, key)
        elif key == "reward":
            R[_level_index(args[0])] = values(args[1:], n, key)
        elif key == "transition":
            a, s = _level_index(args[0]), int(args[1])
            P[a, s] = values(args[2:], n, key)
        elif key == "qtable":
            q[int(args[0])] = values(args[1:], 2, key)
        else:
            raise ModelError(f"unknown directive '{key}'")

    for s in range(n):
        for a in range(2):
            if terminal[s]:
                if np.isnan(P[a, s]).any():
                    P[a, s] = np.eye(n)[s]
                continue
            row = P[a, s]
            if np.isnan(row).any():
                raise ModelError(
                    f"missing transition row for level {ACTION_LEVELS[a]:+g}, state {s}"
                )
            if (row < 0).any() or abs(row.sum() - 1.0) > ROW_TOLERANCE:
                raise ModelError(
                    f"transition row for level {ACTION_LEVELS[a]:+g}, state {s} sums to {row.sum()}"
                )
    if (std < 0).any():
        raise ModelError("reward_std must be non-negative")
    return FiniteMDP(P, R, std, terminal, policy, q)


def load_mdp(path: str | Path) -> FiniteMDP:
    return parse_mdp(Path(path).read_text(encoding="utf-8"))


def chain5() -> FiniteMDP:
    return parse_mdp(CHAIN5_TEXT)


def augmented_keys(mdp: FiniteMDP, h: int) -> list[tuple[int, int, float]]:
    """(state, phase, cached reference) for every non-terminal state."""
    return [
        (s, kappa, a)
        for s in range(mdp.n_states)
        if not mdp.terminal[s]
        for kappa in range(h)
        for a in ACTION_LEVELS
    ]


# ---------------------------------------------------------------------------
# Exhaustive enumeration
# ---------------------------------------------------------------------------


def operator_oracle(
    mdp: FiniteMDP,
    profile: ExecutionProfile,
    gamma: float,
    q_table: np.ndarray | None = None,
) -> dict[tuple[int, int, float], float]:
    """Exact expected windowed return per augmented key, conditioned on validity.

    `q_table` (states x 2) overrides the bootstrap values carried by the MDP.
    Keys whose paths all terminate early map to NaN.
    """
    if q_table is not None:
        mdp = replace(mdp, q_table=np.asarray(q_table, dtype=np.float64))
    h = profile.h
    w = profile.weights
    table: dict[tuple[int, int, float], float] = {}

    for key in augmented_keys(mdp, h):
        total = 0.0
        valid_mass = 0.0
        # stack entries: (state, phase, reference, depth, path prob, discounted reward sum)
        stack = [(key[0], key[1], key[2], 0, 1.0, 0.0)]
        while stack:
            s, kappa, a_hat, k, prob, ret = stack.pop()
            row, mean = mdp.mixed(s, w[kappa] * a_hat)
            ret_k = ret + gamma**k * mean
            for s_next in np.flatnonzero(row > 0.0):
                p = prob * row[s_next]
                done = bool(mdp.terminal[s_next])
                if k == h - 1:
                    boot = 0.0 if done else gamma**h * mdp.q_boot(s_next)
                    total += p * (ret_k + boot)
                    valid_mass += p
                elif not done:
                    nk = (kappa + 1) % h
                    na = mdp.reference(s_next) if nk == 0 else a_hat
                    stack.append((int(s_next), nk, na, k + 1, p, ret_k))
        table[key] = total / valid_mass if valid_mass > 0.0 else float("nan")
    return table


def one_step_table(mdp: FiniteMDP, gamma: float) -> dict[tuple[int, float], float]:
    """Expected one-step target per (state, action level)."""
    out = {}
    for s in range(mdp.n_states):
        if mdp.terminal[s]:
            continue
        for a in ACTION_LEVELS:
            row, mean = mdp.mixed(s, a)
            q_next = np.array([mdp.q_boot(j) for j in range(mdp.n_states)])
            d = mdp.terminal.astype(np.float64)
            out[(s, a)] = float(np.sum(row * one_step_target(mean, d, q_next, gamma)))
    return out


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def sample_segments(
    mdp: FiniteMDP,
    profile: ExecutionProfile,
    key: tuple[int, int, float],
    n: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Draw n segments from `key` and keep the valid ones.

    Returns (rewards (V, h), masks (V,), q_boot (V,)).
    """
    h = profile.h
    s = np.full(n, key[0], dtype=np.int64)
    a_hat = np.full(n, key[2])
    kappa = key[1]
    alive = np.ones(n, dtype=bool)
    rewards = np.zeros((n, h))
    P0, P1 = mdp.transitions[0], mdp.transitions[1]
    R0, R1 = mdp.reward_mean[0], mdp.reward_mean[1]
    for k in range(h):
        lam = (profile.weights[kappa] * a_hat + 1.0) / 2.0
        rows = (1.0 - lam)[:, None] * P0[s] + lam[:, None] * P1[s]
        means = (1.0 - lam) * R0[s] + lam * R1[s]
        rewards[:, k] = means + mdp.reward_std[s] * rng.standard_normal(n)
        cum = np.cumsum(rows, axis=1)
        u = rng.random(n)
        s = np.minimum((u[:, None] >= cum).sum(axis=1), mdp.n_states - 1)
        done = mdp.terminal[s]
        if k < h - 1:
            alive &= ~done
        kappa = (kappa + 1) % h
        if kappa == 0:
            a_hat = np.asarray(ACTION_LEVELS)[mdp.policy[s]]
    masks = (~mdp.terminal[s]).astype(np.float64)
    q_boot = mdp.q_table[s, mdp.policy[s]]
    return rewards[alive], masks[alive], q_boot[alive]


Z_TOLERANCE = 3.0


def family_threshold(n_keys: int, sigmas: float = 3.0) -> float:
    """Bonferroni-widened z bound for n_keys keys; reported next to each check.

    A key passes on the plain Z_TOLERANCE band. This value shows how far the
    family-wise rate would stretch it.

    Returns the z threshold giving the two-sided `sigmas` false-alarm rate across n_keys keys."""
    alpha = 2.0 * norm.sf(sigmas)
    return float(norm.isf(alpha / (2.0 * max(1, n_keys))))


@dataclass
class OracleCheck:
    profile: str
    h: int
    state: int
    phase: int
    reference: float
    executed: float
    oracle: float
    mean: float
    stderr: float
    n_valid: int
    z: float
    threshold: float
    family_z: float

    @property
    def passed(self) -> bool:
        if self.n_valid < 2:
            return bool(np.isnan(self.oracle))
        return abs(self.z) <= self.threshold


def compare_with_sampling(
    mdp: FiniteMDP,
    profile: ExecutionProfile,
    gamma: float,
    n_per_key: int,
    rng: np.random.Generator,
) -> list[OracleCheck]:
    """Monte Carlo windowed returns versus the exact table, one check per key."""
    if n_per_key < 2:
        raise ParameterError("need at least two samples per key")
    exact = operator_oracle(mdp, profile, gamma)
    family_z = family_threshold(len(exact))
    checks = []
    for key, value in exact.items():
        rewards, masks, q_boot = sample_segments(mdp, profile, key, n_per_key, rng)
        n_valid = rewards.shape[0]
        if n_valid >= 2:
            G = windowed_returns(rewards, masks, q_boot, gamma)
            mean = float(G.mean())
            stderr = float(G.std(ddof=1) / np.sqrt(n_valid))
            z = (mean - value) / stderr if stderr > 0 else (0.0 if mean == value else np.inf)
        else:
            mean = stderr = z = float("nan")
        s, kappa, a = key
        checks.append(
            OracleCheck(
                profile=profile.kind,
                h=profile.h,
                state=s,
                phase=kappa,
                reference=a,
                executed=float(profile.weights[kappa] * a),
                oracle=value,
                mean=mean,
                stderr=stderr,
                n_valid=n_valid,
                z=float(z),
                threshold=Z_TOLERANCE,
                family_z=family_z,
            )
        )
    return checks
