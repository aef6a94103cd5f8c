"""
Window-aligned critic targets.

    y = r + gamma * (1 - d) * Q'(s', u~)                       one-step target
    G = sum_k gamma^k r_{t+k} + gamma^h * m * Q'(s_{t+h}, u~)  windowed return
    Y = (1 - z) * y + z * G                                     gated target

Q' is the twin-min of the target critics and u~ the noise-smoothed target
actor output. The arithmetic of the windowed return is shared by the scalar
and batched forms and is arranged so that h = 1 reproduces the one-step
target bit for bit.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from core.approximator import Network, forward
from utils.safety import ContractError, ParameterError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TargetConfig:
    gamma: float = 0.98
    h: int = 3
    target_noise_sigma: float = 0.15
    noise_clip: float = 0.5
    a_max: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ParameterError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.h < 1:
            raise ParameterError(f"h must be >= 1, got {self.h}")
        if self.target_noise_sigma < 0 or self.noise_clip < 0:
            raise ParameterError("target noise sigma and noise clip must be non-negative")


def one_step_target(r, d, q_next, gamma: float):
    return r + gamma * (1.0 - np.asarray(d, dtype=np.float64)) * q_next


def windowed_returns(rewards, masks, q_boot, gamma: float) -> np.ndarray:
    """Batched windowed return. rewards: (B, h); masks, q_boot: (B,)."""
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.ndim != 2 or rewards.shape[1] < 1:
        raise ShapeError(f"rewards must be (batch, h), got shape {rewards.shape}")
    h = rewards.shape[1]
    acc = rewards[:, 0].copy()
    for k in range(1, h):
        acc = acc + gamma**k * rewards[:, k]
    masks = np.asarray(masks, dtype=np.float64)
    return acc + gamma**h * masks * np.asarray(q_boot, dtype=np.float64)


def windowed_return(segment, gamma: float, q_boot: float) -> float:
    """Windowed return of one WindowSegment.

    Raises:
        ContractError: the segment is not valid (z is false).
    """
    if not segment.z:
        raise ContractError("windowed_return needs a valid segment (z = true)")
    mask = 1.0 if segment.m else 0.0
    return float(windowed_returns(segment.rewards[None, :], [mask], [q_boot], gamma)[0])


def twin_min(q1, q2):
    return np.minimum(q1, q2)


def bootstrap_action(
    target_actor: Network,
    s_boot,
    cfg: TargetConfig,
    rng: np.random.Generator | None,
    noise=None,
) -> np.ndarray:
    """clip(a_max * target_actor(s) + clip(eps, +-noise_clip), +-a_max).

    `noise` replaces the Gaussian draw when given. No draw happens when
    sigma is zero, so the generator state is untouched.
    """
    a = cfg.a_max * forward(target_actor, s_boot)
    if noise is not None:
        eps = np.asarray(noise, dtype=np.float64)
    elif cfg.target_noise_sigma > 0.0:
        if rng is None:
            raise ParameterError("bootstrap_action needs an rng when target noise is on")
        eps = rng.normal(0.0, cfg.target_noise_sigma, size=a.shape)
    else:
        eps = None
    if eps is not None:
        a = a + np.clip(eps, -cfg.noise_clip, cfg.noise_clip)
    return np.clip(a, -cfg.a_max, cfg.a_max)


def gated_target(y, G, z):
    """Y = y where z is false, G where z is true.

    Raises:
        ContractError: z is set somewhere but G is missing.
    """
    z = np.asarray(z, dtype=bool)
    if G is None:
        if np.any(z):
            raise ContractError("gate is set but no windowed return was supplied")
        return np.asarray(y, dtype=np.float64).copy() if np.ndim(y) else float(y)
    out = np.where(z, G, y)
    return out if out.ndim else float(out)


def wsmbe_loss(q_pred, Y) -> float:
    q = np.asarray(q_pred, dtype=np.float64).reshape(-1)
    t = np.asarray(Y, dtype=np.float64).reshape(-1)
    if q.shape != t.shape:
        raise ShapeError(f"q_pred has {q.shape[0]} rows, targets have {t.shape[0]}")
    if q.size == 0:
        raise ShapeError("wsmbe_loss over an empty batch")
    return float(np.mean((q - t) ** 2))


def wsmbe_gradient(q_pred, Y) -> np.ndarray:
    """d loss / d q_pred = 2 (q - Y) / B; targets carry no gradient."""
    q = np.asarray(q_pred, dtype=np.float64).reshape(-1)
    t = np.asarray(Y, dtype=np.float64).reshape(-1)
    if q.shape != t.shape:
        raise ShapeError(f"q_pred has {q.shape[0]} rows, targets have {t.shape[0]}")
    return 2.0 * (q - t) / q.size
