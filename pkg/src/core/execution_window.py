"""
Execution window: one reference action per window, modulated per step.

At a window boundary (phase 0) the reference provider is queried once and
its action cached; every step emits `weights[phase] * cached` and advances
the phase modulo h. The executed action is therefore a deterministic function
of the augmented state (observation, phase, cached reference).
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from utils.safety import ParameterError, ShapeError, UsageError, as_vector

logger = logging.getLogger(__name__)

PROFILE_KINDS = ("zoh", "dissipative_linear")
PROFILE_ALIASES = {"decay": "dissipative_linear"}


@dataclass(frozen=True)
class ExecutionProfile:
    kind: str
    h: int
    weights: np.ndarray


def make_profile(kind: str, h: int) -> ExecutionProfile:
    """zoh: w_k = 1. dissipative_linear: w_k = 1 - k/h.

    Raises:
        ParameterError: h < 1 or an unknown kind.
    """
    kind = PROFILE_ALIASES.get(kind, kind)
    if kind not in PROFILE_KINDS:
        raise ParameterError(f"unknown execution profile '{kind}' (known: zoh, decay)")
    if int(h) != h or h < 1:
        raise ParameterError(f"window horizon must be an integer >= 1, got {h}")
    h = int(h)
    if kind == "zoh":
        weights = np.ones(h)
    else:
        weights = 1.0 - np.arange(h) / h
    return ExecutionProfile(kind, h, weights)


@dataclass
class WindowCache:
    """Phase and cached reference of one rollout."""

    action_dim: int
    kappa: int = 0
    a_hat: np.ndarray | None = None
    queries: int = 0

    def reset(self) -> None:
        """Start a new window schedule (episode start or invalidation)."""
        self.kappa = 0
        self.a_hat = None


def executed_action(
    profile: ExecutionProfile, kappa: int, a_hat, a_max: float | None = None
) -> np.ndarray:
    u = profile.weights[kappa] * np.asarray(a_hat, dtype=np.float64)
    if a_max is not None:
        u = np.clip(u, -a_max, a_max)
    return u


def execute_step(
    cache: WindowCache,
    profile: ExecutionProfile,
    reference_provider: Callable[[np.ndarray], np.ndarray],
    s,
    a_max: float | None = None,
) -> np.ndarray:
    """Emit the executed action for observation `s` and advance the phase.

    Raises:
        UsageError: the cache holds a phase > 0 without a reference.
        ShapeError: the provider returned an action of the wrong length.
    """
    if cache.kappa >= profile.h:
        raise UsageError(f"window phase {cache.kappa} is outside a length-{profile.h} profile")
    if cache.kappa == 0:
        a = as_vector(reference_provider(s))
        if a.shape[0] != cache.action_dim:
            raise ShapeError(
                f"reference provider returned {a.shape[0]} components, expected {cache.action_dim}"
            )
        cache.a_hat = a
        cache.queries += 1
    elif cache.a_hat is None:
        raise UsageError("window phase > 0 without a cached reference")
    u = executed_action(profile, cache.kappa, cache.a_hat, a_max)
    cache.kappa = (cache.kappa + 1) % profile.h
    return u


def intra_window_bound(profile: ExecutionProfile, a_max: float) -> np.ndarray:
    """Per-step bounds |w_k - w_{k-1}| * a_max for k = 1..h-1."""
    if a_max <= 0:
        raise ParameterError(f"a_max must be positive, got {a_max}")
    return np.abs(np.diff(profile.weights)) * a_max
