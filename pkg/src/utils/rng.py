"""
Named random streams.

One master seed fans out into independent child generators. The splitting
rule is counter-based: stream `name` is `SeedSequence(entropy=seed,
spawn_key=(STREAMS[name],))`, so adding a new consumer of one stream never
shifts the draws of another. The integer assigned to a name is part of the
reproducibility contract and must never be reused or renumbered.
"""

from __future__ import annotations

import numpy as np

from utils.safety import ParameterError

STREAMS: dict[str, int] = {
    "env": 0,
    "exploration": 1,
    "target_noise": 2,
    "replay_sampling": 3,
    "window_sampling": 4,
    "init": 5,
    "eval": 6,
    "oracle": 7,
}


def stream(seed: int, name: str) -> np.random.Generator:
    """Return the generator for the named child stream of `seed`."""
    if name not in STREAMS:
        raise ParameterError(f"unknown RNG stream '{name}' (known: {sorted(STREAMS)})")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(STREAMS[name],)))


class RunStreams:
    """The full set of generators owned by one training run."""

    def __init__(self, seed: int):
        self.seed = seed
        self.env = stream(seed, "env")
        self.exploration = stream(seed, "exploration")
        self.target_noise = stream(seed, "target_noise")
        self.replay_sampling = stream(seed, "replay_sampling")
        self.window_sampling = stream(seed, "window_sampling")
        self.init = stream(seed, "init")

    def next_env_seed(self) -> int:
        return int(self.env.integers(0, 2**31 - 1))
