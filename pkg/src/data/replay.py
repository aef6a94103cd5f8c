"""
Experience stores: a uniform replay ring and an ordered, episode-aware window ring.

`ExperienceStore.push` appends every executed transition to both. The replay
ring serves i.i.d. one-step rows; the window ring serves contiguous length-h
segments (value-window targets) and adjacent state pairs (actor smoothness
term). Episode ids tag every slot, so the window ring is never cleared
between episodes.
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from data.trajectory_log import transitions_frame
from utils.safety import AvailabilityError, OrderingError, ParameterError

logger = logging.getLogger(__name__)

REPLAY_CAPACITY = 50_000
WINDOW_CAPACITY = 4096


@dataclass(frozen=True)
class Transition:
    s: np.ndarray
    u: np.ndarray
    r: float
    s_next: np.ndarray
    d: bool
    episode_id: int
    step_index: int
    expert_action: np.ndarray | None = None
    intervened: bool = False
    done_reason: str = "none"


@dataclass(frozen=True)
class WindowSegment:
    transitions: tuple[Transition, ...]
    z: bool
    m: bool

    @property
    def h(self) -> int:
        return len(self.transitions)

    @property
    def head(self) -> Transition:
        return self.transitions[0]

    @property
    def rewards(self) -> np.ndarray:
        return np.array([t.r for t in self.transitions], dtype=np.float64)

    @property
    def s_boot(self) -> np.ndarray:
        return self.transitions[-1].s_next


# ---------------------------------------------------------------------------
# Uniform replay ring
# ---------------------------------------------------------------------------


class ReplayStore:
    def __init__(self, capacity: int = REPLAY_CAPACITY):
        if capacity < 1:
            raise ParameterError(f"replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._ptr = 0

    def __len__(self) -> int:
        return len(self._items)

    def push(self, t: Transition) -> Transition | None:
        """Append `t`; returns the transition it overwrote, if any."""
        evicted = None
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            evicted = self._items[self._ptr]
            self._items[self._ptr] = t
        self._ptr = (self._ptr + 1) % self.capacity
        return evicted

    def ordered(self) -> list[Transition]:
        """Survivors, oldest first."""
        if len(self._items) < self.capacity:
            return list(self._items)
        return self._items[self._ptr :] + self._items[: self._ptr]

    def sample_uniform(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        """i.i.d. uniform draws with replacement.

        Raises:
            AvailabilityError: the store is empty.
        """
        if not self._items:
            raise AvailabilityError("replay store is empty")
        if batch < 1:
            raise ParameterError(f"batch must be >= 1, got {batch}")
        idx = rng.integers(0, len(self._items), size=batch)
        return [self._items[i] for i in idx]


# ---------------------------------------------------------------------------
# Ordered window ring
# ---------------------------------------------------------------------------


class WindowStore:
    """Ring of transitions in push order with episode/step/terminal columns."""

    def __init__(self, capacity: int = WINDOW_CAPACITY):
        if capacity < 1:
            raise ParameterError(f"window capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self._items: list[Transition | None] = [None] * capacity
        self._episode = np.zeros(capacity, dtype=np.int64)
        self._step = np.zeros(capacity, dtype=np.int64)
        self._terminal = np.zeros(capacity, dtype=bool)
        self._ptr = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, t: Transition) -> Transition | None:
        i = self._ptr
        evicted = self._items[i] if self._size == self.capacity else None
        self._items[i] = t
        self._episode[i] = t.episode_id
        self._step[i] = t.step_index
        self._terminal[i] = t.d
        self._ptr = (self._ptr + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        return evicted

    def _order(self) -> np.ndarray:
        start = self._ptr if self._size == self.capacity else 0
        return (np.arange(self._size) + start) % self.capacity

    def ordered(self) -> list[Transition]:
        return [self._items[i] for i in self._order()]

    def _links(self, order: np.ndarray) -> np.ndarray:
        """links[j]: ordered slot j continues into slot j + 1 of the same episode."""
        ep, st, d = self._episode[order], self._step[order], self._terminal[order]
        return (ep[1:] == ep[:-1]) & (st[1:] == st[:-1] + 1) & ~d[:-1]

    def valid_starts(self, h: int) -> np.ndarray:
        """Ordered positions i such that slots i..i+h-1 form a contiguous segment."""
        if h < 1:
            raise ParameterError(f"window horizon must be >= 1, got {h}")
        n = self._size
        if n < h:
            return np.zeros(0, dtype=np.int64)
        if h == 1:
            return np.arange(n)
        links = self._links(self._order()).astype(np.int64)
        # a start is valid when the h-1 links after it are all set
        csum = np.concatenate([[0], np.cumsum(links)])
        counts = csum[h - 1 :] - csum[: len(csum) - (h - 1)]
        return np.flatnonzero(counts == h - 1)

    def sample_windows(self, h: int, batch: int, rng: np.random.Generator) -> list[WindowSegment]:
        """Uniform draws (with replacement) over valid start positions.

        Returns an empty list when no valid start exists; callers fall back
        to one-step targets.
        """
        starts = self.valid_starts(h)
        if starts.size == 0 or batch < 1:
            if starts.size == 0:
                logger.debug(f"no valid length-{h} window among {self._size} transitions")
            return []
        order = self._order()
        picks = starts[rng.integers(0, starts.size, size=batch)]
        segments = []
        for i in picks:
            trs = tuple(self._items[j] for j in order[i : i + h])
            segments.append(WindowSegment(trs, z=True, m=not any(t.d for t in trs)))
        return segments

    def adjacent_pairs(
        self, batch: int, rng: np.random.Generator
    ) -> list[tuple[np.ndarray, np.ndarray]]:
        """Pairs (s_{t-1}, s_t) from consecutive non-terminal steps of one episode."""
        if self._size < 2 or batch < 1:
            return []
        order = self._order()
        candidates = np.flatnonzero(self._links(order))
        if candidates.size == 0:
            return []
        picks = candidates[rng.integers(0, candidates.size, size=batch)]
        return [(self._items[order[j]].s, self._items[order[j + 1]].s) for j in picks]


# ---------------------------------------------------------------------------
# Coordinated store
# ---------------------------------------------------------------------------


class ExperienceStore:
    """Pushes every transition to the replay ring and the window ring."""

    def __init__(
        self, replay_capacity: int = REPLAY_CAPACITY, window_capacity: int = WINDOW_CAPACITY
    ):
        self.replay = ReplayStore(replay_capacity)
        self.window = WindowStore(window_capacity)
        self._last_step: dict[int, int] = {}
        self._closed: set[int] = set()
        # transitions per episode still held, counting each ring separately
        self._live: Counter[int] = Counter()

    def __len__(self) -> int:
        return len(self.replay)

    def push(self, t: Transition) -> None:
        """Append to both rings.

        Raises:
            OrderingError: the step index does not increase within its
                episode, or the episode already ended with a terminal.
        """
        if t.episode_id in self._closed:
            raise OrderingError(
                f"episode {t.episode_id} already terminated; got step {t.step_index}"
            )
        last = self._last_step.get(t.episode_id)
        if last is not None and t.step_index <= last:
            raise OrderingError(
                f"episode {t.episode_id}: step {t.step_index} pushed after step {last}"
            )
        self._last_step[t.episode_id] = t.step_index
        if t.d:
            self._closed.add(t.episode_id)
        self._live[t.episode_id] += 2
        for evicted in (self.replay.push(t), self.window.push(t)):
            if evicted is not None:
                self._forget(evicted.episode_id)

    def _forget(self, episode_id: int) -> None:
        self._live[episode_id] -= 1
        if self._live[episode_id] <= 0:
            del self._live[episode_id]
            self._last_step.pop(episode_id, None)
            self._closed.discard(episode_id)

    @property
    def tracked_episodes(self) -> int:
        """Episodes with ordering state kept, i.e. with a transition in either ring."""
        return len(self._last_step)

    def sample_uniform(self, batch: int, rng: np.random.Generator) -> list[Transition]:
        return self.replay.sample_uniform(batch, rng)

    def sample_windows(self, h: int, batch: int, rng: np.random.Generator) -> list[WindowSegment]:
        return self.window.sample_windows(h, batch, rng)

    def adjacent_pairs(self, batch: int, rng: np.random.Generator):
        return self.window.adjacent_pairs(batch, rng)

    def dump_csv(self, path: str | Path, which: str = "window") -> Path:
        """Write one store to CSV in the trajectory-log schema."""
        items = self.window.ordered() if which == "window" else self.replay.ordered()
        path = Path(path)
        transitions_frame(items).to_csv(path, index=False)
        logger.info(f"Dumped {len(items)} {which} transitions to {path.name}")
        return path
