from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from core.metrics import episode_report
from data.replay import ExperienceStore, ReplayStore, Transition, WindowStore
from utils.safety import AvailabilityError, OrderingError, ParameterError


def _t(episode: int, step: int, d: bool = False, r: float = 0.0) -> Transition:
    s = np.array([float(episode), float(step)])
    return Transition(s, np.zeros(1), r, s + [0.0, 1.0], d, episode, step)


def _fill(store, items):
    for t in items:
        store.push(t)
    return store


# --- Tests for ReplayStore ---


def test_replay_ring_evicts_oldest():
    """Pushing past capacity keeps the most recent transitions in order."""
    store = _fill(ReplayStore(3), [_t(0, i) for i in range(5)])
    assert len(store) == 3
    assert [t.step_index for t in store.ordered()] == [2, 3, 4]


def test_replay_empty_sample_raises():
    """Sampling an empty store raises AvailabilityError."""
    with pytest.raises(AvailabilityError):
        ReplayStore(4).sample_uniform(2, np.random.default_rng(0))


def test_replay_single_item_sample():
    """A one-element store returns that element every time."""
    store = _fill(ReplayStore(4), [_t(0, 0)])
    rows = store.sample_uniform(5, np.random.default_rng(0))
    assert all(r.step_index == 0 for r in rows)


def test_replay_sampling_deterministic():
    """The same generator seed draws the same rows."""
    store = _fill(ReplayStore(100), [_t(0, i) for i in range(50)])
    a = [t.step_index for t in store.sample_uniform(20, np.random.default_rng(7))]
    b = [t.step_index for t in store.sample_uniform(20, np.random.default_rng(7))]
    assert a == b


def test_replay_sampling_uniform_frequency():
    """Draws spread evenly over stored rows."""
    store = _fill(ReplayStore(10), [_t(0, i) for i in range(10)])
    rows = store.sample_uniform(50_000, np.random.default_rng(1))
    counts = np.bincount([t.step_index for t in rows], minlength=10)
    assert np.all(np.abs(counts - 5000) < 300)


def test_replay_rejects_zero_capacity():
    """Capacity below one raises ParameterError."""
    with pytest.raises(ParameterError):
        ReplayStore(0)


# --- Tests for WindowStore ---


def test_valid_starts_single_episode():
    """Five steps of one episode give starts 0..2 for h = 3."""
    store = _fill(WindowStore(16), [_t(0, i) for i in range(5)])
    np.testing.assert_array_equal(store.valid_starts(3), [0, 1, 2])


def test_valid_starts_too_few_transitions():
    """Fewer transitions than h leave no valid start."""
    store = _fill(WindowStore(16), [_t(0, 0), _t(0, 1)])
    assert store.valid_starts(3).size == 0
    assert store.sample_windows(3, 4, np.random.default_rng(0)) == []


def test_valid_starts_never_cross_episodes():
    """A segment cannot span an episode boundary."""
    items = [_t(0, 0), _t(0, 1), _t(1, 0), _t(1, 1), _t(1, 2)]
    store = _fill(WindowStore(16), items)
    np.testing.assert_array_equal(store.valid_starts(3), [2])


def test_valid_starts_stop_at_terminal():
    """A terminal may close a segment but never continue it."""
    items = [_t(0, 0), _t(0, 1), _t(0, 2, d=True), _t(1, 0), _t(1, 1)]
    store = _fill(WindowStore(16), items)
    np.testing.assert_array_equal(store.valid_starts(3), [0])


def test_terminal_in_last_slot_masks_bootstrap():
    """A window ending on a terminal is valid with m false."""
    items = [_t(0, 0, r=1.0), _t(0, 1, r=1.0), _t(0, 2, d=True, r=1.0)]
    store = _fill(WindowStore(8), items)
    seg = store.sample_windows(3, 1, np.random.default_rng(0))[0]
    assert seg.z
    assert not seg.m
    np.testing.assert_array_equal(seg.rewards, [1.0, 1.0, 1.0])


def test_window_ring_wraparound():
    """After wrap-around only the surviving contiguous steps form segments."""
    store = _fill(WindowStore(4), [_t(0, i) for i in range(6)])
    assert [t.step_index for t in store.ordered()] == [2, 3, 4, 5]
    np.testing.assert_array_equal(store.valid_starts(3), [0, 1])
    seg = store.sample_windows(3, 1, np.random.default_rng(0))[0]
    steps = [t.step_index for t in seg.transitions]
    assert steps in ([2, 3, 4], [3, 4, 5])


def test_sampled_windows_are_contiguous():
    """Every sampled segment is one episode with consecutive steps."""
    items = [_t(e, i) for e in range(4) for i in range(7)]
    store = _fill(WindowStore(64), items)
    for seg in store.sample_windows(3, 200, np.random.default_rng(5)):
        assert len({t.episode_id for t in seg.transitions}) == 1
        steps = [t.step_index for t in seg.transitions]
        assert steps == list(range(steps[0], steps[0] + 3))
        assert seg.m


# --- Tests for adjacent_pairs ---


def test_adjacent_pairs_need_two_steps():
    """One transition yields no pairs."""
    store = _fill(WindowStore(8), [_t(0, 0)])
    assert store.adjacent_pairs(4, np.random.default_rng(0)) == []


def test_adjacent_pairs_single_link():
    """Two steps yield exactly the pair of their states."""
    store = _fill(WindowStore(8), [_t(0, 0), _t(0, 1)])
    pairs = store.adjacent_pairs(3, np.random.default_rng(0))
    assert len(pairs) == 3
    for prev, curr in pairs:
        np.testing.assert_array_equal(prev, [0.0, 0.0])
        np.testing.assert_array_equal(curr, [0.0, 1.0])


def test_adjacent_pairs_are_consecutive_in_episode():
    """Pairs never straddle episodes or follow a terminal."""
    items = [_t(0, 0), _t(0, 1, d=True), _t(1, 0), _t(1, 1), _t(1, 2)]
    store = _fill(WindowStore(16), items)
    for prev, curr in store.adjacent_pairs(100, np.random.default_rng(2)):
        assert prev[0] == curr[0] == 1.0
        assert curr[1] == prev[1] + 1


# --- Tests for ExperienceStore ---


def test_experience_store_pushes_both_rings():
    """One push lands in the replay ring and the window ring."""
    store = _fill(ExperienceStore(10, 10), [_t(0, 0), _t(0, 1)])
    assert len(store.replay) == 2
    assert len(store.window) == 2


def test_experience_store_rejects_step_regression():
    """A non-increasing step index within an episode raises OrderingError."""
    store = _fill(ExperienceStore(10, 10), [_t(0, 0), _t(0, 1)])
    with pytest.raises(OrderingError):
        store.push(_t(0, 1))


def test_experience_store_rejects_push_after_terminal():
    """An episode is closed once a terminal transition arrives."""
    store = _fill(ExperienceStore(10, 10), [_t(0, 0, d=True)])
    with pytest.raises(OrderingError):
        store.push(_t(0, 1))


def test_dump_csv(tmp_path):
    """The window ring dumps one row per transition."""
    store = _fill(ExperienceStore(10, 10), [_t(0, i) for i in range(4)])
    path = store.dump_csv(tmp_path / "window.csv")
    assert len(path.read_text().strip().splitlines()) == 5


def test_dumped_ring_parses_as_episode_log(tmp_path):
    """Dumped rows carry the real done_reason, so an episode report can read them."""
    items = [_t(0, i) for i in range(3)] + [replace(_t(0, 3, d=True), done_reason="success")]
    store = _fill(ExperienceStore(10, 10), items)
    df = pd.read_csv(store.dump_csv(tmp_path / "window.csv"))
    assert df["done_reason"].tolist() == ["none", "none", "none", "success"]
    assert df["done"].tolist() == [False, False, False, True]
    report = episode_report(tmp_path / "window.csv")
    assert report.success
    assert report.length == 4


def test_dumped_timeout_is_done_but_not_terminal(tmp_path):
    """A truncated episode ends with done=true and reason timeout."""
    items = [_t(0, 0), replace(_t(0, 1), done_reason="timeout")]
    store = _fill(ExperienceStore(10, 10), items)
    report = episode_report(store.dump_csv(tmp_path / "window.csv"))
    assert report.length == 2
    assert not (report.success or report.collision or report.boundary)


def test_experience_store_forgets_evicted_episodes():
    """Ordering state is kept only for episodes still held by a ring."""
    store = ExperienceStore(4, 6)
    for ep in range(50):
        for step in range(3):
            store.push(_t(ep, step, d=step == 2))
        assert store.tracked_episodes <= 3
    assert store.tracked_episodes == 2
    with pytest.raises(OrderingError):
        store.push(_t(49, 3))
