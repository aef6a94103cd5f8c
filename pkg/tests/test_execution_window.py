import numpy as np
import pytest

from core.execution_window import (
    WindowCache,
    execute_step,
    executed_action,
    intra_window_bound,
    make_profile,
)
from utils.safety import ParameterError, ShapeError, UsageError


class CountingProvider:
    """Reference provider that replays a fixed list and counts calls."""

    def __init__(self, actions):
        self.actions = [np.atleast_1d(np.asarray(a, dtype=float)) for a in actions]
        self.calls = 0

    def __call__(self, s):
        a = self.actions[self.calls % len(self.actions)]
        self.calls += 1
        return a


def _run(profile, provider, n_steps, action_dim=1, a_max=None):
    cache = WindowCache(action_dim)
    out = [execute_step(cache, profile, provider, np.zeros(2), a_max) for _ in range(n_steps)]
    return np.array(out), cache


# --- Tests for make_profile ---


def test_profile_weights():
    """zoh is all ones and the linear decay falls by 1/h per step."""
    np.testing.assert_array_equal(make_profile("zoh", 3).weights, [1.0, 1.0, 1.0])
    np.testing.assert_allclose(make_profile("dissipative_linear", 3).weights, [1.0, 2 / 3, 1 / 3])
    np.testing.assert_allclose(make_profile("dissipative_linear", 4).weights, [1, 0.75, 0.5, 0.25])


def test_profile_decay_alias():
    """'decay' resolves to the linear dissipative profile."""
    assert make_profile("decay", 2).kind == "dissipative_linear"


def test_profile_h1_is_identity():
    """Both kinds reduce to the single weight 1 at h = 1."""
    for kind in ("zoh", "decay"):
        np.testing.assert_array_equal(make_profile(kind, 1).weights, [1.0])


@pytest.mark.parametrize("kind,h", [("zoh", 0), ("zoh", -2), ("zoh", 1.5), ("ramp", 3)])
def test_profile_rejects_bad_arguments(kind, h):
    """Non-positive or fractional h and unknown kinds raise ParameterError."""
    with pytest.raises(ParameterError):
        make_profile(kind, h)


# --- Tests for execute_step ---


def test_decay_stream_then_requery():
    """Reference 0.9 under h=3 decay executes 0.9, 0.6, 0.3, then queries again."""
    provider = CountingProvider([[0.9], [-0.3]])
    u, cache = _run(make_profile("decay", 3), provider, 4)
    np.testing.assert_allclose(u[:, 0], [0.9, 0.6, 0.3, -0.3])
    assert provider.calls == 2
    assert cache.kappa == 1


def test_zoh_holds_reference():
    """ZOH repeats the cached reference for the whole window."""
    provider = CountingProvider([[-0.4], [0.2]])
    u, _ = _run(make_profile("zoh", 3), provider, 3)
    np.testing.assert_array_equal(u[:, 0], [-0.4, -0.4, -0.4])
    assert provider.calls == 1


def test_h1_queries_every_step():
    """With h = 1 the provider is consulted on every step."""
    rng = np.random.default_rng(0)
    refs = rng.uniform(-1, 1, size=(7, 1))
    provider = CountingProvider(refs)
    u, cache = _run(make_profile("zoh", 1), provider, 7)
    np.testing.assert_array_equal(u, refs)
    assert cache.queries == 7


def test_executed_action_clips_to_bound():
    """Scaled references are clipped to the action bound when one is given."""
    profile = make_profile("zoh", 2)
    np.testing.assert_array_equal(executed_action(profile, 1, [1.5, -2.0], a_max=1.0), [1.0, -1.0])


def test_cache_reset_forces_requery():
    """Resetting mid-window restarts the schedule at phase 0."""
    profile = make_profile("zoh", 3)
    provider = CountingProvider([[0.5], [0.1]])
    cache = WindowCache(1)
    execute_step(cache, profile, provider, np.zeros(2))
    cache.reset()
    u = execute_step(cache, profile, provider, np.zeros(2))
    assert u[0] == 0.1
    assert provider.calls == 2


def test_phase_without_reference_is_usage_error():
    """A nonzero phase with nothing cached raises UsageError."""
    cache = WindowCache(1, kappa=1)
    with pytest.raises(UsageError):
        execute_step(cache, make_profile("zoh", 3), CountingProvider([[0.0]]), np.zeros(2))


def test_provider_width_mismatch():
    """A provider returning the wrong action length raises ShapeError."""
    cache = WindowCache(2)
    with pytest.raises(ShapeError):
        execute_step(cache, make_profile("zoh", 2), CountingProvider([[0.0]]), np.zeros(2))


# --- Tests for intra_window_bound ---


def test_intra_window_bound_values():
    """ZOH has zero intra-window jumps and decay jumps by a_max / h."""
    np.testing.assert_array_equal(intra_window_bound(make_profile("zoh", 3), 1.0), [0.0, 0.0])
    np.testing.assert_allclose(intra_window_bound(make_profile("decay", 3), 1.0), [1 / 3, 1 / 3])
    assert intra_window_bound(make_profile("zoh", 1), 2.0).size == 0


def test_intra_window_bound_rejects_bad_amax():
    """Non-positive action bounds raise ParameterError."""
    with pytest.raises(ParameterError):
        intra_window_bound(make_profile("zoh", 2), 0.0)


# --- Tests for long executed streams ---


def test_zoh_stream_query_count_and_flat_windows():
    """10,000 steps at h=3 make 3,334 queries and never move inside a window."""
    refs = np.random.default_rng(1).uniform(-1, 1, size=(4000, 1))
    provider = CountingProvider(refs)
    u, cache = _run(make_profile("zoh", 3), provider, 10_000, a_max=1.0)
    assert provider.calls == 3334
    assert cache.queries == 3334
    deltas = np.abs(np.diff(u[:, 0]))
    intra = np.array([t % 3 != 0 for t in range(1, 10_000)])
    assert np.all(deltas[intra] == 0.0)


def test_decay_stream_respects_intra_window_bound():
    """Every intra-window change under h=3 decay stays within a_max / 3."""
    refs = np.random.default_rng(2).uniform(-1, 1, size=(4000, 1))
    u, _ = _run(make_profile("decay", 3), CountingProvider(refs), 10_000, a_max=1.0)
    deltas = np.abs(np.diff(u[:, 0]))
    intra = np.array([t % 3 != 0 for t in range(1, 10_000)])
    assert deltas[intra].max() <= 1.0 / 3.0 + 1e-12
