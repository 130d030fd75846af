import threading

import numpy as np
import pytest

from errors import InsufficientDataError, ShapeError
from training.replay import Episode, ReplayBuffer, buffer_sample
from training.snapshots import SnapshotStore


def numbered_episode(length: int, start: float = 0.0, name: str = "") -> Episode:
    """Every field carries its step index (plus `start`) so slices can be checked."""
    steps = start + np.arange(length, dtype=np.float64)
    ends = np.zeros(length)
    ends[-1] = 1.0
    return Episode(
        observations=np.repeat(steps[:, None], 4, axis=1),
        actions=np.repeat(steps[:, None], 2, axis=1),
        rewards=steps.copy(),
        targets=np.repeat(steps[:, None], 6, axis=1),
        ends=ends,
        trajectory=name,
    )


class TestEpisode:
    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            Episode(np.zeros((5, 4)), np.zeros((4, 2)), np.zeros(5), np.zeros((5, 6)), np.zeros(5))

    def test_arrays_are_read_only(self):
        episode = numbered_episode(5)
        with pytest.raises(ValueError):
            episode.rewards[0] = 1.0

    def test_total_reward_skips_reset_step(self):
        assert numbered_episode(4).total_reward == 1.0 + 2.0 + 3.0


class TestReplayBuffer:
    def test_empty_buffer(self, rng):
        with pytest.raises(InsufficientDataError):
            buffer_sample(ReplayBuffer(5), 2, 10, rng)

    def test_episodes_too_short(self, rng):
        buffer = ReplayBuffer(5)
        buffer.add(numbered_episode(8))
        with pytest.raises(InsufficientDataError):
            buffer_sample(buffer, 2, 10, rng)

    def test_ring_drops_oldest(self):
        buffer = ReplayBuffer(2)
        for i in range(3):
            buffer.add(numbered_episode(5, name=f"ep{i}"))
        assert len(buffer) == 2
        assert buffer.episodes_added == 3
        assert [ep.trajectory for ep in buffer.episodes()] == ["ep1", "ep2"]

    def test_slices_are_contiguous(self, rng):
        buffer = ReplayBuffer(5)
        buffer.add(numbered_episode(30))
        buffer.add(numbered_episode(40, start=1000.0))
        batch = buffer_sample(buffer, 16, 10, rng)
        assert batch.observations.shape == (16, 10, 4)
        assert batch.targets.shape == (16, 10, 6)
        for row in range(16):
            first = batch.rewards[row, 0]
            np.testing.assert_array_equal(batch.rewards[row], first + np.arange(10))
            np.testing.assert_array_equal(batch.observations[row, :, 0], batch.rewards[row])
            np.testing.assert_array_equal(batch.actions[row, :, 1], batch.rewards[row])

    def test_single_sequence(self, rng):
        buffer = ReplayBuffer(1)
        buffer.add(numbered_episode(12))
        batch = buffer_sample(buffer, 1, 12, rng)
        np.testing.assert_array_equal(batch.rewards[0], np.arange(12))
        assert batch.ends[0, -1] == 1.0

    def test_offsets_are_uniform(self):
        buffer = ReplayBuffer(1)
        buffer.add(numbered_episode(60))
        draws = 11_000
        pairs = buffer.sample_slices(draws, 50, np.random.default_rng(42))
        counts = np.bincount([offset for _, offset in pairs], minlength=11)
        assert len(counts) == 11
        expected = draws / 11
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # 10 degrees of freedom, p = 0.01
        assert chi2 < 23.209


class TestSnapshots:
    def test_publish_bumps_version(self):
        store = SnapshotStore({"wm/w": np.zeros(2)})
        assert store.latest().version == 0
        assert store.publish(actor={"actor/w": np.ones(3)}) == 1
        snapshot = store.latest()
        assert set(snapshot.params) == {"wm/w", "actor/w"}
        assert set(snapshot.select("actor/")) == {"actor/w"}

    def test_published_arrays_are_frozen_copies(self):
        source = np.zeros(3)
        store = SnapshotStore()
        store.publish(wm={"wm/w": source})
        source[0] = 5.0
        held = store.latest().params["wm/w"]
        assert held[0] == 0.0
        with pytest.raises(ValueError):
            held[1] = 1.0

    def test_old_snapshot_survives_publish(self):
        store = SnapshotStore({"wm/w": np.zeros(2)})
        old = store.latest()
        store.publish(wm={"wm/w": np.ones(2)})
        np.testing.assert_array_equal(old.params["wm/w"], 0.0)

    def test_readers_never_see_a_mix(self):
        store = SnapshotStore({"wm/a": np.zeros(4), "actor/b": np.zeros(4)})
        stop = threading.Event()

        def writer():
            for version in range(1, 500):
                value = np.full(4, float(version))
                store.publish(wm={"wm/a": value}, actor={"actor/b": value})
            stop.set()

        thread = threading.Thread(target=writer)
        thread.start()
        while not stop.is_set():
            snapshot = store.latest()
            np.testing.assert_array_equal(snapshot.params["wm/a"], snapshot.params["actor/b"])
        thread.join()
        assert store.latest().version == 499
