"""
Episode storage and sequence sampling.

The buffer holds whole episodes in a ring (oldest dropped first). One
collector appends while one learner samples; both go through a lock, so a
sample never sees a half-added episode.
"""

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np

from agent.world_model import SequenceBatch
from errors import InsufficientDataError, ShapeError


@dataclass(frozen=True)
class Episode:
    """
    Index 0 is the reset observation with a zero action; index t > 0 is the
    observation after action a_{t-1}, its reward, and the window the actor used
    to choose a_{t-1}. `ends` flags terminal states; a step limit is not one.
    """

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    targets: np.ndarray
    ends: np.ndarray
    trajectory: str = ""

    def __post_init__(self):
        n = len(self.rewards)
        for name in ("observations", "actions", "targets", "ends"):
            if len(getattr(self, name)) != n:
                raise ShapeError(f"episode {name} has {len(getattr(self, name))} entries, expected {n}")
        for name in ("observations", "actions", "rewards", "targets", "ends"):
            getattr(self, name).flags.writeable = False

    def __len__(self) -> int:
        return len(self.rewards)

    def slice(self, offset: int, length: int) -> dict[str, np.ndarray]:
        end = offset + length
        return {
            "observations": self.observations[offset:end],
            "actions": self.actions[offset:end],
            "rewards": self.rewards[offset:end],
            "targets": self.targets[offset:end],
            "ends": self.ends[offset:end],
        }

    @property
    def total_reward(self) -> float:
        return float(self.rewards[1:].sum())


class ReplayBuffer:
    def __init__(self, capacity: int):
        self.capacity = capacity
        self._episodes: deque[Episode] = deque(maxlen=capacity)
        self._lock = threading.Lock()
        self._added = 0

    def add(self, episode: Episode) -> None:
        with self._lock:
            self._episodes.append(episode)
            self._added += 1

    def __len__(self) -> int:
        with self._lock:
            return len(self._episodes)

    @property
    def episodes_added(self) -> int:
        with self._lock:
            return self._added

    def episodes(self) -> list[Episode]:
        with self._lock:
            return list(self._episodes)

    def sample_slices(self, batch_size: int, length: int, rng: np.random.Generator) -> list[tuple[Episode, int]]:
        """(episode, offset) pairs drawn uniformly over every valid pair in the buffer."""
        with self._lock:
            episodes = [ep for ep in self._episodes if len(ep) >= length]
        if not episodes:
            raise InsufficientDataError(f"no stored episode holds {length} steps")
        counts = np.array([len(ep) - length + 1 for ep in episodes], dtype=np.float64)
        chosen = rng.choice(len(episodes), size=batch_size, p=counts / counts.sum())
        return [(episodes[i], int(rng.integers(0, counts[i]))) for i in chosen]


def buffer_sample(buffer: ReplayBuffer, batch_size: int, length: int, rng: np.random.Generator) -> SequenceBatch:
    slices = [episode.slice(offset, length) for episode, offset in buffer.sample_slices(batch_size, length, rng)]
    return SequenceBatch(**{key: np.stack([s[key] for s in slices]) for key in slices[0]})
