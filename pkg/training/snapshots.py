"""
Atomic parameter snapshots shared between the learner(s) and the collector.

A snapshot is one read-only mapping of every agent parameter ("wm/...",
"actor/...", "critic/..."). Publishing swaps the whole mapping under a lock,
so readers get either the previous set or the new one, never a mix.
"""

import threading
from dataclasses import dataclass
from types import MappingProxyType
from typing import Mapping

import numpy as np


@dataclass(frozen=True)
class ParameterSnapshot:
    version: int
    params: Mapping[str, np.ndarray]

    def select(self, prefix: str) -> dict[str, np.ndarray]:
        return {k: v for k, v in self.params.items() if k.startswith(prefix)}


def _freeze(params: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    frozen = {}
    for name, value in params.items():
        if value.flags.writeable:
            value = value.copy()
            value.flags.writeable = False
        frozen[name] = value
    return frozen


class SnapshotStore:
    def __init__(self, params: Mapping[str, np.ndarray] | None = None):
        self._lock = threading.Lock()
        self._snapshot = ParameterSnapshot(0, MappingProxyType(_freeze(params or {})))

    def publish(self, **groups: Mapping[str, np.ndarray]) -> int:
        """Replace some parameter groups (e.g. wm=..., actor=...) and bump the version."""
        update = {}
        for group in groups.values():
            update.update(_freeze(group))
        with self._lock:
            merged = {**self._snapshot.params, **update}
            self._snapshot = ParameterSnapshot(self._snapshot.version + 1, MappingProxyType(merged))
            return self._snapshot.version

    def latest(self) -> ParameterSnapshot:
        with self._lock:
            return self._snapshot
