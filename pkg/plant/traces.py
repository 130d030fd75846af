"""
Per-step episode traces as CSV.

Columns: step, theta_deg, theta_dot_dps, p1_kpa, p2_kpa, a1_kpa, a2_kpa
(observation after the step, then the action that produced it).
"""

from pathlib import Path

import numpy as np
import pandas as pd

TRACE_COLUMNS = ["step", "theta_deg", "theta_dot_dps", "p1_kpa", "p2_kpa", "a1_kpa", "a2_kpa"]


def trace_frame(observations: np.ndarray, actions: np.ndarray, targets: np.ndarray | None = None) -> pd.DataFrame:
    """`observations` (T, 4) and `actions` (T, 2); optional target angles add a target_deg column."""
    observations = np.asarray(observations)
    actions = np.asarray(actions)
    df = pd.DataFrame({
        "step": np.arange(len(observations)),
        "theta_deg": observations[:, 0],
        "theta_dot_dps": observations[:, 1],
        "p1_kpa": observations[:, 2],
        "p2_kpa": observations[:, 3],
        "a1_kpa": actions[:, 0],
        "a2_kpa": actions[:, 1],
    }, columns=TRACE_COLUMNS)
    if targets is not None:
        df["target_deg"] = np.asarray(targets)
    return df


def write_trace_csv(path: str | Path, frame: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f")
    return path
