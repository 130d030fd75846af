"""
Result tables and figures.

Tables are pandas DataFrames written as CSV. Figures are standalone plotly
HTML files; nothing is shown interactively.
"""

from pathlib import Path

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from errors import ShapeError

BLUE = "#2196F3"
RED = "#F44336"
GREEN = "#4CAF50"
SUMMARY_LABEL = "mean ± std"


# ── Helper: format MSE ─────────────────────────────────────────────────────────
def fmt(value: float) -> str:
    if abs(value) >= 10:
        return f"{value:,.0f}"
    if abs(value) >= 0.1:
        return f"{value:.2f}"
    return f"{value:.4f}"


def fmt_mean_std(values) -> str:
    """Summary like "86 ± 36" (population std)."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        raise ShapeError("no values to summarize")
    return f"{fmt(values.mean())} ± {fmt(values.std())}"


def mse_table(names: list[str], columns: dict[str, list[float]]) -> pd.DataFrame:
    """One row per trajectory; `columns` maps a controller label to its MSE per trajectory."""
    for label, values in columns.items():
        if len(values) != len(names):
            raise ShapeError(f"{label}: {len(values)} MSE values for {len(names)} trajectories")
    return pd.DataFrame({"trajectory": names, **{k: np.asarray(v, dtype=np.float64) for k, v in columns.items()}})


def with_summary(table: pd.DataFrame) -> pd.DataFrame:
    """Formatted copy of an MSE table with a trailing mean ± std row."""
    numeric = [c for c in table.columns if c != "trajectory"]
    shown = table.copy()
    for column in numeric:
        shown[column] = table[column].map(fmt)
    summary = {"trajectory": SUMMARY_LABEL, **{c: fmt_mean_std(table[c]) for c in numeric}}
    return pd.concat([shown, pd.DataFrame([summary])], ignore_index=True)


def write_table(path: str | Path, table: pd.DataFrame) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(path, index=False)
    return path


def read_metrics(path: str | Path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists() or not path.read_text().strip():
        return pd.DataFrame(columns=["step", "kind", "learner_step"])
    return pd.read_json(path, lines=True)


# ── Figures ────────────────────────────────────────────────────────────────────
def _style(fig: go.Figure, title: str, yaxis_title: str, xaxis_title: str = "step", height: int = 400) -> go.Figure:
    fig.update_layout(
        title=title,
        xaxis_title=xaxis_title,
        yaxis_title=yaxis_title,
        plot_bgcolor="rgba(0,0,0,0)",
        paper_bgcolor="rgba(0,0,0,0)",
        height=height,
    )
    return fig


def tracking_figure(name: str, target_deg, traces: dict[str, np.ndarray]) -> go.Figure:
    """Target angle and each controller's measured angle over the trajectory."""
    steps = np.arange(len(target_deg))
    fig = go.Figure()
    fig.add_trace(go.Scatter(name="target", x=steps, y=np.asarray(target_deg), line={"color": GREEN, "dash": "dash"}))
    colors = [BLUE, RED]
    for i, (label, angles) in enumerate(traces.items()):
        fig.add_trace(go.Scatter(name=label, x=steps, y=np.asarray(angles), line={"color": colors[i % len(colors)]}))
    return _style(fig, f"Tracking: {name}", "angle (deg)")


def rollout_figure(frame: pd.DataFrame, agreement: float) -> go.Figure:
    fig = go.Figure()
    fig.add_trace(go.Scatter(name="actual", x=frame["step"], y=frame["actual_deg"], line={"color": BLUE}))
    fig.add_trace(go.Scatter(name="world model", x=frame["step"], y=frame["predicted_deg"], line={"color": RED}))
    return _style(fig, f"Open-loop world model vs plant (direction agreement {agreement:.0%})", "angle (deg)")


def training_curve(metrics: pd.DataFrame) -> go.Figure:
    fig = go.Figure()
    if "kind" in metrics and len(metrics):
        wm = metrics[metrics["kind"] == "wm"]
        if len(wm):
            fig.add_trace(go.Scatter(name="world-model loss", x=wm["learner_step"], y=wm["wm_loss"],
                                     line={"color": BLUE}))
        evals = metrics[metrics["kind"] == "eval"]
        if len(evals):
            fig.add_trace(go.Scatter(name="held-out MSE", x=evals["learner_step"], y=evals["eval_mse"],
                                     line={"color": RED}, yaxis="y2", mode="lines+markers"))
            fig.update_layout(yaxis2={"title": "MSE (deg²)", "overlaying": "y", "side": "right"})
    return _style(fig, "Training", "loss", xaxis_title="learner step")


def write_figure(path: str | Path, fig: go.Figure) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(path, include_plotlyjs="cdn")
    return path
