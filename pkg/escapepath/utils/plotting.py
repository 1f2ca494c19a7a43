"""Optional HTML figures (plotly is imported only when a figure is requested)."""
from typing import Optional, Sequence

import numpy as np

from ..core.model import Path


def _plotly():
    import plotly.graph_objects as go
    return go


def plot_paths(filename: str, paths: Sequence[Path], names: Sequence[str],
               title: str = "Escape paths") -> str:
    """Phase-plane plot (x1 against x2) of several paths."""
    go = _plotly()
    figure = go.Figure()
    for path, name in zip(paths, names):
        y = path.states[:, 1] if path.d > 1 else np.zeros(len(path))
        figure.add_trace(go.Scatter(x=path.states[:, 0], y=y, mode="lines", name=name))
    figure.update_layout(title=title, xaxis_title="x1", yaxis_title="x2")
    figure.write_html(filename, include_plotlyjs="cdn")
    return filename


def plot_sweep(filename: str, mus: Sequence[float], remainders: Sequence[float],
               slope: Optional[float] = None, intercept: Optional[float] = None) -> str:
    """Log-log plot of the remainder against mu with the fitted line."""
    go = _plotly()
    mus = np.asarray(mus, dtype=float)
    figure = go.Figure()
    figure.add_trace(go.Scatter(x=mus, y=remainders, mode="markers", name="R"))
    if slope is not None and intercept is not None and np.isfinite(slope):
        figure.add_trace(go.Scatter(x=mus, y=np.exp(intercept) * mus ** slope, mode="lines",
                                    name=f"fit, slope {slope:.3f}"))
    figure.update_layout(title="Second-order remainder", xaxis_type="log", yaxis_type="log",
                         xaxis_title="mu", yaxis_title="R")
    figure.write_html(filename, include_plotlyjs="cdn")
    return filename
