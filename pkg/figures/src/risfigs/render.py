"""Deterministic figure rendering from sweep CSV files.

Reads the harness CSV outputs ('#'-comment headers, documented columns) and
regenerates presentation figures: log-scale RMSE/bound line sweeps,
per-iteration convergence traces, and 2-D element-grid mask heatmaps.  The
renderer performs no numerical transformation of the data beyond axis
scaling; byte-stable output is part of the contract so figures can be
golden-tested.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
import pandas as pd

KINDS = ("line-sweep", "iteration-trace", "mask-heatmap")

# pinned style so the same inputs always produce the same bytes
_RC = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.5,
    "legend.fontsize": 9,
    "svg.hashsalt": "risfigs",
}

_MARKERS = ["o", "s", "^", "d", "v", "*", "x"]


class MissingColumnError(KeyError):
    """A referenced CSV column does not exist."""


@dataclass(frozen=True)
class FigureSpec:
    """Declarative description of one figure.

    ``x`` / ``y`` name CSV columns; ``group_by`` optionally splits rows into
    one line per distinct value (e.g. per estimator).  For mask heatmaps the
    ``y`` entries are the per-element columns to show as panels.
    """

    inputs: Tuple[str, ...]
    kind: str
    x: str
    y: Tuple[str, ...]
    output: str
    group_by: Optional[str] = None
    logx: bool = False
    logy: bool = False
    xlabel: Optional[str] = None
    ylabel: Optional[str] = None
    title: Optional[str] = None
    labels: Tuple[str, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")
        if not self.y:
            raise ValueError("at least one y column is required")
        object.__setattr__(self, "inputs", tuple(str(p) for p in self.inputs))
        object.__setattr__(self, "y", tuple(self.y))
        object.__setattr__(self, "labels", tuple(self.labels))


def load_table(path) -> pd.DataFrame:
    """Load one harness CSV ('#'-prefixed comment lines are the unit block)."""
    return pd.read_csv(path, comment="#")


def _require_columns(df: pd.DataFrame, cols: Sequence[str], path: str) -> None:
    missing = [c for c in cols if c not in df.columns]
    if missing:
        raise MissingColumnError(f"{path}: missing column(s) {missing}")


def _load_inputs(spec: FigureSpec) -> pd.DataFrame:
    frames = []
    needed = [spec.x, *spec.y]
    if spec.group_by:
        needed.append(spec.group_by)
    for path in spec.inputs:
        df = load_table(path)
        _require_columns(df, needed, path)
        frames.append(df)
    return pd.concat(frames, ignore_index=True)


def _render_line_sweep(spec: FigureSpec, df: pd.DataFrame, ax) -> None:
    if spec.group_by:
        keys = list(dict.fromkeys(df[spec.group_by]))
        groups = [(str(k), df[df[spec.group_by] == k]) for k in keys]
    else:
        groups = [("", df)]
    idx = 0
    for gname, gdf in groups:
        gdf = gdf.sort_values(spec.x, kind="mergesort")
        for ci, col in enumerate(spec.y):
            if idx < len(spec.labels):
                label = spec.labels[idx]
            else:
                label = f"{gname} {col}".strip()
            ax.plot(
                gdf[spec.x].to_numpy(),
                gdf[col].to_numpy(),
                marker=_MARKERS[idx % len(_MARKERS)],
                linestyle="--" if col.startswith("sqrt_") else "-",
                label=label,
            )
            idx += 1
    if idx > 1:
        ax.legend()


def _render_iteration_trace(spec: FigureSpec, df: pd.DataFrame, ax) -> None:
    col = spec.y[0]
    if "trial" in df.columns:
        for _, tdf in df.groupby("trial", sort=True):
            tdf = tdf.sort_values(spec.x, kind="mergesort")
            ax.plot(
                tdf[spec.x].to_numpy(),
                tdf[col].to_numpy(),
                color="0.75",
                linewidth=0.6,
                zorder=1,
            )
    # ensemble root-mean-square overlay per iteration
    agg = (
        df.assign(_sq=df[col] ** 2)
        .groupby(spec.x, sort=True)["_sq"]
        .mean()
        .pipe(np.sqrt)
    )
    ax.plot(
        agg.index.to_numpy(),
        agg.to_numpy(),
        color="C3",
        marker="o",
        zorder=2,
        label="ensemble RMS",
    )
    ax.legend()


def _render_mask_heatmap(spec: FigureSpec, df: pd.DataFrame, fig) -> None:
    # per-element columns plotted over the physical 2-D element grid
    _require_columns(df, ["x", "y"], spec.inputs[0])
    xs = np.sort(df["x"].unique())
    ys = np.sort(df["y"].unique())
    vmin = min(df[c].min() for c in spec.y)
    vmax = max(df[c].max() for c in spec.y)
    axes = fig.subplots(1, len(spec.y), squeeze=False)[0]
    for ax, col in zip(axes, spec.y):
        grid = np.full((ys.size, xs.size), np.nan)
        xi = np.searchsorted(xs, df["x"].to_numpy())
        yi = np.searchsorted(ys, df["y"].to_numpy())
        grid[yi, xi] = df[col].to_numpy()
        im = ax.imshow(
            grid,
            origin="lower",
            extent=(xs[0], xs[-1], ys[0], ys[-1]),
            vmin=vmin,
            vmax=vmax,
            cmap="viridis",
            aspect="equal",
        )
        ax.set_title(col)
        ax.set_xlabel("x (m)")
    axes[0].set_ylabel("y (m)")
    fig.colorbar(im, ax=list(axes), shrink=0.8)


def render(spec: FigureSpec) -> Path:
    """Produce the figure file described by ``spec`` and return its path."""
    df = _load_inputs(spec)
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context(_RC):
        fig = plt.figure()
        if spec.kind == "mask-heatmap":
            _render_mask_heatmap(spec, df, fig)
        else:
            ax = fig.add_subplot(111)
            if spec.kind == "line-sweep":
                _render_line_sweep(spec, df, ax)
            else:
                _render_iteration_trace(spec, df, ax)
            if spec.logx:
                ax.set_xscale("log")
            if spec.logy:
                ax.set_yscale("log")
            ax.set_xlabel(spec.xlabel or spec.x)
            ax.set_ylabel(spec.ylabel or ", ".join(spec.y))
        if spec.title:
            fig.suptitle(spec.title)
        # fixed metadata keeps the output byte-stable across runs
        fig.savefig(out, metadata=_stable_metadata(out))
        plt.close(fig)
    return out


def _stable_metadata(path: Path) -> dict:
    suffix = path.suffix.lower()
    if suffix == ".png":
        return {"Software": "risfigs"}
    if suffix == ".svg":
        return {"Date": None, "Creator": "risfigs"}
    return {}
