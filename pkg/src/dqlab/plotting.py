"""Learning-curve figures from the metrics CSV.

One SVG per metric; each method gets a mean curve (SVG group id
``curve-<method>``) and a shaded +-1 sd band across seeds. Output bytes are
deterministic for identical input.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import aggregate_seeds  # noqa: E402

METHOD_COLORS = {
    "naive": "#d62728",
    "transfer": "#1f77b4",
    "decoupled": "#2ca02c",
    "monolithic": "#7f7f7f",
}
PLOTTED_METRICS = ("mean_return", "mean_length", "crash_rate", "fixed_state_mean_q")
LABELS = {
    "mean_return": "evaluation return",
    "mean_length": "episode length",
    "crash_rate": "crash rate",
    "fixed_state_mean_q": "mean max Q on fixed states",
}

STYLE = {
    "font.size": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
    "svg.hashsalt": "dqlab",
    "svg.fonttype": "none",
    "path.simplify": False,
}


def metric_figure(rows, metric: str, phase: int = 2):
    curves = aggregate_seeds(rows, metric, phase=phase)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        for method in sorted(curves, key=lambda m: list(METHOD_COLORS).index(m)
                             if m in METHOD_COLORS else 99):
            c = curves[method]
            color = METHOD_COLORS.get(method, "black")
            band = ax.fill_between(c.episodes, c.mean - c.sd, c.mean + c.sd,
                                   color=color, alpha=0.2, linewidth=0)
            band.set_gid(f"band-{method}")
            (line,) = ax.plot(c.episodes, c.mean, color=color, linewidth=1.5,
                              label=f"{method} (n={c.n_seeds})")
            line.set_gid(f"curve-{method}")
        ax.set_xlabel(f"phase-{phase} episode")
        ax.set_ylabel(LABELS.get(metric, metric))
        ax.legend(loc="best")
        fig.tight_layout()
    return fig


def figure_paths(out: str | Path, metrics=PLOTTED_METRICS) -> dict[str, Path]:
    """``results/curves.svg`` -> ``results/curves_<metric>.svg`` for each metric."""
    out = Path(out)
    stem = out.with_suffix("") if out.suffix == ".svg" else out / "curves"
    return {m: stem.parent / f"{stem.name}_{m}.svg" for m in metrics}


def save_figures(rows, out, phase: int = 2, metrics=PLOTTED_METRICS) -> list[Path]:
    paths = figure_paths(out, metrics)
    written = []
    for metric, path in paths.items():
        fig = metric_figure(rows, metric, phase)
        path.parent.mkdir(parents=True, exist_ok=True)
        with plt.rc_context(STYLE):
            fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
