"""Figure layouts, one renderer per preset family.

Every renderer takes the artifact directory of the matching nfa-lab preset and
returns a matplotlib Figure.  Cell labels, seeds, scales, and decay rates are
read from the run manifest rather than hard-coded, so scaled-down runs of the
same preset render identically structured figures.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg", force=False)

import matplotlib.pyplot as plt
import numpy as np

from . import io
from .io import ArtifactError

_HEAT_CMAP = "RdBu_r"
_MATRIX_PANELS = ("nfm", "agop", "corrupted", "egop")
_PANEL_TITLES = {
    "nfm": "NFM",
    "agop": "AGOP",
    "corrupted": "corrupted PTK",
    "egop": "EGOP",
}


def _config(artifact_dir: Path) -> dict:
    return io.load_json(artifact_dir / "manifest.json")["config"]


def _fmt_scale(s0: float) -> str:
    return "s0=%g" % s0


def _aggregate(artifact_dir: Path):
    path = artifact_dir / "aggregate.csv"
    return io.read_table(path), path


def _cell_seed_curves(table, path, cell: str, seeds, value: str, layer: int = 0):
    """Per-seed (steps, values) curves for one cell/layer/metric column."""
    cells = io.text_column(table, "cell", path)
    seed_col = io.column(table, "seed", path)
    steps = io.column(table, "step", path)
    layers = io.column(table, "layer", path)
    values = io.column(table, value, path)
    curves = {}
    for seed in seeds:
        keep = [
            i
            for i in range(len(cells))
            if cells[i] == cell and seed_col[i] == seed and layers[i] == layer
        ]
        if not keep:
            raise ArtifactError(f"{path}: no rows for cell {cell!r}, seed {seed}, layer {layer}")
        curves[seed] = (steps[keep], values[keep])
    return curves


def _seed_mean(curves):
    steps = next(iter(curves.values()))[0]
    stack = np.stack([v for _, v in curves.values()])
    return steps, stack.mean(axis=0)


def _plot_metric_panel(ax, table, path, cells, seeds, value, labels, styles, layer=0):
    for cell in cells:
        curves = _cell_seed_curves(table, path, cell, seeds, value, layer=layer)
        steps, mean = _seed_mean(curves)
        ax.plot(steps, mean, label=labels[cell], **styles.get(cell, {}))
    ax.set_xlabel("step")
    ax.set_ylabel(value)
    ax.legend(fontsize=8)


def _symmetric_heat_row(axes, matrices, row_label: str | None = None):
    """Heatmaps on one row of axes sharing one symmetric color scale."""
    vmax = max(np.abs(m).max() for m in matrices.values()) or 1.0
    for ax, (name, m) in zip(axes, matrices.items()):
        im = ax.imshow(m, cmap=_HEAT_CMAP, vmin=-vmax, vmax=vmax)
        ax.set_title(_PANEL_TITLES[name], fontsize=9)
        ax.set_xticks([])
        ax.set_yticks([])
    if row_label is not None:
        axes[0].set_ylabel(row_label, fontsize=10)
    return im


def _matrix_row(artifact_dir: Path, tag: str) -> dict[str, np.ndarray]:
    return {
        name: io.load_matrix(artifact_dir / f"{tag}_{name}.csv") for name in _MATRIX_PANELS
    }


# ------------------------------------------------------------------ figures


def render_fig1(artifact_dir: Path):
    """One row of first-layer matrix heatmaps for the first seed, plus the
    measured correlations in the panel titles."""
    config = _config(artifact_dir)
    seed = config["seeds"][0]
    cell = config["cells"][0]["label"]
    tag = f"{cell}_seed{seed}"
    matrices = _matrix_row(artifact_dir, tag)
    corr_path = artifact_dir / "correlations.csv"
    corr = io.read_table(corr_path)
    row = io.column(corr, "seed", corr_path).tolist().index(seed)
    rho = {
        name: io.column(corr, f"rho_nfm_{name}", corr_path)[row]
        for name in ("agop", "corrupted", "egop")
    }
    fig, axes = plt.subplots(1, 4, figsize=(11, 3))
    im = _symmetric_heat_row(axes, matrices)
    for name in ("agop", "corrupted", "egop"):
        idx = _MATRIX_PANELS.index(name)
        axes[idx].set_xlabel(f"rho(NFM, .) = {rho[name]:.3f}", fontsize=8)
    fig.colorbar(im, ax=axes, shrink=0.8)
    fig.suptitle(f"first-layer feature matrices, seed {seed}")
    return fig


def render_fig2(artifact_dir: Path):
    """First-layer UC-NFA and C-NFA training curves, one line per init scale."""
    config = _config(artifact_dir)
    table, path = _aggregate(artifact_dir)
    cells = [c["label"] for c in config["cells"]]
    labels = {c["label"]: _fmt_scale(c["model"]["init_scales"][0]) for c in config["cells"]}
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    for ax, value in zip(axes, ("uc_nfa", "c_nfa")):
        _plot_metric_panel(ax, table, path, cells, config["seeds"], value, labels, {})
        ax.set_ylim(-0.05, 1.05)
    fig.tight_layout()
    return fig


def render_fig3(artifact_dir: Path):
    """Observed-vs-gamma curves (thin per seed, bold mean, dashed prediction)
    and a rightmost predicted-vs-observed scatter."""
    path = artifact_dir / "sweep.csv"
    table = io.read_table(path)
    gammas = io.column(table, "gamma", path)
    seeds = io.column(table, "seed", path)
    predicted = io.column(table, "predicted", path)
    observed = io.column(table, "observed", path)
    fig, (ax_curves, ax_scatter) = plt.subplots(1, 2, figsize=(9, 3.5))
    grid = np.unique(gammas)
    for seed in np.unique(seeds):
        keep = seeds == seed
        order = np.argsort(gammas[keep])
        ax_curves.plot(
            gammas[keep][order], observed[keep][order], color="C0", alpha=0.35, lw=1
        )
    mean_obs = np.array([observed[gammas == g].mean() for g in grid])
    mean_pred = np.array([predicted[gammas == g].mean() for g in grid])
    ax_curves.plot(grid, mean_obs, color="C0", marker="o", label="observed (mean)")
    ax_curves.plot(grid, mean_pred, color="C1", ls="--", marker="s", label="predicted")
    ax_curves.set_xlabel("gamma")
    ax_curves.set_ylabel("correlation")
    ax_curves.legend(fontsize=8)
    ax_scatter.scatter(predicted, observed, s=14, alpha=0.8)
    lim = [
        min(np.nanmin(predicted), np.nanmin(observed)),
        max(np.nanmax(predicted), np.nanmax(observed)),
    ]
    ax_scatter.plot(lim, lim, color="gray", lw=1, ls=":")
    ax_scatter.set_xlabel("predicted")
    ax_scatter.set_ylabel("observed")
    fig.tight_layout()
    return fig


def render_fig4(artifact_dir: Path):
    """c_uc_ratio and UC-NFA curves, solid for the speed-limited runs and
    dashed for plain GD, colored by init scale."""
    config = _config(artifact_dir)
    table, path = _aggregate(artifact_dir)
    scales = sorted(
        {c["model"]["init_scales"][0] for c in config["cells"]}, reverse=True
    )
    color = {s0: f"C{i}" for i, s0 in enumerate(scales)}
    labels, styles = {}, {}
    for cell in config["cells"]:
        s0 = cell["model"]["init_scales"][0]
        variant = cell["optimizer"]["variant"]
        labels[cell["label"]] = f"{variant} {_fmt_scale(s0)}"
        styles[cell["label"]] = {
            "color": color[s0],
            "ls": "-" if variant != "gd" else "--",
        }
    cells = [c["label"] for c in config["cells"]]
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5), sharex=True)
    for ax, value in zip(axes, ("c_uc_ratio", "uc_nfa")):
        _plot_metric_panel(ax, table, path, cells, config["seeds"], value, labels, styles)
    axes[0].axhline(1.0, color="gray", lw=0.8, ls=":")
    fig.tight_layout()
    return fig


def render_fig5(artifact_dir: Path):
    """Two heatmap rows (one per optimizer cell), each row sharing its own
    symmetric color scale."""
    config = _config(artifact_dir)
    seed = config["seeds"][0]
    cells = [c["label"] for c in config["cells"]]
    fig, axes = plt.subplots(len(cells), 4, figsize=(11, 2.8 * len(cells)))
    axes = np.atleast_2d(axes)
    for row, cell in enumerate(cells):
        matrices = _matrix_row(artifact_dir, f"{cell}_seed{seed}")
        _symmetric_heat_row(axes[row], matrices, row_label=cell)
    fig.suptitle(f"first-layer feature matrices, seed {seed}")
    return fig


def render_appB(artifact_dir: Path):
    """Higher-order alignment shares: dc_ratio and ptk_c_nfa curves per cell."""
    config = _config(artifact_dir)
    table, path = _aggregate(artifact_dir)
    cells = [c["label"] for c in config["cells"]]
    labels = {c: c for c in cells}
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharex=True)
    for ax, value in zip(axes, ("dc_ratio", "ptk_c_nfa")):
        _plot_metric_panel(ax, table, path, cells, config["seeds"], value, labels, {})
    fig.tight_layout()
    return fig


def render_appC(artifact_dir: Path):
    """Predicted vs observed early alignment against the decay rate, one
    panel per activation, one line pair per width regime."""
    config = _config(artifact_dir)
    path = artifact_dir / "sweep.csv"
    table = io.read_table(path)
    acts = io.text_column(table, "activation", path)
    regimes = io.text_column(table, "regime", path)
    alphas = io.column(table, "alpha", path)
    predicted = io.column(table, "predicted", path)
    observed = io.column(table, "observed", path)
    activations = config["activations"]
    fig, axes = plt.subplots(1, len(activations), figsize=(4.5 * len(activations), 3.5))
    axes = np.atleast_1d(axes)
    for ax, act in zip(axes, activations):
        for i, regime in enumerate(sorted(config["regimes"])):
            keep = [
                j for j in range(len(acts)) if acts[j] == act and regimes[j] == regime
            ]
            grid = np.unique(alphas[keep])
            obs = np.array([observed[[j for j in keep if alphas[j] == g]].mean() for g in grid])
            pred = np.array([predicted[[j for j in keep if alphas[j] == g]].mean() for g in grid])
            ax.plot(grid, obs, color=f"C{i}", marker="o", label=f"{regime} observed")
            ax.plot(grid, pred, color=f"C{i}", ls="--", label=f"{regime} predicted")
        ax.set_title(act, fontsize=10)
        ax.set_xlabel("alpha")
        ax.set_ylabel("correlation")
        ax.legend(fontsize=7)
    fig.tight_layout()
    return fig


def render_appF(artifact_dir: Path):
    """C-NFA curves per init scale, one panel per data decay rate."""
    config = _config(artifact_dir)
    table, path = _aggregate(artifact_dir)
    alphas = sorted({c["dataset"].get("alpha") for c in config["cells"]}, key=str)
    scales = sorted(
        {c["model"]["init_scales"][0] for c in config["cells"]}, reverse=True
    )
    color = {s0: f"C{i}" for i, s0 in enumerate(scales)}
    fig, axes = plt.subplots(1, len(alphas), figsize=(4.5 * len(alphas), 3.5), sharey=True)
    axes = np.atleast_1d(axes)
    for ax, alpha in zip(axes, alphas):
        cells = [c for c in config["cells"] if c["dataset"].get("alpha") == alpha]
        labels = {c["label"]: _fmt_scale(c["model"]["init_scales"][0]) for c in cells}
        styles = {
            c["label"]: {"color": color[c["model"]["init_scales"][0]]} for c in cells
        }
        _plot_metric_panel(
            ax, table, path, [c["label"] for c in cells], config["seeds"],
            "c_nfa", labels, styles,
        )
        ax.set_title(f"alpha={alpha}", fontsize=10)
    fig.tight_layout()
    return fig


def render_appI(artifact_dir: Path):
    """Per-layer UC-NFA curves, one panel per optimizer cell."""
    config = _config(artifact_dir)
    table, path = _aggregate(artifact_dir)
    n_layers = len(config["cells"][0]["model"]["widths"]) - 1
    fig, axes = plt.subplots(
        1, len(config["cells"]), figsize=(4.5 * len(config["cells"]), 3.5), sharey=True
    )
    axes = np.atleast_1d(axes)
    for ax, cell in zip(axes, config["cells"]):
        for layer in range(n_layers):
            curves = _cell_seed_curves(
                table, path, cell["label"], config["seeds"], "uc_nfa", layer=layer
            )
            steps, mean = _seed_mean(curves)
            ax.plot(steps, mean, label=f"layer {layer}")
        ax.set_title(cell["label"], fontsize=10)
        ax.set_xlabel("step")
        ax.set_ylabel("uc_nfa")
        ax.legend(fontsize=8)
    fig.tight_layout()
    return fig


FIGURES = {
    "fig1": render_fig1,
    "fig2": render_fig2,
    "fig3": render_fig3,
    "fig4": render_fig4,
    "fig5": render_fig5,
    "appB": render_appB,
    "appC": render_appC,
    "appF": render_appF,
    "appI": render_appI,
}


def render(artifact_dir: str | Path, figure: str):
    """Render one named figure from an artifact directory."""
    if figure not in FIGURES:
        raise KeyError(f"unknown figure {figure!r}; available: {', '.join(FIGURES)}")
    return FIGURES[figure](Path(artifact_dir))
