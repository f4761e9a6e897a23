"""Structural checks for every figure: panel counts, axis labels, CLI wiring.

Fixture artifacts are generated once per session with nfa-lab at miniature
sizes; the renderers are manifest-driven, so the layouts match full-preset
runs exactly.
"""

import shutil
import subprocess
import sys

import matplotlib

matplotlib.use("Agg", force=True)

import numpy as np
import pytest

from nfa_lab import presets

import nfaplots
from nfaplots import figures, io
from nfaplots.io import ArtifactError

ALL_FIGURES = ["fig1", "fig2", "fig3", "fig4", "fig5", "appB", "appC", "appF", "appI"]


def _cell(label, *, s0=1.0, alpha=None, optimizer=None, widths=(6, 8, 1)):
    widths = list(widths)
    dataset = {"kind": "chain", "n": 16, "d": 6, "r": 3}
    if alpha is not None:
        dataset["alpha"] = alpha
    return {
        "label": label,
        "dataset": dataset,
        "model": {
            "widths": widths,
            "activation": "relu",
            "init_scales": [s0] + [1.0] * (len(widths) - 2),
        },
        "optimizer": optimizer or {"variant": "gd", "eta": 0.05},
        "steps": 4,
        "measure_every": 2,
    }


def _slo(n_layers):
    return {"variant": "slo", "eta": 0.05, "speeds": [1.0] * n_layers, "epsilon": 0.1}


def _training(name, cells, seeds=(0,), **extra):
    cfg = {"name": name, "kind": "training", "seeds": list(seeds), "cells": cells}
    cfg.update(extra)
    return cfg


def _run(config, tmp_path_factory):
    out = tmp_path_factory.mktemp(config["name"])
    return presets.run_config(config, out / "artifacts")


@pytest.fixture(scope="session")
def fig1_dir(tmp_path_factory):
    cfg = _training("mini-fig1", [_cell("run", s0=0.1)], seeds=(0, 1),
                    matrix_artifacts=True)
    return _run(cfg, tmp_path_factory)


@pytest.fixture(scope="session")
def fig2_dir(tmp_path_factory):
    cfg = _training("mini-fig2", [_cell("s1", s0=1.0), _cell("s0p1", s0=0.1)])
    return _run(cfg, tmp_path_factory)


@pytest.fixture(scope="session")
def fig3_dir(tmp_path_factory):
    cfg = {
        "name": "mini-fig3",
        "kind": "balance_sweep",
        "n": 48,
        "d": 8,
        "k": 16,
        "gammas": [0.25, 0.5, 1.0],
        "seeds": [0, 1],
        "n_net_seeds": 3,
        "eps1": 0.5,
        "eps2": 0.01,
        "label_shift": 1e-5,
    }
    return _run(cfg, tmp_path_factory)


@pytest.fixture(scope="session")
def fig4_dir(tmp_path_factory):
    cells = [
        _cell("gd_s1", s0=1.0),
        _cell("slo_s1", s0=1.0, optimizer=_slo(2)),
        _cell("gd_s0p1", s0=0.1),
        _cell("slo_s0p1", s0=0.1, optimizer=_slo(2)),
    ]
    return _run(_training("mini-fig4", cells), tmp_path_factory)


@pytest.fixture(scope="session")
def fig5_dir(tmp_path_factory):
    cells = [_cell("gd"), _cell("slo", optimizer=_slo(2))]
    return _run(_training("mini-fig5", cells, matrix_artifacts=True), tmp_path_factory)


@pytest.fixture(scope="session")
def appB_dir(tmp_path_factory):
    cells = [_cell("iso"), _cell("decay2", alpha=2.0)]
    return _run(_training("mini-appB", cells), tmp_path_factory)


@pytest.fixture(scope="session")
def appC_dir(tmp_path_factory):
    cfg = {
        "name": "mini-appC",
        "kind": "derivative_prediction",
        "n": 24,
        "d": 12,
        "r": 3,
        "alphas": [0.0, 1.0],
        "activations": ["quadratic", "relu"],
        "regimes": {"proportional": 12, "ntk": 24},
        "hidden_layers": 1,
        "n_mc_seeds": 2,
        "seeds": [0],
    }
    return _run(cfg, tmp_path_factory)


@pytest.fixture(scope="session")
def appF_dir(tmp_path_factory):
    cells = [
        _cell("a0_s1", s0=1.0, alpha=0.0),
        _cell("a0_s0p1", s0=0.1, alpha=0.0),
        _cell("a2_s1", s0=1.0, alpha=2.0),
        _cell("a2_s0p1", s0=0.1, alpha=2.0),
    ]
    return _run(_training("mini-appF", cells), tmp_path_factory)


@pytest.fixture(scope="session")
def appI_dir(tmp_path_factory):
    cells = [
        _cell("gd", widths=(6, 8, 8, 1)),
        _cell("slo", widths=(6, 8, 8, 1), optimizer=_slo(3)),
    ]
    return _run(_training("mini-appI", cells), tmp_path_factory)


# ---------------------------------------------------------------- registry


def test_registry_covers_every_preset_family():
    assert sorted(figures.FIGURES) == sorted(ALL_FIGURES)
    assert nfaplots.FIGURES is figures.FIGURES


def test_render_unknown_figure():
    with pytest.raises(KeyError, match="unknown figure 'fig9'.*fig1"):
        nfaplots.render("/nonexistent", "fig9")


# ------------------------------------------------------------- structure


def _axis_labels(fig):
    return [(ax.get_xlabel(), ax.get_ylabel()) for ax in fig.axes]


def test_fig1_structure(fig1_dir):
    fig = nfaplots.render(fig1_dir, "fig1")
    # four heatmap panels plus one colorbar axes
    assert len(fig.axes) == 5
    titles = [ax.get_title() for ax in fig.axes[:4]]
    assert titles == ["NFM", "AGOP", "corrupted PTK", "EGOP"]
    assert fig._suptitle.get_text() == "first-layer feature matrices, seed 0"
    for ax in fig.axes[1:4]:
        assert ax.get_xlabel().startswith("rho(NFM, .) = ")
    assert all(len(ax.images) == 1 for ax in fig.axes[:4])
    # one shared symmetric color scale across the row
    lo, hi = fig.axes[0].images[0].get_clim()
    assert lo == -hi
    assert all(ax.images[0].get_clim() == (lo, hi) for ax in fig.axes[:4])


def test_fig2_structure(fig2_dir):
    fig = nfaplots.render(fig2_dir, "fig2")
    assert _axis_labels(fig) == [("step", "uc_nfa"), ("step", "c_nfa")]
    for ax in fig.axes:
        assert [t.get_text() for t in ax.get_legend().get_texts()] == ["s0=1", "s0=0.1"]
        assert len(ax.lines) == 2
        assert ax.get_ylim() == (-0.05, 1.05)


def test_fig3_structure(fig3_dir):
    fig = nfaplots.render(fig3_dir, "fig3")
    curves, scatter = fig.axes
    assert (curves.get_xlabel(), curves.get_ylabel()) == ("gamma", "correlation")
    assert (scatter.get_xlabel(), scatter.get_ylabel()) == ("predicted", "observed")
    legend = [t.get_text() for t in curves.get_legend().get_texts()]
    assert legend == ["observed (mean)", "predicted"]
    # one thin curve per seed plus the mean and prediction lines
    assert len(curves.lines) == 2 + 2
    assert len(scatter.collections) == 1


def test_fig4_structure(fig4_dir):
    fig = nfaplots.render(fig4_dir, "fig4")
    assert _axis_labels(fig) == [("step", "c_uc_ratio"), ("step", "uc_nfa")]
    ratio_ax = fig.axes[0]
    legend = [t.get_text() for t in ratio_ax.get_legend().get_texts()]
    assert legend == ["gd s0=1", "slo s0=1", "gd s0=0.1", "slo s0=0.1"]
    # four cells plus the ratio=1 reference line
    assert len(ratio_ax.lines) == 5
    gd, slo = ratio_ax.lines[0], ratio_ax.lines[1]
    assert gd.get_linestyle() == "--" and slo.get_linestyle() == "-"
    assert gd.get_color() == slo.get_color()


def test_fig5_structure(fig5_dir):
    fig = nfaplots.render(fig5_dir, "fig5")
    assert len(fig.axes) == 2 * 4
    assert [ax.get_ylabel() for ax in fig.axes] == ["gd", "", "", "", "slo", "", "", ""]
    assert all(len(ax.images) == 1 for ax in fig.axes)
    # rows are scaled independently but symmetrically
    for row in (fig.axes[:4], fig.axes[4:]):
        lo, hi = row[0].images[0].get_clim()
        assert lo == -hi
        assert all(ax.images[0].get_clim() == (lo, hi) for ax in row)


def test_appB_structure(appB_dir):
    fig = nfaplots.render(appB_dir, "appB")
    assert _axis_labels(fig) == [("step", "dc_ratio"), ("step", "ptk_c_nfa")]
    for ax in fig.axes:
        assert [t.get_text() for t in ax.get_legend().get_texts()] == ["iso", "decay2"]


def test_appC_structure(appC_dir):
    fig = nfaplots.render(appC_dir, "appC")
    assert [ax.get_title() for ax in fig.axes] == ["quadratic", "relu"]
    for ax in fig.axes:
        assert (ax.get_xlabel(), ax.get_ylabel()) == ("alpha", "correlation")
        legend = [t.get_text() for t in ax.get_legend().get_texts()]
        assert legend == [
            "ntk observed", "ntk predicted",
            "proportional observed", "proportional predicted",
        ]


def test_appF_structure(appF_dir):
    fig = nfaplots.render(appF_dir, "appF")
    assert [ax.get_title() for ax in fig.axes] == ["alpha=0.0", "alpha=2.0"]
    for ax in fig.axes:
        assert ax.get_ylabel() == "c_nfa"
        legend = [t.get_text() for t in ax.get_legend().get_texts()]
        assert legend == ["s0=1", "s0=0.1"]


def test_appI_structure(appI_dir):
    fig = nfaplots.render(appI_dir, "appI")
    assert [ax.get_title() for ax in fig.axes] == ["gd", "slo"]
    for ax in fig.axes:
        assert ax.get_ylabel() == "uc_nfa"
        legend = [t.get_text() for t in ax.get_legend().get_texts()]
        assert legend == ["layer 0", "layer 1", "layer 2"]


def test_curves_are_seed_means(fig2_dir):
    """The plotted line is the mean over seeds of the logged metric."""
    table = io.read_table(fig2_dir / "aggregate.csv")
    path = fig2_dir / "aggregate.csv"
    cells = io.text_column(table, "cell", path)
    layers = io.column(table, "layer", path)
    vals = io.column(table, "uc_nfa", path)
    keep = [i for i in range(len(cells)) if cells[i] == "s1" and layers[i] == 0]
    fig = nfaplots.render(fig2_dir, "fig2")
    line = fig.axes[0].lines[0]
    np.testing.assert_allclose(line.get_ydata(), vals[keep], rtol=1e-12)


# ------------------------------------------------------------------ errors


def test_missing_artifact_reports_path(tmp_path):
    with pytest.raises(ArtifactError, match="artifact not found"):
        nfaplots.render(tmp_path, "fig3")


def test_missing_column_is_named(fig3_dir, tmp_path):
    broken = tmp_path / "broken"
    shutil.copytree(fig3_dir, broken)
    sweep = broken / "sweep.csv"
    lines = sweep.read_text().splitlines()
    lines[0] = lines[0].replace("observed", "surprise")
    sweep.write_text("\n".join(lines) + "\n")
    with pytest.raises(ArtifactError, match="missing column 'observed'"):
        nfaplots.render(broken, "fig3")


def test_headerless_and_empty_csv_rejected(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(ArtifactError, match="empty CSV"):
        io.read_table(empty)
    headers_only = tmp_path / "h.csv"
    headers_only.write_text("gamma,seed,predicted,observed\n")
    with pytest.raises(ArtifactError, match="no data rows"):
        io.read_table(headers_only)


def test_ragged_row_rejected(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n3\n")
    with pytest.raises(ArtifactError, match="row with 1 cells"):
        io.read_table(p)


def test_malformed_matrix_rejected(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1.0,2.0\nx,4.0\n")
    with pytest.raises(ArtifactError, match="malformed matrix"):
        io.load_matrix(p)


# --------------------------------------------------------------------- CLI


def _cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "nfaplots", *args], capture_output=True, text=True
    )


def test_cli_renders_png(fig3_dir, tmp_path):
    out = tmp_path / "fig3.png"
    res = _cli("--dir", str(fig3_dir), "--figure", "fig3", "--out", str(out))
    assert res.returncode == 0, res.stderr
    assert f"wrote {out}" in res.stdout
    assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_cli_is_deterministic(fig3_dir, tmp_path):
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    for out in (a, b):
        res = _cli("--dir", str(fig3_dir), "--figure", "fig3", "--out", str(out))
        assert res.returncode == 0, res.stderr
    assert a.read_bytes() == b.read_bytes()


def test_cli_unknown_figure(fig3_dir, tmp_path):
    res = _cli("--dir", str(fig3_dir), "--figure", "fig0",
               "--out", str(tmp_path / "x.png"))
    assert res.returncode == 2
    assert "unknown figure" in res.stderr and "fig1" in res.stderr
    assert not (tmp_path / "x.png").exists()


def test_cli_missing_artifacts(tmp_path):
    res = _cli("--dir", str(tmp_path), "--figure", "fig1",
               "--out", str(tmp_path / "x.png"))
    assert res.returncode == 2
    assert "artifact not found" in res.stderr


@pytest.mark.parametrize("figure", ALL_FIGURES)
def test_every_figure_renders_from_its_preset_artifacts(
    figure, fig1_dir, fig2_dir, fig3_dir, fig4_dir, fig5_dir,
    appB_dir, appC_dir, appF_dir, appI_dir, tmp_path,
):
    dirs = {
        "fig1": fig1_dir, "fig2": fig2_dir, "fig3": fig3_dir, "fig4": fig4_dir,
        "fig5": fig5_dir, "appB": appB_dir, "appC": appC_dir, "appF": appF_dir,
        "appI": appI_dir,
    }
    out = tmp_path / f"{figure}.png"
    res = _cli("--dir", str(dirs[figure]), "--figure", figure, "--out", str(out))
    assert res.returncode == 0, res.stderr
    assert out.stat().st_size > 0
