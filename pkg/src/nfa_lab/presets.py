"""Experiment presets and their runners.

Each preset resolves to a plain JSON-serializable config dict; run_config
dispatches on config["kind"] and writes CSV/JSON artifacts into an output
directory.  Three kinds exist:

  training              cells of (dataset, model, optimizer) trained per seed,
                        emitting per-run train logs + aggregate.csv, and for
                        some presets end-of-training matrices/correlations
  balance_sweep         predicted vs observed early C-NFA correlation across
                        the balance parameter gamma of the alignment-reversing
                        dataset, emitting sweep.csv
  derivative_prediction first-order (mean-PTK) predicted vs observed early
                        C-NFA across data decay rates, widths, activations,
                        emitting sweep.csv

All artifacts are deterministic given the config: every RNG stream is derived
from the seeds stored in the config, so identical configs give byte-identical
CSV bodies.  The manifest records the config, its hash, and library versions.
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import datasets, linalg, metrics, network, theory
from .datasets import BalanceParams, Dataset
from .network import MlpConfig, init_mlp
from .optim import DivergenceError, OptimizerSpec, TrainLog, train

__all__ = [
    "preset_names",
    "build_config",
    "apply_scale_overrides",
    "config_hash",
    "validate_config",
    "run_config",
]

# Deterministic offsets separating the RNG streams drawn from one sweep seed.
_NET_SEED_OFFSET = 10_000
_CORRUPT_SEED_OFFSET = 77_000

# Learning rates per first-layer initialization scale for the speed-limited
# optimizer experiments.
_SLO_ETA_BY_SCALE = {1.0: 0.03, 0.1: 0.1, 0.01: 0.2, 0.001: 0.4}

_SCALE_SWEEP = (1.0, 0.1, 0.01, 0.001)


def _scale_label(s0: float) -> str:
    return ("%g" % s0).replace(".", "p")


def _gd(eta: float) -> dict:
    return {"variant": "gd", "eta": eta}


def _slo(eta: float, speeds: list[float], epsilon: float) -> dict:
    return {"variant": "slo", "eta": eta, "speeds": speeds, "epsilon": epsilon}


def _chain_cell(label, s0, *, n=256, d=32, k=256, r=5, alpha=None, hidden=2,
                optimizer=None, steps=800, measure_every=5, readout_scale=None):
    widths = [d] + [k] * hidden + [1]
    scales = [s0] + [1.0] * hidden
    cell = {
        "label": label,
        "dataset": {"kind": "chain", "n": n, "d": d, "r": r},
        "model": {"widths": widths, "activation": "relu", "init_scales": scales},
        "optimizer": optimizer or _gd(0.05),
        "steps": steps,
        "measure_every": measure_every,
    }
    if alpha is not None:
        cell["dataset"]["alpha"] = alpha
    if readout_scale is not None:
        cell["readout_scale"] = readout_scale
    return cell


def _fig1_config() -> dict:
    # Isotropic chain task, small first-layer init; end-of-training feature
    # matrices with a spectrum-corrupted control.
    return {
        "name": "fig1",
        "kind": "training",
        "seeds": [0, 1, 2, 3, 4],
        "cells": [_chain_cell("run", 0.01, n=384, k=128)],
        "matrix_artifacts": True,
    }


def _fig2_config() -> dict:
    # First-layer init-scale sweep on the isotropic chain task.
    return {
        "name": "fig2",
        "kind": "training",
        "seeds": [0, 1, 2, 3, 4],
        "cells": [_chain_cell(f"s{_scale_label(s)}", s) for s in _SCALE_SWEEP],
    }


def _fig3_config(full_scale: bool = False) -> dict:
    size = 1024 if full_scale else 256
    return {
        "name": "fig3",
        "kind": "balance_sweep",
        "n": size,
        "d": size,
        "k": size,
        "gammas": [0.05, 0.1, 0.2, 0.3, 0.4, 0.6, 0.8, 1.0],
        "seeds": [0, 1, 2, 3],
        "n_net_seeds": 30,
        "eps1": 0.5,
        "eps2": 0.01,
        "label_shift": 1e-5,
    }


def _fig4_config() -> dict:
    # Plain GD vs fixed learning speeds across first-layer init scales.
    cells = []
    for s0 in _SCALE_SWEEP:
        eta = _SLO_ETA_BY_SCALE[s0]
        tag = _scale_label(s0)
        common = dict(steps=600, readout_scale=0.01)
        cells.append(_chain_cell(f"gd_s{tag}", s0, optimizer=_gd(eta), **common))
        cells.append(
            _chain_cell(
                f"slo_s{tag}", s0,
                optimizer=_slo(eta, [500.0, 0.002, 0.002], 0.1),
                **common,
            )
        )
    return {"name": "fig4", "kind": "training", "seeds": [0, 1, 2], "cells": cells}


def _fig5_config() -> dict:
    # Feature-matrix heatmaps, GD vs fixed speeds, at large init.
    eta = _SLO_ETA_BY_SCALE[1.0]
    common = dict(steps=600, readout_scale=0.01)
    return {
        "name": "fig5",
        "kind": "training",
        "seeds": [0],
        "cells": [
            _chain_cell("gd", 1.0, optimizer=_gd(eta), **common),
            _chain_cell("slo", 1.0, optimizer=_slo(eta, [500.0, 0.002, 0.002], 0.1), **common),
        ],
        "matrix_artifacts": True,
    }


def _appB_config() -> dict:
    # Higher-order alignment shares (dc_ratio, ptk_c_nfa) on isotropic and
    # fast-decaying data; the columns of interest are in every train log.
    return {
        "name": "appB",
        "kind": "training",
        "seeds": [0, 1, 2],
        "cells": [
            _chain_cell("iso", 1.0),
            _chain_cell("decay2", 1.0, alpha=2.0),
        ],
    }


def _appC_config() -> dict:
    return {
        "name": "appC",
        "kind": "derivative_prediction",
        "n": 128,
        "d": 128,
        "r": 5,
        "alphas": [0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0],
        "activations": ["quadratic", "relu"],
        "regimes": {"proportional": 128, "ntk": 1024},
        "hidden_layers": 2,
        "n_mc_seeds": 20,
        "seeds": [0, 1, 2],
    }


def _appF_config() -> dict:
    cells = []
    for alpha in (1.0, 2.0):
        for s0 in _SCALE_SWEEP:
            cells.append(_chain_cell(f"a{_scale_label(alpha)}_s{_scale_label(s0)}", s0, alpha=alpha))
    return {"name": "appF", "kind": "training", "seeds": [0, 1, 2], "cells": cells}


def _appI_config() -> dict:
    # Adaptive speed assignment on a depth-3 net; GD baseline at its own rate.
    adaptive = {"variant": "adaptive_slo", "eta": 0.05, "epsilon": 0.01, "s": 20.0}
    return {
        "name": "appI",
        "kind": "training",
        "seeds": [0, 1, 2],
        "cells": [
            _chain_cell("slo", 0.1, r=3, hidden=3, optimizer=adaptive, steps=500),
            _chain_cell("gd", 0.1, r=3, hidden=3, optimizer=_gd(0.25), steps=500),
        ],
    }


_PRESETS: dict[str, Callable[..., dict]] = {
    "fig1": _fig1_config,
    "fig2": _fig2_config,
    "fig3": _fig3_config,
    "fig4": _fig4_config,
    "fig5": _fig5_config,
    "appB": _appB_config,
    "appC": _appC_config,
    "appF": _appF_config,
    "appI": _appI_config,
}


def preset_names() -> list[str]:
    return list(_PRESETS)


def build_config(name: str, full_scale: bool = False) -> dict:
    if name not in _PRESETS:
        raise KeyError(f"unknown preset {name!r}; available: {', '.join(_PRESETS)}")
    if name == "fig3":
        return _fig3_config(full_scale=full_scale)
    return _PRESETS[name]()


def apply_scale_overrides(config: dict, overrides: dict) -> dict:
    """Return a copy of config with n/d/k replaced where they appear.

    For training configs this rewrites every cell's dataset size/dimension
    and hidden widths; for the sweep kinds it rewrites the top-level fields.
    Unknown override keys raise.
    """
    bad = set(overrides) - {"n", "d", "k"}
    if bad:
        raise ValueError(f"unknown scale override(s) {sorted(bad)}; know n, d, k")
    cfg = json.loads(json.dumps(config))  # deep copy, keeps it JSON-plain
    if cfg["kind"] == "training":
        for cell in cfg["cells"]:
            ds, model = cell["dataset"], cell["model"]
            if "n" in overrides:
                ds["n"] = overrides["n"]
            if "d" in overrides:
                ds["d"] = overrides["d"]
                model["widths"][0] = overrides["d"]
            if "k" in overrides:
                model["widths"][1:-1] = [overrides["k"]] * (len(model["widths"]) - 2)
    elif cfg["kind"] == "balance_sweep":
        cfg.update({key: overrides[key] for key in ("n", "d", "k") if key in overrides})
    elif cfg["kind"] == "derivative_prediction":
        for key in ("n", "d"):
            if key in overrides:
                cfg[key] = overrides[key]
        if "k" in overrides:
            cfg["regimes"] = {"proportional": overrides["k"], "ntk": 8 * overrides["k"]}
    else:
        raise ValueError(f"unknown config kind {cfg.get('kind')!r}")
    return cfg


def config_hash(config: dict) -> str:
    return hashlib.sha256(
        json.dumps(config, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()


def _build_train_test(ds_spec: dict, seed: int) -> tuple[Dataset, Dataset]:
    """Train and test splits drawn jointly so they share the covariance
    eigenbasis and the label standardization."""
    rng = linalg.make_rng(seed)
    n, d = ds_spec["n"], ds_spec["d"]
    if ds_spec["kind"] != "chain":
        raise ValueError(f"unknown dataset kind {ds_spec['kind']!r}")
    r = ds_spec["r"]
    alpha = ds_spec.get("alpha")
    if alpha is None:
        full = datasets.chain_monomial(rng, 2 * n, d, r)
        x, y = full.x, full.y
    else:
        x = datasets.gaussian_decay(rng, 2 * n, d, alpha)
        y = datasets.chain_labels(x, r)
    meta = {"kind": "chain", "n": n, "d": d, "r": r, "alpha": alpha, "seed": seed}
    return (
        Dataset(x=x[:n], y=y[:n], meta=dict(meta, split="train")),
        Dataset(x=x[n:], y=y[n:], meta=dict(meta, split="test")),
    )


def _cell_model_config(cell: dict, seed: int) -> MlpConfig:
    model = cell["model"]
    return MlpConfig(
        widths=tuple(model["widths"]),
        activation=model["activation"],
        init_scales=tuple(model["init_scales"]),
        seed=seed + _NET_SEED_OFFSET,
    )


def _cell_optimizer(cell: dict) -> OptimizerSpec:
    opt = cell["optimizer"]
    speeds = opt.get("speeds")
    return OptimizerSpec(
        variant=opt["variant"],
        eta=opt["eta"],
        speeds=tuple(speeds) if speeds is not None else None,
        epsilon=opt.get("epsilon", 0.0),
        s=opt.get("s", 20.0),
    )


def _run_training_cell(cell: dict, seed: int) -> tuple[TrainLog, network.Mlp, Dataset]:
    train_ds, test_ds = _build_train_test(cell["dataset"], seed)
    net = init_mlp(_cell_model_config(cell, seed))
    log = train(
        net,
        train_ds,
        test_ds,
        _cell_optimizer(cell),
        steps=cell["steps"],
        measure_every=cell["measure_every"],
        readout_scale=cell.get("readout_scale"),
    )
    return log, net, train_ds


def _emit_matrix_artifacts(
    out: Path, tag: str, net: network.Mlp, train_ds: Dataset, seed: int
) -> dict:
    """First-layer feature matrices after training, plus the corrupted-PTK
    control, and their pairwise correlations."""
    w = net.weights[0]
    nfm = network.nfm(net, 0)
    agop = network.agop_direct(net, train_ds.x, 0)
    k = network.ptk_feature_cov(net, train_ds.x, 0)
    q = datasets.corrupt_spectrum(linalg.make_rng(seed + _CORRUPT_SEED_OFFSET), k)
    corrupted = w.T @ q @ w
    egop = datasets.chain_monomial_egop(train_ds.dim, train_ds.meta["r"])
    for name, m in (("nfm", nfm), ("agop", agop), ("corrupted", corrupted), ("egop", egop)):
        linalg.save_matrix_csv(out / f"{tag}_{name}.csv", m)
    return {
        "rho_nfm_agop": metrics.rho(nfm, agop),
        "rho_nfm_corrupted": metrics.rho(nfm, corrupted),
        "rho_nfm_egop": metrics.rho(nfm, egop),
        "rho_agop_egop": metrics.rho(agop, egop),
    }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def _run_training(config: dict, out: Path, threads: int) -> list[str]:
    jobs = [(cell, seed) for cell in config["cells"] for seed in config["seeds"]]

    def one(job):
        cell, seed = job
        try:
            return _run_training_cell(cell, seed), None
        except DivergenceError as err:
            return (err.log, None, None), f"diverged after step {err.last_good_step}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    artifacts = []
    corr_rows = []
    divergences = {}
    agg_path = out / "aggregate.csv"
    with open(agg_path, "w", newline="") as fh:
        agg = csv.writer(fh)
        agg.writerow(("cell", "seed") + TrainLog.CSV_COLUMNS)
        for (cell, seed), ((log, net, train_ds), failure) in zip(jobs, results):
            tag = f"{cell['label']}_seed{seed}"
            log_path = out / f"trainlog_{tag}.csv"
            log.to_csv(log_path)
            artifacts.append(log_path.name)
            for row in log.serialized_rows():
                agg.writerow([cell["label"], str(seed)] + row)
            if failure:
                divergences[tag] = failure
                continue
            if config.get("matrix_artifacts"):
                corrs = _emit_matrix_artifacts(out, tag, net, train_ds, seed)
                artifacts += [f"{tag}_{m}.csv" for m in ("nfm", "agop", "corrupted", "egop")]
                corr_rows.append({"cell": cell["label"], "seed": seed, **corrs})
    artifacts.append(agg_path.name)
    if corr_rows:
        corr_path = out / "correlations.csv"
        with open(corr_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["cell", "seed", "rho_nfm_agop", "rho_nfm_corrupted",
                      "rho_nfm_egop", "rho_agop_egop"]
            writer.writerow(header)
            for row in corr_rows:
                writer.writerow([_fmt(row[h]) for h in header])
        artifacts.append(corr_path.name)
    if divergences:
        linalg.save_json(out / "divergences.json", divergences)
        artifacts.append("divergences.json")
    return artifacts


def _run_balance_sweep(config: dict, out: Path, threads: int) -> list[str]:
    d, k, n = config["d"], config["k"], config["n"]
    rstats = theory.r_stats(linalg.make_rng(424242), k=k, d=d, n_seeds=config["n_net_seeds"])
    params_base = dict(
        eps1=config["eps1"], eps2=config["eps2"], label_shift=config["label_shift"]
    )
    jobs = [(g, s) for g in config["gammas"] for s in config["seeds"]]

    def one(job):
        gamma, seed = job
        params = BalanceParams(gamma=gamma, **params_base)
        ds = datasets.alignment_reversing(linalg.make_rng(seed), n, d, params)
        predicted = theory.predicted_correlation(theory.data_stats(ds.x, ds.y), rstats)
        net = init_mlp(
            MlpConfig(
                widths=(d, k, 1),
                activation="quadratic",
                init_scales=(1.0, 1.0),
                seed=seed + _NET_SEED_OFFSET,
            )
        )
        observed = theory.observed_derivative_correlation(
            net, ds.x, ds.y, layer=0, assume_zero_output=True
        )
        return predicted.correlation, observed

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["gamma", "seed", "predicted", "observed"])
        for (gamma, seed), (predicted, observed) in zip(jobs, results):
            writer.writerow([_fmt(gamma), str(seed), _fmt(predicted), _fmt(observed)])
    linalg.save_json(
        out / "rstats.json",
        {"r1": rstats.r1, "r2": rstats.r2, "r3": rstats.r3, "r4": rstats.r4,
         "n_seeds": rstats.n_seeds, "d": d, "k": k},
    )
    return [sweep_path.name, "rstats.json"]


def _run_derivative_prediction(config: dict, out: Path, threads: int) -> list[str]:
    n, d, r = config["n"], config["d"], config["r"]
    hidden = config["hidden_layers"]
    jobs = [
        (act, regime, alpha, seed)
        for act in config["activations"]
        for regime in config["regimes"]
        for alpha in config["alphas"]
        for seed in config["seeds"]
    ]

    def one(job):
        act, regime, alpha, seed = job
        k = config["regimes"][regime]
        rng = linalg.make_rng(seed)
        x = datasets.gaussian_decay(rng, n, d, alpha)
        y = datasets.chain_labels(x, r)
        mc_config = MlpConfig(
            widths=(d,) + (k,) * hidden + (1,),
            activation=act,
            init_scales=(1.0,) * (hidden + 1),
            seed=5150,
        )
        e1, e2 = theory.mc_expected_ptk(mc_config, x, config["n_mc_seeds"], layer=0)
        predicted = theory.first_order_prediction(e1, e2, x, y)
        net = init_mlp(replace(mc_config, seed=seed + _NET_SEED_OFFSET))
        observed = theory.observed_derivative_correlation(
            net, x, y, layer=0, assume_zero_output=True
        )
        return predicted, observed

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]

    sweep_path = out / "sweep.csv"
    with open(sweep_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["activation", "regime", "alpha", "seed", "predicted", "observed"])
        for (act, regime, alpha, seed), (predicted, observed) in zip(jobs, results):
            writer.writerow([act, regime, _fmt(alpha), str(seed), _fmt(predicted), _fmt(observed)])
    return [sweep_path.name]


_RUNNERS = {
    "training": _run_training,
    "balance_sweep": _run_balance_sweep,
    "derivative_prediction": _run_derivative_prediction,
}


def validate_config(config: dict) -> list[str]:
    """Field-level problems with a config dict; empty list means valid."""
    problems = []
    kind = config.get("kind")
    if kind not in _RUNNERS:
        return [f"kind: must be one of {sorted(_RUNNERS)}, got {kind!r}"]
    seeds = config.get("seeds")
    if not isinstance(seeds, list) or not seeds or not all(isinstance(s, int) for s in seeds):
        problems.append("seeds: need a nonempty list of integers")
    if kind == "training":
        cells = config.get("cells")
        if not isinstance(cells, list) or not cells:
            return problems + ["cells: need a nonempty list"]
        for i, cell in enumerate(cells):
            where = f"cells[{i}]"
            for field in ("label", "dataset", "model", "optimizer", "steps", "measure_every"):
                if field not in cell:
                    problems.append(f"{where}.{field}: missing")
            if problems:
                continue
            try:
                _cell_model_config(cell, 0)
            except (KeyError, TypeError, ValueError) as err:
                problems.append(f"{where}.model: {err}")
            try:
                _cell_optimizer(cell)
            except (KeyError, TypeError, ValueError) as err:
                problems.append(f"{where}.optimizer: {err}")
            ds = cell.get("dataset", {})
            if ds.get("kind") != "chain":
                problems.append(f"{where}.dataset.kind: must be 'chain'")
            elif not (3 <= ds.get("r", 0) <= ds.get("d", 0)):
                problems.append(f"{where}.dataset: need 3 <= r <= d")
            if cell.get("steps", -1) < 0:
                problems.append(f"{where}.steps: must be nonnegative")
            if cell.get("measure_every", 0) < 1:
                problems.append(f"{where}.measure_every: must be positive")
    elif kind == "balance_sweep":
        for field in ("n", "d", "k", "gammas", "n_net_seeds", "eps1", "eps2", "label_shift"):
            if field not in config:
                problems.append(f"{field}: missing")
        for g in config.get("gammas", []):
            if not 0 < g <= 1:
                problems.append(f"gammas: {g} outside (0, 1]")
    elif kind == "derivative_prediction":
        for field in ("n", "d", "r", "alphas", "activations", "regimes",
                      "hidden_layers", "n_mc_seeds"):
            if field not in config:
                problems.append(f"{field}: missing")
        for act in config.get("activations", []):
            if act not in network.ACTIVATIONS:
                problems.append(f"activations: unknown {act!r}")
        for a in config.get("alphas", []):
            if a < 0:
                problems.append(f"alphas: {a} negative")
    return problems


def run_config(config: dict, out_dir: str | Path, threads: int = 1) -> Path:
    """Run a resolved config, writing artifacts + manifest into out_dir."""
    problems = validate_config(config)
    if problems:
        raise ValueError("invalid config:\n  " + "\n  ".join(problems))
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = _RUNNERS[config["kind"]](config, out, max(1, threads))
    manifest = {
        "config": config,
        "config_hash": config_hash(config),
        "versions": {
            "nfa_lab": _package_version(),
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
        "artifacts": sorted(artifacts),
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    linalg.save_json(out / "manifest.json", manifest)
    return out


def _package_version() -> str:
    from . import __version__

    return __version__
