"""Full-batch training: plain gradient descent and speed-limited variants.

The speed-limited optimizer (SLO) fixes each layer's per-step displacement
budget: W <- W - eta * C_l * grad / (eps + ||grad||_F), so a layer moves at
most eta*C_l per step no matter how small its raw gradient is.  The adaptive
variant re-assigns the budgets every step, giving the layer with the weakest
feature/gradient alignment the large budget s and everyone else 1/s.

Training measures the NFA metric family every `measure_every` steps into a
TrainLog, one CSV row per (step, layer).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from .datasets import Dataset
from .linalg import frobenius
from .metrics import NfaSnapshot, ReferenceState
from .network import Mlp, backward, forward, preact_gradients

__all__ = [
    "OptimizerSpec",
    "TrainLog",
    "DivergenceError",
    "mse_loss_and_ldot",
    "gd_step",
    "slo_step",
    "adaptive_slo_step",
    "train",
]

_VARIANTS = ("gd", "slo", "adaptive_slo")


@dataclass(frozen=True)
class OptimizerSpec:
    """Update-rule description.  gd ignores speeds/epsilon/s; slo needs one
    speed per weight layer; adaptive_slo assigns speeds itself from s."""

    variant: str
    eta: float
    speeds: Optional[tuple[float, ...]] = None
    epsilon: float = 0.0
    s: float = 20.0

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; know {_VARIANTS}")
        if self.eta <= 0:
            raise ValueError(f"learning rate must be positive, got {self.eta}")
        if self.epsilon < 0:
            raise ValueError(f"relaxation epsilon must be nonnegative, got {self.epsilon}")
        if self.variant == "slo":
            if self.speeds is None:
                raise ValueError("slo requires per-layer speeds")
            if any(c < 0 for c in self.speeds):
                raise ValueError(f"speeds must be nonnegative, got {self.speeds}")
        if self.variant == "adaptive_slo" and self.s <= 0:
            raise ValueError(f"adaptive scale s must be positive, got {self.s}")


def mse_loss_and_ldot(f: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean-square loss (1/2n) sum (f-y)^2 and its per-output derivative (f-y)/n."""
    f = np.asarray(f, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if f.shape != y.shape:
        raise ValueError(f"outputs and labels differ in length: {f.shape} vs {y.shape}")
    n = f.shape[0]
    resid = f - y
    # overflow to inf is fine here: the training loop checks for it
    with np.errstate(over="ignore"):
        return float(0.5 * np.mean(resid**2)), resid / n


def gd_step(net: Mlp, grads: list[np.ndarray], eta: float) -> Mlp:
    """In-place W <- W - eta * grad for every layer."""
    if len(grads) != net.n_weight_layers:
        raise ValueError(f"{len(grads)} gradients for {net.n_weight_layers} layers")
    for w, g in zip(net.weights, grads):
        w -= eta * g
    net.bump_version()
    return net


def _speed_limited_update(net: Mlp, grads: list[np.ndarray], eta: float,
                          speeds: tuple[float, ...], epsilon: float) -> Mlp:
    for w, g, c in zip(net.weights, grads, speeds):
        denom = epsilon + frobenius(g)
        if denom == 0.0:
            continue  # eps = 0 and zero gradient: the layer stays put
        w -= (eta * c / denom) * g
    net.bump_version()
    return net


def slo_step(net: Mlp, grads: list[np.ndarray], spec: OptimizerSpec) -> Mlp:
    if spec.variant != "slo":
        raise ValueError(f"slo_step needs variant 'slo', got {spec.variant!r}")
    if len(spec.speeds) != net.n_weight_layers:
        raise ValueError(f"{len(spec.speeds)} speeds for {net.n_weight_layers} layers")
    if len(grads) != net.n_weight_layers:
        raise ValueError(f"{len(grads)} gradients for {net.n_weight_layers} layers")
    return _speed_limited_update(net, grads, spec.eta, spec.speeds, spec.epsilon)


def adaptive_slo_step(
    net: Mlp, grads: list[np.ndarray], spec: OptimizerSpec, current_ucnfa: list[float]
) -> Mlp:
    """Give speed s to the layer with the smallest alignment, 1/s to the rest.

    Ties go to the lowest layer index.  Undefined alignment values should be
    mapped below -1 by the caller so they win the selection.
    """
    if spec.variant != "adaptive_slo":
        raise ValueError(f"adaptive_slo_step needs variant 'adaptive_slo', got {spec.variant!r}")
    if len(current_ucnfa) != net.n_weight_layers:
        raise ValueError(
            f"{len(current_ucnfa)} alignment values for {net.n_weight_layers} layers"
        )
    weakest = int(np.argmin(current_ucnfa))  # argmin takes the first minimum
    speeds = tuple(
        spec.s if l == weakest else 1.0 / spec.s for l in range(net.n_weight_layers)
    )
    return _speed_limited_update(net, grads, spec.eta, speeds, spec.epsilon)


class DivergenceError(RuntimeError):
    """Raised when the training loss stops being finite."""

    def __init__(self, last_good_step: int, log: "TrainLog"):
        super().__init__(f"non-finite loss after step {last_good_step}")
        self.last_good_step = last_good_step
        self.log = log


@dataclass
class TrainLog:
    """All measurement rows of one training run, plus provenance."""

    snapshots: list[NfaSnapshot] = field(default_factory=list)
    seed: Optional[int] = None
    meta: dict = field(default_factory=dict)

    CSV_COLUMNS = NfaSnapshot.CSV_COLUMNS + ("train_loss_norm", "test_loss_norm")

    def measured_steps(self) -> list[int]:
        return sorted({s.step for s in self.snapshots})

    def layer_rows(self, layer: int) -> list[NfaSnapshot]:
        return [s for s in self.snapshots if s.layer == layer]

    def final_snapshot(self, layer: int) -> NfaSnapshot:
        rows = self.layer_rows(layer)
        if not rows:
            raise ValueError(f"no snapshots for layer {layer}")
        return max(rows, key=lambda s: s.step)

    def _loss_maxima(self) -> tuple[float, float]:
        train_max = max((s.train_loss for s in self.snapshots), default=0.0)
        test_max = max(
            (s.test_loss for s in self.snapshots if s.test_loss is not None), default=0.0
        )
        return train_max, test_max

    def serialized_rows(self) -> list[list[str]]:
        """Snapshot rows plus losses normalized by their maxima over the run.

        Raw losses stay in their own columns; the normalized ones exist so
        downstream plots never recompute anything.
        """
        train_max, test_max = self._loss_maxima()
        rows = []
        for s in self.snapshots:
            row = s.to_row()
            row.append(f"{s.train_loss / train_max:.17g}" if train_max > 0 else "")
            if s.test_loss is None or test_max <= 0:
                row.append("")
            else:
                row.append(f"{s.test_loss / test_max:.17g}")
            rows.append(row)
        return rows

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.CSV_COLUMNS)
            writer.writerows(self.serialized_rows())

    @classmethod
    def from_csv(cls, path: str | Path) -> "TrainLog":
        path = Path(path)
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise ValueError(f"{path}: empty train log")
            if tuple(header) != cls.CSV_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            snaps = [NfaSnapshot.from_row(row[: len(NfaSnapshot.CSV_COLUMNS)]) for row in reader]
        return cls(snapshots=snaps)


def train(
    net: Mlp,
    dataset: Dataset,
    test_dataset: Optional[Dataset],
    spec: OptimizerSpec,
    steps: int,
    measure_every: int,
    readout_scale: Optional[float] = None,
    measure_layers: Optional[list[int]] = None,
) -> TrainLog:
    """Full-batch training with periodic NFA measurements.

    The reference state for centered metrics is captured after the optional
    readout rescaling (weights[-1] *= readout_scale) and before any update,
    so step 0 is measured against itself.  A small readout_scale shrinks the
    initial output, which forces the early layers to do the fitting work.
    Measurements happen at step 0, at every multiple of measure_every, and at
    the final step.  A non-finite loss aborts with DivergenceError carrying
    the partial log.
    """
    if steps < 0:
        raise ValueError(f"steps must be nonnegative, got {steps}")
    if measure_every < 1:
        raise ValueError(f"measure_every must be positive, got {measure_every}")
    if spec.variant == "slo" and len(spec.speeds) != net.n_weight_layers:
        raise ValueError(f"{len(spec.speeds)} speeds for {net.n_weight_layers} layers")
    if readout_scale is not None:
        if readout_scale == 0:
            raise ValueError("readout scale must be nonzero")
        net.weights[-1] *= readout_scale
        net.bump_version()
    x, y = dataset.x, dataset.y
    ref = ReferenceState.capture(net, x)
    log = TrainLog(
        seed=net.config.seed if net.config else None,
        meta={"variant": spec.variant, "steps": steps, "measure_every": measure_every},
    )

    def measure(step: int) -> float:
        cache = forward(net, x)
        loss, _ = mse_loss_and_ldot(cache.outputs, y)
        if not np.isfinite(loss):
            return loss  # caller aborts; don't snapshot an unrepresentable state
        test_loss = None
        if test_dataset is not None:
            test_out = forward(net, test_dataset.x).outputs
            test_loss, _ = mse_loss_and_ldot(test_out, test_dataset.y)
        rows = metrics.snapshot_all_layers(net, ref, x, step, loss, test_loss)
        if measure_layers is not None:
            rows = [r for r in rows if r.layer in measure_layers]
        log.snapshots.extend(rows)
        return loss

    loss0 = measure(0)
    if not np.isfinite(loss0):
        raise DivergenceError(last_good_step=-1, log=log)
    for t in range(1, steps + 1):
        cache = forward(net, x)
        loss, ldot = mse_loss_and_ldot(cache.outputs, y)
        if not np.isfinite(loss):
            raise DivergenceError(last_good_step=t - 1, log=log)
        bw = backward(net, cache, ldot)
        if spec.variant == "gd":
            gd_step(net, bw.weight_grads, spec.eta)
        elif spec.variant == "slo":
            slo_step(net, bw.weight_grads, spec)
        else:
            uc = _per_layer_ucnfa(net, cache_preacts=bw.preact_grads)
            adaptive_slo_step(net, bw.weight_grads, spec, uc)
        if t % measure_every == 0 or t == steps:
            final_loss = measure(t)
            if not np.isfinite(final_loss):
                raise DivergenceError(last_good_step=t - 1, log=log)
    return log


def _per_layer_ucnfa(net: Mlp, cache_preacts: list[np.ndarray]) -> list[float]:
    """UC-NFA per layer from already-computed preactivation gradients;
    undefined values map to -2 so the adaptive rule prefers them."""
    out = []
    for layer, d in enumerate(cache_preacts):
        w = net.weights[layer]
        k = (d.T @ d) / d.shape[0]
        val = metrics.rho(w.T @ w, w.T @ k @ w)
        out.append(-2.0 if val is None else val)
    return out
