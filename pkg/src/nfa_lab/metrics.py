"""Alignment metrics between feature matrices and gradient outer products.

Correlations return None instead of a number when mathematically undefined
(zero or constant matrices); train logs serialize that as an empty CSV cell.

The centered family measures everything relative to a ReferenceState
captured at initialization: W-bar = W - W_0, and for the doubly-centered
variants the preactivation-gradient matrix is centered the same way,
K-bar = (1/n) (D - D_0)^T (D - D_0).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .linalg import frobenius
from .network import Mlp, forward, preact_gradients

__all__ = [
    "rho",
    "pearson_rho",
    "ReferenceState",
    "capture_reference",
    "uc_nfa",
    "c_nfa",
    "dc_nfa",
    "dc_ratio",
    "ptk_c_nfa",
    "c_uc_ratio",
    "egop_similarity",
    "NfaSnapshot",
    "snapshot_all_layers",
]

# Frobenius norms below this are treated as exactly zero for defined-ness.
_NORM_FLOOR = 1e-300


def rho(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """Cosine similarity tr(a^T b) / (||a||_F ||b||_F).

    None if either norm vanishes or the inputs are not finite (e.g. snapshots
    taken while a run is blowing up) -- undefined is always None, never NaN.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        na = frobenius(a)
        nb = frobenius(b)
        if not np.isfinite(na) or not np.isfinite(nb):
            return None
        if na < _NORM_FLOOR or nb < _NORM_FLOOR:
            return None
        val = float(np.sum(a * b) / (na * nb))
    return val if np.isfinite(val) else None


def pearson_rho(a: np.ndarray, b: np.ndarray) -> Optional[float]:
    """rho after removing each matrix's entrywise mean; None for constant input."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if np.all(a == a.flat[0]) or np.all(b == b.flat[0]):
        return None
    with np.errstate(invalid="ignore"):
        return rho(a - a.mean(), b - b.mean())


def _trace_product(m1: np.ndarray, m2: np.ndarray) -> float:
    # tr(m1 @ m2) for symmetric m2 without forming the product.  May overflow
    # to inf on exploding inputs; callers map non-finite ratios to None.
    with np.errstate(over="ignore", invalid="ignore"):
        return float(np.sum(m1 * m2))


def _finite_ratio(num: float, den: float) -> Optional[float]:
    """num / den, or None when the ratio is undefined or not representable."""
    if not np.isfinite(num) or not np.isfinite(den) or abs(den) < _NORM_FLOOR:
        return None
    out = num / den
    return float(out) if np.isfinite(out) else None


@dataclass
class ReferenceState:
    """Initial weights and preactivation gradients on a fixed measurement set."""

    weights0: list[np.ndarray]
    preact_grads0: list[np.ndarray]
    x: np.ndarray

    @classmethod
    def capture(cls, net: Mlp, x: np.ndarray) -> "ReferenceState":
        x = np.asarray(x, dtype=np.float64)
        cache = forward(net, x)
        grads = [d.copy() for d in preact_gradients(net, cache)]
        return cls(
            weights0=[w.copy() for w in net.weights],
            preact_grads0=grads,
            x=x.copy(),
        )

    def check_compatible(self, net: Mlp, x: np.ndarray) -> None:
        if len(self.weights0) != net.n_weight_layers:
            raise ValueError(
                f"reference has {len(self.weights0)} layers, network has {net.n_weight_layers}"
            )
        for l, (w0, w) in enumerate(zip(self.weights0, net.weights)):
            if w0.shape != w.shape:
                raise ValueError(f"layer {l}: reference shape {w0.shape} vs network {w.shape}")
        x = np.asarray(x)
        if x.shape != self.x.shape or not np.array_equal(x, self.x):
            raise ValueError("measurement set differs from the one captured in the reference")


def capture_reference(net: Mlp, x: np.ndarray) -> ReferenceState:
    return ReferenceState.capture(net, x)


def _feature_cov(net: Mlp, x: np.ndarray, layer: int) -> np.ndarray:
    cache = forward(net, x)
    d = preact_gradients(net, cache)[layer]
    return (d.T @ d) / d.shape[0]


def _centered_cov(net: Mlp, ref: ReferenceState, x: np.ndarray, layer: int) -> np.ndarray:
    cache = forward(net, x)
    d = preact_gradients(net, cache)[layer] - ref.preact_grads0[layer]
    return (d.T @ d) / d.shape[0]


def uc_nfa(net: Mlp, x: np.ndarray, layer: int) -> Optional[float]:
    """rho(W^T W, W^T K W): the uncentered feature/gradient alignment."""
    net.check_layer(layer)
    w = net.weights[layer]
    k = _feature_cov(net, x, layer)
    return rho(w.T @ w, w.T @ k @ w)


def c_nfa(net: Mlp, ref: ReferenceState, x: np.ndarray, layer: int) -> Optional[float]:
    """Alignment of the weight displacement: rho(Wb^T Wb, Wb^T K Wb), Wb = W - W0."""
    net.check_layer(layer)
    ref.check_compatible(net, x)
    wb = net.weights[layer] - ref.weights0[layer]
    k = _feature_cov(net, x, layer)
    return rho(wb.T @ wb, wb.T @ k @ wb)


def dc_nfa(net: Mlp, ref: ReferenceState, x: np.ndarray, layer: int) -> Optional[float]:
    """Doubly-centered variant: displacement weights against displacement gradients."""
    net.check_layer(layer)
    ref.check_compatible(net, x)
    wb = net.weights[layer] - ref.weights0[layer]
    kbar = _centered_cov(net, ref, x, layer)
    return rho(wb.T @ wb, wb.T @ kbar @ wb)


def dc_ratio(net: Mlp, ref: ReferenceState, x: np.ndarray, layer: int) -> Optional[float]:
    """tr(Wb^T Wb Wb^T Kbar Wb) / tr(Wb^T Wb Wb^T K Wb): share of the centered
    alignment carried by the gradient displacement."""
    net.check_layer(layer)
    ref.check_compatible(net, x)
    wb = net.weights[layer] - ref.weights0[layer]
    f = wb.T @ wb
    k = _feature_cov(net, x, layer)
    kbar = _centered_cov(net, ref, x, layer)
    den = _trace_product(f, wb.T @ k @ wb)
    return _finite_ratio(_trace_product(f, wb.T @ kbar @ wb), den)


def ptk_c_nfa(net: Mlp, ref: ReferenceState, x: np.ndarray, layer: int) -> Optional[float]:
    """Initial features against displaced gradients: rho(W0^T W0, W0^T Kbar W0)."""
    net.check_layer(layer)
    ref.check_compatible(net, x)
    w0 = ref.weights0[layer]
    kbar = _centered_cov(net, ref, x, layer)
    return rho(w0.T @ w0, w0.T @ kbar @ w0)


def c_uc_ratio(net: Mlp, ref: ReferenceState, x: np.ndarray, layer: int) -> Optional[float]:
    """tr(Wb^T Wb Wb^T K Wb) / tr(W^T W W^T K W): 0 at init, 1 when W0 = 0."""
    net.check_layer(layer)
    ref.check_compatible(net, x)
    w = net.weights[layer]
    wb = w - ref.weights0[layer]
    k = _feature_cov(net, x, layer)
    den = _trace_product(w.T @ w, w.T @ k @ w)
    return _finite_ratio(_trace_product(wb.T @ wb, wb.T @ k @ wb), den)


def egop_similarity(m: np.ndarray, egop: np.ndarray) -> Optional[float]:
    """rho between a feature-space matrix and an expected gradient outer product."""
    return rho(m, egop)


@dataclass
class NfaSnapshot:
    """One measurement row: all alignment metrics for one layer at one step."""

    step: int
    layer: int
    uc_nfa: Optional[float]
    c_nfa: Optional[float]
    dc_nfa: Optional[float]
    dc_ratio: Optional[float]
    ptk_c_nfa: Optional[float]
    c_uc_ratio: Optional[float]
    train_loss: float
    test_loss: Optional[float]

    CSV_COLUMNS = (
        "step",
        "layer",
        "uc_nfa",
        "c_nfa",
        "dc_nfa",
        "dc_ratio",
        "ptk_c_nfa",
        "c_uc_ratio",
        "train_loss",
        "test_loss",
    )

    def to_row(self) -> list[str]:
        out = []
        for name in self.CSV_COLUMNS:
            v = getattr(self, name)
            if v is None:
                out.append("")
            elif name in ("step", "layer"):
                out.append(str(int(v)))
            else:
                out.append(f"{float(v):.17g}")
        return out

    @classmethod
    def from_row(cls, row: list[str]) -> "NfaSnapshot":
        if len(row) != len(cls.CSV_COLUMNS):
            raise ValueError(f"snapshot row has {len(row)} fields, want {len(cls.CSV_COLUMNS)}")
        kwargs = {}
        for name, cell in zip(cls.CSV_COLUMNS, row):
            if cell == "":
                kwargs[name] = None
            elif name in ("step", "layer"):
                kwargs[name] = int(cell)
            else:
                kwargs[name] = float(cell)
        return cls(**kwargs)


def snapshot_all_layers(
    net: Mlp,
    ref: ReferenceState,
    x: np.ndarray,
    step: int,
    train_loss: float,
    test_loss: Optional[float] = None,
) -> list[NfaSnapshot]:
    """Every metric for every weight layer, sharing one backward pass."""
    ref.check_compatible(net, x)
    cache = forward(net, x)
    preact = preact_gradients(net, cache)
    n = cache.n_samples
    rows = []
    # errstate: near divergence the quartic weight products overflow before
    # the loss does; the metrics then come out as None rather than warn.
    with np.errstate(over="ignore", invalid="ignore"):
        for layer in range(net.n_weight_layers):
            w = net.weights[layer]
            w0 = ref.weights0[layer]
            wb = w - w0
            d = preact[layer]
            db = d - ref.preact_grads0[layer]
            k = (d.T @ d) / n
            kbar = (db.T @ db) / n
            f_uc = w.T @ w
            f_c = wb.T @ wb
            agop = w.T @ k @ w
            agop_c = wb.T @ k @ wb
            den_dc = _trace_product(f_c, agop_c)
            den_uc = _trace_product(f_uc, agop)
            rows.append(
                NfaSnapshot(
                    step=step,
                    layer=layer,
                    uc_nfa=rho(f_uc, agop),
                    c_nfa=rho(f_c, agop_c),
                    dc_nfa=rho(f_c, wb.T @ kbar @ wb),
                    dc_ratio=_finite_ratio(
                        _trace_product(f_c, wb.T @ kbar @ wb), den_dc
                    ),
                    ptk_c_nfa=rho(w0.T @ w0, w0.T @ kbar @ w0),
                    c_uc_ratio=_finite_ratio(den_dc, den_uc),
                    train_loss=train_loss,
                    test_loss=test_loss,
                )
            )
    return rows
