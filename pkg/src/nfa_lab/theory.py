"""Closed-form alignment predictions for wide quadratic networks at small times.

For a one-hidden-layer network f(x) = sum_i a_i phi(w_i . x) with quadratic
phi trained by full-batch gradient flow on (X, y), the first-step weight
velocity is Wdot = W-grad of the loss with sign flipped, and the two Gram
matrices whose cosine similarity the laboratory tracks are

    G1 = Wdot^T Wdot          and        G2 = Wdot^T K Wdot,

with K the preactivation-gradient covariance.  At initialization both reduce
to words in three symmetric matrices: A = (X^T Y X)^2, B = X^T X, and the
random conjugation-invariant R = W^T diag(a)^2 W.  This module provides

  * exact normalized-trace moment bookkeeping for (A, B) and R,
  * the closed-form limits of t[ARARBR], t[ARAR], t[ARBRARBR] predicted by
    asymptotic freeness of R from (A, B),
  * a Monte-Carlo oracle that evaluates any such word by averaging over
    Haar conjugations of a FIXED R, so the closed forms can be checked
    against an estimate whose only error is sampling noise plus O(1/d^2)
    Weingarten bias,
  * the backprop-side derivative Grams with an independent kernel-side
    cross-check, and their idealized expectations,
  * Monte-Carlo expected tangent kernels over re-initializations, for
    first-order alignment predictions on arbitrary architectures.

All traces here are normalized: t[M] = tr(M)/dim.  The closed forms mix
moment factors of different counts, so they are only valid in this
convention; feeding raw traces produces garbage.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import linalg, network
from .linalg import ntrace
from .metrics import rho
from .network import Mlp, MlpConfig

__all__ = [
    "DataStats",
    "data_stats",
    "RStats",
    "r_sampler",
    "r_from_net",
    "r_stats_from_matrix",
    "r_stats",
    "Prediction",
    "predicted_numerator",
    "predicted_denom1",
    "predicted_denom2",
    "predicted_correlation",
    "free_word_oracle",
    "derivative_grams",
    "observed_derivative_correlation",
    "expected_grams_quadratic",
    "mc_expected_ptk",
    "first_order_prediction",
]


@dataclass(frozen=True)
class DataStats:
    """Normalized-trace moments of A = (X^T Y X)^2 and B = X^T X.

    Bars denote centering by the normalized trace: Abar = A - t[A] I.
    """

    dim: int
    t_a: float
    t_b: float
    t_a2: float
    t_b2: float
    t_abar2: float
    t_bbar2: float
    t_abar_bbar: float
    t_abar2_bbar: float
    t_abar_bbar2: float
    t_abarbbar_sq: float  # t[(Abar Bbar)^2]
    t_abar: float  # identically zero up to rounding; kept for the alternative tail


def _pair_stats(a: np.ndarray, b: np.ndarray) -> DataStats:
    d = a.shape[0]
    t_a = ntrace(a)
    t_b = ntrace(b)
    abar = a - t_a * np.eye(d)
    bbar = b - t_b * np.eye(d)
    ab = abar @ bbar
    return DataStats(
        dim=d,
        t_a=t_a,
        t_b=t_b,
        t_a2=ntrace(a @ a),
        t_b2=ntrace(b @ b),
        t_abar2=ntrace(abar @ abar),
        t_bbar2=ntrace(bbar @ bbar),
        t_abar_bbar=ntrace(ab),
        t_abar2_bbar=ntrace(abar @ ab),
        t_abar_bbar2=ntrace(ab @ bbar),
        t_abarbbar_sq=ntrace(ab @ ab),
        t_abar=ntrace(abar),
    )


def word_matrices(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """The deterministic letters A = (X^T Y X)^2 and B = X^T X for a dataset."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != x.shape[0]:
        raise ValueError(f"{y.shape[0]} labels for {x.shape[0]} rows")
    c = x.T @ (y[:, None] * x)
    return c @ c, x.T @ x


def data_stats(x: np.ndarray, y: np.ndarray) -> DataStats:
    a, b = word_matrices(x, y)
    return _pair_stats(a, b)


@dataclass(frozen=True)
class RStats:
    """First four normalized-trace moments of R, possibly seed-averaged."""

    r1: float
    r2: float
    r3: float
    r4: float
    n_seeds: int = 1

    def __post_init__(self):
        if self.r2 + 1e-12 * max(1.0, self.r1**2) < self.r1**2:
            raise ValueError(f"inconsistent moments: t[R^2]={self.r2} < t[R]^2={self.r1 ** 2}")


def r_sampler(rng: np.random.Generator, k: int, d: int) -> np.ndarray:
    """One draw of R = W^T diag(a)^2 W, W entries N(0, 1/k), a entries N(0, 1).

    This is the network-induced random letter up to an overall constant;
    every correlation built from it is invariant to that constant.
    """
    w = rng.standard_normal((k, d)) / np.sqrt(k)
    a = rng.standard_normal(k)
    return w.T @ (a[:, None] ** 2 * w)


def r_from_net(net: Mlp) -> np.ndarray:
    """R = W^T diag(a)^2 W read off a one-hidden-layer network.

    W is the first-layer weight matrix and a the readout row.  Training nets
    initialize W with variance s_0/d (fan-in) while the theory convention is
    variance 1/k; the two coincide only for square first layers, and the
    quadratic phi' contributes a further global factor 4 to the kernel —
    both constants drop out of every correlation built from R.
    """
    if net.n_weight_layers != 2:
        raise ValueError(
            f"R is defined for one-hidden-layer networks, got {net.n_weight_layers} weight layers"
        )
    w = net.weights[0]
    a = net.weights[1][0]
    return w.T @ (a[:, None] ** 2 * w)


def r_stats_from_matrix(r: np.ndarray) -> RStats:
    r2 = r @ r
    return RStats(
        r1=ntrace(r),
        r2=ntrace(r2),
        r3=ntrace(r2 @ r),
        r4=ntrace(r2 @ r2),
        n_seeds=1,
    )


def r_stats(rng: np.random.Generator, k: int, d: int, n_seeds: int) -> RStats:
    """Moments of R averaged over n_seeds independent draws."""
    if n_seeds < 1:
        raise ValueError(f"need at least one seed, got {n_seeds}")
    acc = np.zeros(4)
    for _ in range(n_seeds):
        s = r_stats_from_matrix(r_sampler(rng, k, d))
        acc += (s.r1, s.r2, s.r3, s.r4)
    acc /= n_seeds
    return RStats(r1=acc[0], r2=acc[1], r3=acc[2], r4=acc[3], n_seeds=n_seeds)


def predicted_numerator(ds: DataStats, rs: RStats) -> float:
    """Free limit of t[A R A R B R]."""
    return (
        ds.t_a**2 * ds.t_b * rs.r3
        + 2.0 * ds.t_a * rs.r1 * rs.r2 * ds.t_abar_bbar
        + ds.t_b * rs.r1 * rs.r2 * ds.t_abar2
        + rs.r1**3 * ds.t_abar2_bbar
    )


def predicted_denom1(ds: DataStats, rs: RStats) -> float:
    """Free limit of t[A R A R]."""
    return ds.t_a**2 * rs.r2 + rs.r1**2 * ds.t_abar2


def predicted_denom2(ds: DataStats, rs: RStats, alt_tail: bool = False) -> float:
    """Free limit of t[A R B R A R B R].

    The default tail term is t[Abar^2] t[B]^2 t[R^2]^2, the form this
    module's own expansion produces.  alt_tail swaps in
    t[Abar]^2 t[B^2] t[R^2]^2, which is identically zero because centered
    letters are traceless; it is kept selectable so the Monte-Carlo oracle
    can adjudicate between the two.
    """
    if alt_tail:
        tail = ds.t_abar**2 * ds.t_b2 * rs.r2**2
    else:
        tail = ds.t_abar2 * ds.t_b**2 * rs.r2**2
    return (
        ds.t_a**2 * ds.t_b**2 * rs.r4
        + 4.0 * ds.t_a * ds.t_b * rs.r1 * rs.r3 * ds.t_abar_bbar
        + ds.t_a**2 * rs.r2**2 * ds.t_bbar2
        + 2.0 * ds.t_b * rs.r1**2 * rs.r2 * ds.t_abar2_bbar
        + 2.0 * ds.t_a * rs.r1**2 * rs.r2 * ds.t_abar_bbar2
        + rs.r1**4 * ds.t_abarbbar_sq
        + 2.0 * rs.r1**2 * (rs.r2 - rs.r1**2) * ds.t_abar_bbar**2
        + tail
    )


@dataclass(frozen=True)
class Prediction:
    numerator: float
    denom1: float
    denom2: float
    correlation: Optional[float]


def predicted_correlation(
    ds: DataStats, rs: RStats, alt_tail: bool = False
) -> Prediction:
    """Predicted cosine similarity of the two derivative Grams,
    t[ARARBR] / sqrt(t[ARAR] t[ARBRARBR])."""
    num = predicted_numerator(ds, rs)
    d1 = predicted_denom1(ds, rs)
    d2 = predicted_denom2(ds, rs, alt_tail=alt_tail)
    corr = float(num / np.sqrt(d1 * d2)) if d1 > 0 and d2 > 0 else None
    return Prediction(numerator=num, denom1=d1, denom2=d2, correlation=corr)


_WORD_SYMBOLS = ("A", "B", "Abar", "Bbar", "R", "R2", "R3", "R4")


def free_word_oracle(
    rng: np.random.Generator,
    a: np.ndarray,
    b: np.ndarray,
    r: Union[np.ndarray, Callable[[np.random.Generator], np.ndarray]],
    word: Sequence[str],
    n_rotations: int,
) -> tuple[float, float]:
    """Monte-Carlo normalized trace of a word, averaging over Haar conjugations.

    Each rotation replaces every R-letter by O^T R O (same O within a word,
    fresh Haar O per rotation) while A-letters stay fixed, which realizes
    the ensemble whose large-d limit the closed forms describe.  R powers
    are taken after conjugation.  `r` may be a fixed matrix — then comparing
    against predictions built from its exact moments removes R-sampling
    noise from the budget — or a sampler called once per rotation for the
    fully stochastic ensemble.  Returns (mean, standard error).
    """
    if n_rotations < 2:
        raise ValueError(f"need at least two rotations for a standard error, got {n_rotations}")
    word = list(word)
    if not word:
        raise ValueError("empty word")
    for tok in word:
        if tok not in _WORD_SYMBOLS:
            raise ValueError(f"unknown word symbol {tok!r}; know {_WORD_SYMBOLS}")
    d = a.shape[0]
    draw = r if callable(r) else None
    if draw is None and r.shape != (d, d):
        raise ValueError("A, B, R must be square matrices of one common dimension")
    if a.shape != (d, d) or b.shape != (d, d):
        raise ValueError("A and B must be square matrices of one common dimension")
    eye = np.eye(d)
    fixed = {
        "A": a,
        "B": b,
        "Abar": a - ntrace(a) * eye,
        "Bbar": b - ntrace(b) * eye,
    }
    need_pow = max(
        ((int(tok[1:]) if len(tok) > 1 else 1) for tok in word if tok.startswith("R")),
        default=0,
    )
    vals = np.empty(n_rotations)
    for i in range(n_rotations):
        base = draw(rng) if draw is not None else r
        o = linalg.random_orthogonal(rng, d)
        letters = dict(fixed)
        rc = o.T @ base @ o
        letters["R"] = rc
        if need_pow >= 2:
            letters["R2"] = rc @ rc
        if need_pow >= 3:
            letters["R3"] = letters["R2"] @ rc
        if need_pow >= 4:
            letters["R4"] = letters["R2"] @ letters["R2"]
        prod = letters[word[0]]
        for tok in word[1:]:
            prod = prod @ letters[tok]
        vals[i] = ntrace(prod)
    mean = float(vals.mean())
    stderr = float(vals.std(ddof=1) / np.sqrt(n_rotations))
    return mean, stderr


def derivative_grams(
    net: Mlp,
    x: np.ndarray,
    y: np.ndarray,
    layer: int = 0,
    assume_zero_output: bool = False,
    check: bool = True,
    check_tol: float = 1e-9,
) -> tuple[np.ndarray, np.ndarray]:
    """(Wdot^T Wdot, Wdot^T K Wdot) for the current loss gradient at `layer`.

    Wdot is the gradient-descent velocity -dLoss/dW_l.  With
    assume_zero_output the per-sample sensitivity is taken to be exactly
    -y_a (the idealized start of training where f = 0); otherwise it is the
    mean-square value (f_a - y_a)/n.

    When check is on, both Grams are recomputed through the kernel-side
    factorization X_l^T Ldot Theta^p Ldot X_l (p = 1, 2, Theta the layer's
    tangent kernel) and the routes must agree to check_tol in relative
    Frobenius norm; disagreement raises ArithmeticError.
    """
    net.check_layer(layer)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    cache = network.forward(net, x)
    if y.shape[0] != cache.n_samples:
        raise ValueError(f"{y.shape[0]} labels for {cache.n_samples} samples")
    n = cache.n_samples
    ldot = -y if assume_zero_output else (cache.outputs - y) / n
    bw = network.backward(net, cache, ldot)
    wdot = -bw.weight_grads[layer]
    d = bw.preact_grads[layer]
    k = (d.T @ d) / n
    gram_w = wdot.T @ wdot
    gram_kw = wdot.T @ k @ wdot
    if check:
        lx = ldot[:, None] * cache.x_layers[layer]
        theta = d @ d.T
        alt_w = lx.T @ theta @ lx
        alt_kw = (lx.T @ (theta @ theta) @ lx) / n
        for got, want, name in ((gram_w, alt_w, "Wdot^T Wdot"), (gram_kw, alt_kw, "Wdot^T K Wdot")):
            scale = max(linalg.frobenius(got), linalg.frobenius(want), 1e-300)
            err = linalg.frobenius(got - want) / scale
            if err > check_tol:
                raise ArithmeticError(
                    f"derivative Gram routes disagree for {name}: relative error {err:.3e}"
                )
    return gram_w, gram_kw


def observed_derivative_correlation(
    net: Mlp,
    x: np.ndarray,
    y: np.ndarray,
    layer: int = 0,
    assume_zero_output: bool = False,
) -> Optional[float]:
    g1, g2 = derivative_grams(net, x, y, layer=layer, assume_zero_output=assume_zero_output)
    return rho(g1, g2)


def expected_grams_quadratic(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Idealized expectations of the first-layer derivative Grams for a wide
    one-hidden-layer quadratic network at init, in the zero-output regime:

        E[Wdot^T Wdot]   = (X^T Y X)^2
        E[Wdot^T K Wdot] = 3 tr(X^T X) (X^T Y X)^2 + 6 (X^T Y X)(X^T X)(X^T Y X)

    The trace is the raw (unnormalized) one.  These are stated limits, not
    finite-width identities; the Monte-Carlo route quantifies the gap at
    finite width rather than this function adjusting it.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    c = x.T @ (y[:, None] * x)
    b = x.T @ x
    cc = c @ c
    return cc, 3.0 * np.trace(b) * cc + 6.0 * c @ b @ c


def mc_expected_ptk(
    config: MlpConfig, x: np.ndarray, n_seeds: int, layer: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo E[Theta] and E[Theta^2] over re-initializations.

    Fresh networks are drawn from seeds derived from config.seed; the input
    batch stays fixed.  Returns the entrywise means of Theta and Theta @
    Theta (matrix square, not entry square).
    """
    if n_seeds < 1:
        raise ValueError(f"need at least one seed, got {n_seeds}")
    seeds = np.random.SeedSequence(config.seed).generate_state(n_seeds)
    n = np.asarray(x).shape[0]
    e1 = np.zeros((n, n))
    e2 = np.zeros((n, n))
    for s in seeds:
        net = network.init_mlp(replace(config, seed=int(s)))
        theta = network.ptk_kernel(net, x, x, layer)
        e1 += theta
        e2 += theta @ theta
    return e1 / n_seeds, e2 / n_seeds


def first_order_prediction(
    e_theta: np.ndarray, e_theta2: np.ndarray, x: np.ndarray, y: np.ndarray
) -> Optional[float]:
    """Predicted Gram correlation rho(X^T Y E[Theta] Y X, X^T Y E[Theta^2] Y X)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    yx = y[:, None] * x
    return rho(yx.T @ e_theta @ yx, yx.T @ e_theta2 @ yx)
