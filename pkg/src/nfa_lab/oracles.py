"""Self-contained numerical oracles runnable from the command line.

Each suite returns (name, passed, detail) tuples.  These are the checks that
do not trust the closed-form implementations: finite differences for the
backward pass, Monte-Carlo alternating-word traces for the free-probability
formulas, and a sampling estimate for the chain-task gradient second moment.
The test suite calls the same entry points.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from . import datasets, linalg, network, theory
from .network import MlpConfig, backward, forward, init_mlp
from .optim import mse_loss_and_ldot

__all__ = ["finite_difference_suite", "free_word_suite", "egop_mc_suite", "run_suite", "SUITES"]

Result = tuple[str, bool, str]


def _fd_gradient_check(activation: str, seed: int, tol: float = 1e-5) -> Result:
    """Central finite differences of the MSE loss against backward()."""
    rng = linalg.make_rng(seed)
    config = MlpConfig(
        widths=(6, 8, 5, 1), activation=activation, init_scales=(1.0, 1.0, 1.0), seed=seed
    )
    net = init_mlp(config)
    x = rng.standard_normal((12, 6))
    y = rng.standard_normal(12)

    def loss() -> float:
        return mse_loss_and_ldot(forward(net, x).outputs, y)[0]

    cache = forward(net, x)
    _, ldot = mse_loss_and_ldot(cache.outputs, y)
    grads = backward(net, cache, ldot).weight_grads
    h = 1e-6
    worst = 0.0
    for layer, g in enumerate(grads):
        w = net.weights[layer]
        # Probe a deterministic scatter of entries rather than every one.
        idx = [(i % w.shape[0], (3 * i) % w.shape[1]) for i in range(min(10, w.size))]
        for i, j in idx:
            orig = w[i, j]
            w[i, j] = orig + h
            up = loss()
            w[i, j] = orig - h
            down = loss()
            w[i, j] = orig
            fd = (up - down) / (2 * h)
            denom = max(abs(fd), abs(g[i, j]), 1e-8)
            worst = max(worst, abs(fd - g[i, j]) / denom)
    passed = worst <= tol
    return (
        f"finite-difference gradients [{activation}]",
        passed,
        f"max relative error {worst:.3e} (tol {tol:g})",
    )


def finite_difference_suite() -> list[Result]:
    return [_fd_gradient_check(act, seed=11 + i) for i, act in enumerate(("identity", "quadratic", "relu"))]


def _free_word_case(label: str, x: np.ndarray, y: np.ndarray, d: int, seed: int,
                    n_rotations: int) -> list[Result]:
    a, b = theory.word_matrices(x, y)
    rng = linalg.make_rng(seed)
    r = theory.r_sampler(rng, k=d, d=d)
    rs = theory.r_stats_from_matrix(r)
    ds = theory.data_stats(x, y)
    oracle_rng = linalg.make_rng(seed + 1)
    cases = [
        ("numerator ARARBR", theory.predicted_numerator(ds, rs), ("A", "R", "A", "R", "B", "R")),
        ("denom1 ARAR", theory.predicted_denom1(ds, rs), ("A", "R", "A", "R")),
        (
            "denom2 ARBRARBR",
            theory.predicted_denom2(ds, rs),
            ("A", "R", "B", "R", "A", "R", "B", "R"),
        ),
    ]
    out = []
    for name, predicted, word in cases:
        mean, se = theory.free_word_oracle(oracle_rng, a, b, r, word, n_rotations)
        dev = abs(predicted - mean)
        passed = dev <= 3 * se
        out.append(
            (
                f"free-word {name} [{label}]",
                passed,
                f"predicted {predicted:.6g}, MC {mean:.6g} ± {se:.2g} ({dev / se if se > 0 else 0:.2f} SE)",
            )
        )
    return out


def free_word_suite(d: int = 128, n_rotations: int = 200) -> list[Result]:
    rng = linalg.make_rng(2024)
    x_iso = rng.standard_normal((d, d)) / np.sqrt(d)
    y_iso = datasets.chain_labels(x_iso, 5)
    x_dec = datasets.gaussian_decay(rng, d, d, alpha=1.0)
    y_dec = datasets.chain_labels(x_dec, 5)
    results = _free_word_case("isotropic", x_iso, y_iso, d, seed=31, n_rotations=n_rotations)
    results += _free_word_case("decay a=1", x_dec, y_dec, d, seed=37, n_rotations=n_rotations)
    return results


def egop_mc_suite(n_samples: int = 1_000_000, tol: float = 0.02) -> list[Result]:
    d, r = 8, 5
    exact = datasets.chain_monomial_egop(d, r)
    mc = datasets.chain_monomial_egop_mc(linalg.make_rng(99), d, r, n_samples=n_samples)
    err = linalg.frobenius(mc - exact) / linalg.frobenius(exact)
    return [
        (
            "chain EGOP analytic vs MC",
            err <= tol,
            f"relative Frobenius error {err:.4f} at {n_samples:.0e} samples (tol {tol})",
        )
    ]


SUITES: dict[str, Callable[[], list[Result]]] = {
    "fd": finite_difference_suite,
    "freeword": free_word_suite,
    "egop": egop_mc_suite,
}


def run_suite(name: str) -> list[Result]:
    if name == "all":
        results = []
        for suite in SUITES.values():
            results += suite()
        return results
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; available: all, {', '.join(SUITES)}")
    return SUITES[name]()
