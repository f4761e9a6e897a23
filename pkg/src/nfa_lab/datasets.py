"""Synthetic regression/classification datasets used by the experiments.

Each generator takes an explicit numpy Generator so draws are reproducible
and the draw order inside each generator is part of its contract.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg

__all__ = [
    "Dataset",
    "chain_labels",
    "chain_monomial",
    "chain_monomial_egop",
    "chain_monomial_egop_mc",
    "decay_spectrum",
    "gaussian_decay",
    "BalanceParams",
    "alignment_reversing",
    "corrupt_spectrum",
    "save_dataset_csv",
    "load_dataset_csv",
]


@dataclass
class Dataset:
    """A batch of inputs with scalar targets and provenance metadata."""

    x: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64).reshape(-1)
        if self.x.ndim != 2:
            raise ValueError(f"x must be 2-d, got shape {self.x.shape}")
        if self.y.shape[0] != self.x.shape[0]:
            raise ValueError(f"{self.y.shape[0]} labels for {self.x.shape[0]} rows")

    @property
    def n_samples(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]


def chain_labels(x: np.ndarray, r: int) -> np.ndarray:
    """Chain-polynomial labels on given inputs, standardized to unit std.

    y_raw = sum_{j=0}^{r-1} x_j x_{(j+1) mod r} over the first r coordinates.
    """
    x = np.asarray(x, dtype=np.float64)
    if not 3 <= r <= x.shape[1]:
        raise ValueError(f"chain length must satisfy 3 <= r <= d, got r={r}, d={x.shape[1]}")
    if x.shape[0] < 2:
        raise ValueError(f"need n >= 2 to standardize labels, got n={x.shape[0]}")
    y_raw = np.zeros(x.shape[0])
    for j in range(r):
        y_raw += x[:, j] * x[:, (j + 1) % r]
    std = float(np.std(y_raw))
    if std == 0.0:
        raise ValueError("degenerate draw: chain labels have zero variance")
    return y_raw / std


def chain_monomial(rng: np.random.Generator, n: int, d: int, r: int) -> Dataset:
    """Standard-normal inputs with a cyclic chain of adjacent-pair products.

    Labels are rescaled to unit empirical standard deviation (the raw
    variance is r for standard-normal inputs).
    """
    if not 3 <= r <= d:
        raise ValueError(f"chain length must satisfy 3 <= r <= d, got r={r}, d={d}")
    if n < 2:
        raise ValueError(f"need n >= 2 to standardize labels, got n={n}")
    x = rng.standard_normal((n, d))
    return Dataset(x=x, y=chain_labels(x, r), meta={"kind": "chain_monomial", "n": n, "d": d, "r": r})


def chain_monomial_egop(d: int, r: int) -> np.ndarray:
    """Exact E[grad y_raw grad y_raw^T] for the unscaled chain polynomial.

    Gradient coordinate i < r is x_{(i-1) mod r} + x_{(i+1) mod r}, so the
    second moment has 2 on the leading r x r diagonal and 1 at cyclic
    distance two, i.e. at (i, (i±2) mod r); coordinates >= r are inactive.
    """
    if not 3 <= r <= d:
        raise ValueError(f"chain length must satisfy 3 <= r <= d, got r={r}, d={d}")
    m = np.zeros((d, d))
    for i in range(r):
        m[i, i] += 2.0
        m[i, (i + 2) % r] += 1.0
        m[i, (i - 2) % r] += 1.0
    return m


def chain_monomial_egop_mc(
    rng: np.random.Generator, d: int, r: int, n_samples: int = 1_000_000
) -> np.ndarray:
    """Monte-Carlo estimate of the chain-polynomial gradient second moment.

    Independent oracle for chain_monomial_egop: gradients are evaluated by
    the shift formula on fresh standard-normal draws, no closed form used.
    """
    if not 3 <= r <= d:
        raise ValueError(f"chain length must satisfy 3 <= r <= d, got r={r}, d={d}")
    total = np.zeros((d, d))
    done = 0
    block = 100_000
    while done < n_samples:
        b = min(block, n_samples - done)
        x = rng.standard_normal((b, d))
        g = np.zeros((b, d))
        for i in range(r):
            g[:, i] = x[:, (i - 1) % r] + x[:, (i + 1) % r]
        total += g.T @ g
        done += b
    return total / n_samples


def decay_spectrum(d: int, alpha: float) -> np.ndarray:
    """Covariance eigenvalues lambda_k = 1 / (1 + k^alpha), k = 1..d."""
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    k = np.arange(1, d + 1, dtype=np.float64)
    return 1.0 / (1.0 + k**alpha)


def gaussian_decay(rng: np.random.Generator, n: int, d: int, alpha: float) -> np.ndarray:
    """Rows drawn N(0, Q diag(lambda) Q^T) with a fresh Haar eigenbasis Q."""
    lam = decay_spectrum(d, alpha)
    q = linalg.random_orthogonal(rng, d)
    g = rng.standard_normal((n, d))
    return (g * np.sqrt(lam)) @ q.T


@dataclass(frozen=True)
class BalanceParams:
    """Knobs of the alignment-reversing construction.

    gamma is the fraction of rows carrying the spiked class; eps1 is the
    isotropic part of the spiked covariance 11^T + eps1*I; eps2 is the
    entrywise noise added to the assembled inputs; label_shift is added to
    all labels to keep them off exact {0, 1}.
    """

    gamma: float
    eps1: float = 0.5
    eps2: float = 1e-2
    label_shift: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.eps1 <= 0:
            raise ValueError(f"eps1 must be positive, got {self.eps1}")
        if self.eps2 < 0:
            raise ValueError(f"eps2 must be nonnegative, got {self.eps2}")


def _spiked_rows(rng: np.random.Generator, rows: int, d: int, eps1: float) -> np.ndarray:
    # Row = z*1 + sqrt(eps1)*g gives covariance 11^T + eps1*I.
    z = rng.standard_normal((rows, 1))
    g = rng.standard_normal((rows, d))
    return z + math.sqrt(eps1) * g


def _balance_blocks(
    rng: np.random.Generator, n: int, d: int, params: BalanceParams
) -> tuple[np.ndarray, np.ndarray]:
    """The two pre-noise blocks (x1, x2); x2 has zero rows when gamma = 1.

    x2 is built to invert the spectrum of the first block: with S1, U1 the
    eigen-pairs of x1^T x1 and V2 the left singular frame of an independent
    spiked draw, x2 = V2 pinv(S1) U1^T, so that x2^T x2 = pinv(x1^T x1)^2
    whenever the second block has at least d rows.
    """
    g = math.ceil(params.gamma * n)
    if g < 1 or g > n:
        raise ValueError(f"spiked block would have {g} of {n} rows")
    x1 = _spiked_rows(rng, g, d, params.eps1)
    m = n - g
    if m == 0:
        return x1, np.zeros((0, d))
    eig = linalg.sym_eig(x1.T @ x1)
    s_inv = linalg.invert_singular_values(eig.eigenvalues)
    raw2 = _spiked_rows(rng, m, d, params.eps1)
    sv = linalg.svd(raw2)
    v2 = np.zeros((m, d))
    v2[:, : sv.u.shape[1]] = sv.u
    x2 = (v2 * s_inv) @ eig.eigenvectors.T
    return x1, x2


def alignment_reversing(
    rng: np.random.Generator, n: int, d: int, params: BalanceParams
) -> Dataset:
    """Binary task whose second block reverses the first block's input alignment.

    Block one (labels 1) is spiked-Gaussian; block two (labels 0) is
    constructed so its Gram is the squared pseudo-inverse of block one's.
    Entrywise eps2 noise and a small label shift are applied last.
    Draw order: spiked block, second-block raw draw, noise.
    """
    x1, x2 = _balance_blocks(rng, n, d, params)
    g = x1.shape[0]
    x = np.vstack([x1, x2])
    y = np.concatenate([np.ones(g), np.zeros(n - g)])
    if params.eps2 > 0:
        x = x + params.eps2 * rng.standard_normal((n, d))
    y = y + params.label_shift
    meta = {
        "kind": "alignment_reversing",
        "n": n,
        "d": d,
        "gamma": params.gamma,
        "eps1": params.eps1,
        "eps2": params.eps2,
        "label_shift": params.label_shift,
        "spiked_rows": g,
    }
    return Dataset(x=x, y=y, meta=meta)


def corrupt_spectrum(rng: np.random.Generator, k: np.ndarray) -> np.ndarray:
    """Same spectrum as the symmetric input, fresh Haar-random eigenbasis."""
    eig = linalg.sym_eig(k)
    o = linalg.random_orthogonal(rng, k.shape[0])
    return (o * eig.eigenvalues) @ o.T


def save_dataset_csv(dataset: Dataset, path: str | Path) -> None:
    """Rows are x followed by y in the last column; meta goes to '<path>.json'."""
    path = Path(path)
    body = np.column_stack([dataset.x, dataset.y])
    linalg.save_matrix_csv(path, body)
    linalg.save_json(Path(str(path) + ".json"), dataset.meta)


def load_dataset_csv(path: str | Path) -> Dataset:
    path = Path(path)
    try:
        body = linalg.load_matrix_csv(path)
    except ValueError as exc:
        raise ValueError(f"{exc}") from None
    if body.shape[1] < 2:
        raise ValueError(f"{path}: need at least one feature column plus labels")
    sidecar = Path(str(path) + ".json")
    meta = linalg.load_json(sidecar) if sidecar.exists() else {}
    return Dataset(x=body[:, :-1], y=body[:, -1], meta=meta)
