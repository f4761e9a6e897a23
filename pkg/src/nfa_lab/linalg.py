"""Dense linear-algebra helpers and seeded randomness shared by every module.

All arrays are float64 numpy matrices.  Randomness flows through
counter-based Philox generators so that runs are reproducible and
parallel workers can draw from provably independent streams.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "make_rng",
    "split_rng",
    "matmul",
    "trace",
    "ntrace",
    "frobenius",
    "SymEig",
    "sym_eig",
    "Svd",
    "svd",
    "invert_singular_values",
    "random_gaussian",
    "random_orthogonal",
    "save_matrix_csv",
    "load_matrix_csv",
    "save_json",
    "load_json",
]

# Relative symmetry slack accepted by sym_eig before rejecting its input.
_SYMMETRY_TOL = 1e-10


def make_rng(seed: int) -> np.random.Generator:
    """Philox generator for `seed`.  Same seed, same stream, any platform."""
    return np.random.Generator(np.random.Philox(seed))


def split_rng(seed: int, n: int) -> list[np.random.Generator]:
    """n independent Philox streams derived from one root seed.

    Workers indexed by position get non-overlapping streams regardless of
    how many draws each one makes, so threaded sweeps stay reproducible.
    """
    if n < 1:
        raise ValueError(f"need at least one stream, got n={n}")
    root = np.random.Philox(key=seed)
    # jumped(i) advances the counter by i * 2**128 draws: streams cannot
    # overlap unless a single worker consumes 2**128 values.
    return [np.random.Generator(root.jumped(i)) for i in range(n)]


def _as_matrix(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {a.shape}")
    return a


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit dimension check."""
    a = _as_matrix(a, "left factor")
    b = _as_matrix(b, "right factor")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"inner dimensions differ: {a.shape} @ {b.shape}")
    return a @ b


def trace(a: np.ndarray) -> float:
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"trace needs a square matrix, got {a.shape}")
    return float(np.trace(a))


def ntrace(a: np.ndarray) -> float:
    """Normalized trace tr(a)/dim — the natural scale for free-probability moments."""
    return trace(a) / a.shape[0]


def frobenius(a: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64)))


@dataclass(frozen=True)
class SymEig:
    """Eigen-decomposition of a symmetric matrix, eigenvalues descending."""

    eigenvalues: np.ndarray  # (d,)
    eigenvectors: np.ndarray  # (d, d), columns match eigenvalues

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


def sym_eig(a: np.ndarray) -> SymEig:
    """Full eigen-decomposition of a symmetric matrix.

    Rejects matrices whose asymmetry exceeds a small relative tolerance
    instead of silently symmetrizing, so callers cannot feed in the wrong
    object (e.g. an unsymmetrized product) unnoticed.
    """
    a = _as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"sym_eig needs a square matrix, got {a.shape}")
    scale = float(np.abs(a).max())
    if scale > 0 and float(np.abs(a - a.T).max()) > _SYMMETRY_TOL * scale:
        raise ValueError("sym_eig: input is not symmetric within tolerance")
    w, v = np.linalg.eigh(a)
    order = np.argsort(w)[::-1]
    return SymEig(eigenvalues=w[order], eigenvectors=v[:, order])


@dataclass(frozen=True)
class Svd:
    """Thin SVD a = U diag(S) V^T with singular values descending."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.v.T


def svd(a: np.ndarray) -> Svd:
    a = _as_matrix(a)
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return Svd(u=u, s=s, v=vh.T)


def invert_singular_values(s: np.ndarray, threshold: float = 1e-10) -> np.ndarray:
    """Pseudo-inverse of a nonnegative spectrum: 1/s above threshold*max(s), else 0."""
    s = np.asarray(s, dtype=np.float64)
    if s.size == 0:
        return s.copy()
    cut = threshold * float(s.max())
    out = np.zeros_like(s)
    keep = s > cut
    out[keep] = 1.0 / s[keep]
    return out


def random_gaussian(rng: np.random.Generator, rows: int, cols: int, std: float = 1.0) -> np.ndarray:
    if rows < 1 or cols < 1:
        raise ValueError(f"matrix shape must be positive, got ({rows}, {cols})")
    if std < 0:
        raise ValueError(f"std must be nonnegative, got {std}")
    return std * rng.standard_normal((rows, cols))


def random_orthogonal(rng: np.random.Generator, dim: int) -> np.ndarray:
    """Haar-distributed orthogonal matrix via QR with sign-fixed diagonal."""
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    # Fixing the sign of diag(r) makes the QR factorization unique and the
    # resulting distribution exactly Haar rather than a coset of it.
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def save_matrix_csv(path: str | Path, a: np.ndarray) -> None:
    """Write one matrix as bare CSV: comma-separated rows, '.' decimal, no header.

    %.17g keeps the round-trip bit-exact for float64.
    """
    a = _as_matrix(a)
    np.savetxt(path, a, delimiter=",", fmt="%.17g")


def load_matrix_csv(path: str | Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix csv not found: {path}")
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # loadtxt warns on empty input
            a = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed matrix csv ({exc})") from None
    if a.size == 0:
        raise ValueError(f"{path}: empty matrix csv")
    return a


def save_json(path: str | Path, obj: dict) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def load_json(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
