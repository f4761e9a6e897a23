"""Bias-free scalar-output MLPs with explicit forward/backward passes.

Layer convention: widths = (k_0, k_1, ..., k_L, 1) gives L hidden layers and
L+1 weight matrices, weights[l] of shape (k_{l+1}, k_l).  The forward pass is

    x_0 = input,   h_l = x_l W_l^T,   x_{l+1} = phi(h_l),   f = h_L

so the readout is linear.  Everything downstream (feature matrices,
gradient outer products, per-layer tangent kernels) is phrased in terms of
the cached activations x_l and the preactivation gradients

    D_l[a] = df(x_a)/dh_l,  an (n, k_{l+1}) matrix per layer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg

__all__ = [
    "ACTIVATIONS",
    "MlpConfig",
    "Mlp",
    "ForwardCache",
    "BackwardResult",
    "init_mlp",
    "forward",
    "backward",
    "preact_gradients",
    "input_gradients",
    "nfm",
    "agop_direct",
    "agop_factored",
    "ptk_feature_cov",
    "ptk_kernel",
    "layerwise_entk",
    "save_checkpoint",
    "load_checkpoint",
]


def _relu(u):
    return np.maximum(u, 0.0)


def _relu_prime(u):
    return (u > 0).astype(np.float64)


def _quadratic(u):
    return u * u


def _quadratic_prime(u):
    return 2.0 * u


def _identity(u):
    return u


def _identity_prime(u):
    return np.ones_like(u)


ACTIVATIONS = {
    "relu": (_relu, _relu_prime),
    "quadratic": (_quadratic, _quadratic_prime),
    "identity": (_identity, _identity_prime),
}


@dataclass(frozen=True)
class MlpConfig:
    """Architecture + init description; fully determines a network given a seed.

    init_scales holds one variance multiplier s_l per weight matrix:
    W_l entries are drawn i.i.d. N(0, s_l / k_l) (fan-in scaling).
    """

    widths: tuple[int, ...]
    activation: str
    init_scales: tuple[float, ...]
    seed: int

    def __post_init__(self):
        if len(self.widths) < 3:
            raise ValueError("need at least one hidden layer: widths = (d, k_1, ..., 1)")
        if self.widths[-1] != 1:
            raise ValueError(f"output width must be 1, got {self.widths[-1]}")
        if any(w < 1 for w in self.widths):
            raise ValueError(f"widths must be positive, got {self.widths}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}; know {sorted(ACTIVATIONS)}")
        if len(self.init_scales) != len(self.widths) - 1:
            raise ValueError(
                f"need one init scale per weight matrix "
                f"({len(self.widths) - 1}), got {len(self.init_scales)}"
            )
        if any(s <= 0 for s in self.init_scales):
            raise ValueError(f"init scales must be positive, got {self.init_scales}")

    @property
    def n_weight_layers(self) -> int:
        return len(self.widths) - 1


@dataclass
class Mlp:
    """Weights plus activation name.  `version` counts in-place weight updates
    so that forward caches from before an update are rejected downstream."""

    weights: list[np.ndarray]
    activation: str
    config: MlpConfig | None = None
    version: int = 0

    @property
    def n_weight_layers(self) -> int:
        return len(self.weights)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(w.shape[1] for w in self.weights) + (self.weights[-1].shape[0],)

    def check_layer(self, layer: int) -> int:
        if not 0 <= layer < self.n_weight_layers:
            raise ValueError(f"layer {layer} out of range [0, {self.n_weight_layers})")
        return layer

    def bump_version(self) -> None:
        self.version += 1

    def copy(self) -> "Mlp":
        return Mlp(
            weights=[w.copy() for w in self.weights],
            activation=self.activation,
            config=self.config,
            version=self.version,
        )


def init_mlp(config: MlpConfig) -> Mlp:
    rng = linalg.make_rng(config.seed)
    weights = []
    for l in range(config.n_weight_layers):
        fan_in = config.widths[l]
        fan_out = config.widths[l + 1]
        std = np.sqrt(config.init_scales[l] / fan_in)
        weights.append(linalg.random_gaussian(rng, fan_out, fan_in, std=std))
    return Mlp(weights=weights, activation=config.activation, config=config)


@dataclass
class ForwardCache:
    net: Mlp
    net_version: int
    x_layers: list[np.ndarray]  # x_layers[l]: (n, k_l), input to weight l
    h_layers: list[np.ndarray]  # h_layers[l]: (n, k_{l+1}), preactivations
    outputs: np.ndarray  # (n,)

    @property
    def n_samples(self) -> int:
        return self.outputs.shape[0]


def forward(net: Mlp, x: np.ndarray) -> ForwardCache:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"input batch must be 2-d, got shape {x.shape}")
    if x.shape[1] != net.weights[0].shape[1]:
        raise ValueError(
            f"input width {x.shape[1]} does not match first layer fan-in {net.weights[0].shape[1]}"
        )
    act, _ = ACTIVATIONS[net.activation]
    x_layers = [x]
    h_layers = []
    cur = x
    last = net.n_weight_layers - 1
    for l, w in enumerate(net.weights):
        h = cur @ w.T
        h_layers.append(h)
        if l < last:
            cur = act(h)
            x_layers.append(cur)
    return ForwardCache(
        net=net,
        net_version=net.version,
        x_layers=x_layers,
        h_layers=h_layers,
        outputs=h_layers[-1][:, 0],
    )


def _check_cache(net: Mlp, cache: ForwardCache) -> None:
    if cache.net is not net:
        raise ValueError("forward cache belongs to a different network")
    if cache.net_version != net.version:
        raise ValueError("stale forward cache: weights changed since the forward pass")


def _preact_grads(net: Mlp, cache: ForwardCache) -> list[np.ndarray]:
    """D_l = df/dh_l for every layer, computed top-down.  Loss-independent."""
    _, act_prime = ACTIVATIONS[net.activation]
    n = cache.n_samples
    grads = [None] * net.n_weight_layers
    d = np.ones((n, 1))
    grads[-1] = d
    for l in range(net.n_weight_layers - 1, 0, -1):
        d = (d @ net.weights[l]) * act_prime(cache.h_layers[l - 1])
        grads[l - 1] = d
    return grads


def preact_gradients(net: Mlp, cache: ForwardCache) -> list[np.ndarray]:
    """D_l = df/dh_l for every layer on the cached batch (loss-independent)."""
    _check_cache(net, cache)
    return _preact_grads(net, cache)


@dataclass
class BackwardResult:
    weight_grads: list[np.ndarray]  # dLoss/dW_l, same shapes as net.weights
    preact_grads: list[np.ndarray]  # D_l, (n, k_{l+1})


def backward(net: Mlp, cache: ForwardCache, ldot: np.ndarray) -> BackwardResult:
    """Weight gradients for a loss with per-sample output sensitivities ldot.

    ldot[a] = dLoss/df(x_a); for the (1/2n) mean-square loss that is
    (f_a - y_a)/n.  Gradients sum the per-sample terms, so the 1/n lives in
    ldot, not here.
    """
    _check_cache(net, cache)
    ldot = np.asarray(ldot, dtype=np.float64).reshape(-1)
    if ldot.shape[0] != cache.n_samples:
        raise ValueError(f"ldot has {ldot.shape[0]} entries for {cache.n_samples} samples")
    preact = _preact_grads(net, cache)
    weight_grads = [d.T @ (ldot[:, None] * xl) for d, xl in zip(preact, cache.x_layers)]
    return BackwardResult(weight_grads=weight_grads, preact_grads=preact)


def input_gradients(net: Mlp, cache: ForwardCache, layer: int) -> np.ndarray:
    """Rows df(x_a)/dx_l: gradients w.r.t. the input of weight layer l."""
    _check_cache(net, cache)
    net.check_layer(layer)
    preact = _preact_grads(net, cache)
    return preact[layer] @ net.weights[layer]


def nfm(net: Mlp, layer: int) -> np.ndarray:
    """Neural feature matrix W_l^T W_l of layer l."""
    net.check_layer(layer)
    w = net.weights[layer]
    return w.T @ w


def agop_direct(net: Mlp, x: np.ndarray, layer: int) -> np.ndarray:
    """(1/n) sum_a g_a g_a^T with g_a = df(x_a)/dx_l, accumulated sample-wise."""
    net.check_layer(layer)
    cache = forward(net, x)
    g = input_gradients(net, cache, layer)
    return np.einsum("ai,aj->ij", g, g) / g.shape[0]


def ptk_feature_cov(net: Mlp, x: np.ndarray, layer: int) -> np.ndarray:
    """K_l = (1/n) D_l^T D_l, the sample covariance of preactivation gradients."""
    net.check_layer(layer)
    cache = forward(net, x)
    d = _preact_grads(net, cache)[layer]
    return (d.T @ d) / d.shape[0]


def agop_factored(net: Mlp, x: np.ndarray, layer: int) -> np.ndarray:
    """AGOP through the sandwich W_l^T K_l W_l; equals agop_direct up to rounding."""
    net.check_layer(layer)
    w = net.weights[layer]
    return w.T @ ptk_feature_cov(net, x, layer) @ w


def ptk_kernel(net: Mlp, x: np.ndarray, z: np.ndarray, layer: int) -> np.ndarray:
    """Pre-activation tangent kernel D_l(x) D_l(z)^T, one entry per sample pair."""
    net.check_layer(layer)
    dx = _preact_grads(net, forward(net, x))[layer]
    dz = _preact_grads(net, forward(net, z))[layer]
    return dx @ dz.T


def layerwise_entk(net: Mlp, x: np.ndarray, z: np.ndarray, layer: int) -> np.ndarray:
    """Empirical tangent kernel restricted to layer l's parameters.

    Materializes the per-sample parameter gradients dF/dW_l = D_l[a] (x)
    x_l[a] as rank-one matrices and takes their pairwise inner products.
    Deliberately does not use the kernel factorization, so identities
    relating this to ptk_kernel are checks, not tautologies.  Memory is
    O(n * k_{l+1} * k_l).
    """
    net.check_layer(layer)
    cx = forward(net, x)
    cz = forward(net, z)
    gx = np.einsum("ai,aj->aij", _preact_grads(net, cx)[layer], cx.x_layers[layer])
    gz = np.einsum("bi,bj->bij", _preact_grads(net, cz)[layer], cz.x_layers[layer])
    return np.einsum("aij,bij->ab", gx, gz)


def save_checkpoint(net: Mlp, directory: str | Path, step: int) -> Path:
    """One CSV per weight matrix plus a JSON manifest; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    files = []
    for l, w in enumerate(net.weights):
        name = f"weights_{l}.csv"
        linalg.save_matrix_csv(directory / name, w)
        files.append(name)
    manifest = {
        "widths": list(net.widths),
        "activation": net.activation,
        "init_scales": list(net.config.init_scales) if net.config else None,
        "seed": net.config.seed if net.config else None,
        "step": step,
        "weight_files": files,
    }
    path = directory / "checkpoint.json"
    linalg.save_json(path, manifest)
    return path


def load_checkpoint(directory: str | Path) -> tuple[Mlp, int]:
    directory = Path(directory)
    manifest_path = directory / "checkpoint.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no checkpoint manifest at {manifest_path}")
    manifest = linalg.load_json(manifest_path)
    weights = [linalg.load_matrix_csv(directory / name) for name in manifest["weight_files"]]
    widths = tuple(manifest["widths"])
    got = tuple(w.shape[1] for w in weights) + (weights[-1].shape[0],)
    if got != widths:
        raise ValueError(f"checkpoint widths {widths} do not match weight files {got}")
    config = None
    if manifest.get("init_scales") is not None and manifest.get("seed") is not None:
        config = MlpConfig(
            widths=widths,
            activation=manifest["activation"],
            init_scales=tuple(manifest["init_scales"]),
            seed=int(manifest["seed"]),
        )
    net = Mlp(weights=weights, activation=manifest["activation"], config=config)
    return net, int(manifest["step"])
