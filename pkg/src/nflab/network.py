"""Fully connected networks: configuration, initialization, forward, gradients.

A network with layer widths (n_0, n_1, ..., n_L) maps row-stacked inputs
X (N x n_0) through L-1 activated layers and one affine output layer:

    F_0 = X
    F_k = phi(F_{k-1} W_k + b_k)     k = 1 .. L-1
    F_L = F_{L-1} W_L + b_L

Weights W_k are (n_{k-1} x n_k); biases are row vectors broadcast over N.
The training objective is the half sum of squared errors over all output
entries (not the mean), so gradient magnitudes grow with the sample count.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .activations import Activation, activate, activate_prime
from .rng import RngState

INIT_SCHEMES = (
    "lecun_normal",
    "lecun_uniform",
    "xavier_normal",
    "xavier_uniform",
    "kaiming_normal",
    "kaiming_uniform",
    "shrunk_final_normal",
    "shrunk_final_uniform",
    "custom_final",
)


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture plus initialization policy.

    widths includes the input and output dims: (n_0, n_1, ..., n_L).
    final_exponent / final_gain only matter for init="custom_final",
    where the output layer draws from N(0, final_gain / n_in**final_exponent).
    bias_value fills every bias with a constant (0.0 keeps them off).
    """

    widths: tuple[int, ...]
    activation: Activation
    init: str = "lecun_normal"
    bias_value: float = 0.0
    final_exponent: float = 1.5
    final_gain: float = 2.0
    pe_dim: int = 0          # even RFF embedding width; 0 disables the embedding
    pe_input_dim: int = 0    # raw coordinate dim fed to the frozen embedding
    pe_sigma_b: float = 1.0

    def __post_init__(self):
        if len(self.widths) < 3:
            raise ValueError("need at least one hidden layer: (n_in, n_hidden..., n_out)")
        if any(int(w) != w or w < 1 for w in self.widths):
            raise ValueError(f"widths must be positive integers, got {self.widths}")
        if self.init not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {self.init!r}")
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.pe_dim:
            if self.pe_dim % 2 or self.pe_dim < 2:
                raise ValueError("pe_dim must be a positive even integer")
            if self.pe_input_dim < 1:
                raise ValueError("pe_input_dim required when the embedding is on")
            if self.widths[0] != self.pe_dim:
                raise ValueError("widths[0] must equal pe_dim when the embedding is on")
            if self.pe_sigma_b <= 0:
                raise ValueError("pe_sigma_b must be positive")

    @property
    def depth(self) -> int:
        """Number of weight layers L."""
        return len(self.widths) - 1


@dataclass
class DenseNet:
    """Materialized parameters for a NetworkConfig.

    pe_matrix, when present, is the frozen random-feature projection; it is
    drawn once at init time and never touched by optimizers.
    """

    config: NetworkConfig
    ws: list = field(default_factory=list)
    bs: list = field(default_factory=list)
    pe_matrix: np.ndarray | None = None

    def copy(self) -> "DenseNet":
        return DenseNet(
            self.config,
            [w.copy() for w in self.ws],
            [b.copy() for b in self.bs],
            None if self.pe_matrix is None else self.pe_matrix.copy(),
        )


@dataclass(frozen=True)
class NetTemplate:
    """Recipe that fixes everything about a net except the searched width.

    config(n_in, last_width, n_out) produces a NetworkConfig whose last
    hidden layer has last_width units; any earlier hidden layers sit at
    fixed_width.  With pe_dim set, a frozen random Fourier embedding of the
    raw n_in coordinates feeds the first trainable layer.
    """

    activation: Activation
    init: str = "lecun_normal"
    hidden_layers: int = 1
    fixed_width: int = 64
    bias_value: float = 0.0
    final_exponent: float = 1.5
    final_gain: float = 2.0
    pe_dim: int = 0
    pe_sigma_b: float = 1.0

    def config(self, n_in: int, last_width: int, n_out: int = 1) -> NetworkConfig:
        if self.hidden_layers < 1:
            raise ValueError("need at least one hidden layer")
        hidden = (self.fixed_width,) * (self.hidden_layers - 1) + (last_width,)
        first = self.pe_dim if self.pe_dim else n_in
        return NetworkConfig(
            (first, *hidden, n_out),
            self.activation,
            init=self.init,
            bias_value=self.bias_value,
            final_exponent=self.final_exponent,
            final_gain=self.final_gain,
            pe_dim=self.pe_dim,
            pe_input_dim=n_in if self.pe_dim else 0,
            pe_sigma_b=self.pe_sigma_b,
        )


def _layer_std(
    scheme: str,
    n_in: int,
    n_out: int,
    is_final: bool,
    final_exponent: float = 1.5,
    final_gain: float = 2.0,
):
    """Return ("normal", std) or ("uniform", bound) for one layer."""
    if scheme == "lecun_normal":
        return "normal", np.sqrt(1.0 / n_in)
    if scheme == "lecun_uniform":
        return "uniform", np.sqrt(3.0 / n_in)
    if scheme == "xavier_normal":
        return "normal", np.sqrt(2.0 / (n_in + n_out))
    if scheme == "xavier_uniform":
        return "uniform", np.sqrt(6.0 / (n_in + n_out))
    if scheme == "kaiming_normal":
        return "normal", np.sqrt(2.0 / n_in)
    if scheme == "kaiming_uniform":
        return "uniform", np.sqrt(6.0 / n_in)
    if scheme == "shrunk_final_normal":
        if is_final:
            return "normal", np.sqrt(2.0 / n_in ** 1.5)
        return "normal", np.sqrt(1.0 / n_in)
    if scheme == "shrunk_final_uniform":
        # Deliberately 3x smaller variance than the matching normal scheme:
        # bounds are 1/sqrt(n_in) and 1/n_in**(3/4), not variance-matched.
        if is_final:
            return "uniform", n_in ** -0.75
        return "uniform", n_in ** -0.5
    if scheme == "custom_final":
        if is_final:
            return "normal", np.sqrt(final_gain / n_in**final_exponent)
        return "normal", np.sqrt(1.0 / n_in)
    raise ValueError(f"unknown init scheme {scheme!r}")


def init_network(config: NetworkConfig, rng: RngState) -> DenseNet:
    """Draw parameters for config.

    Each layer pulls from its own derived stream, so adding layers or
    reordering draws elsewhere never shifts an existing layer's values.
    """
    net = DenseNet(config)
    L = config.depth
    for k in range(1, L + 1):
        n_in, n_out = config.widths[k - 1], config.widths[k]
        family, scale = _layer_std(
            config.init, n_in, n_out, k == L, config.final_exponent, config.final_gain
        )
        layer_rng = rng.derive(("W", k))
        if family == "normal":
            w = layer_rng.normal((n_in, n_out), std=scale)
        else:
            w = layer_rng.uniform((n_in, n_out), -scale, scale)
        net.ws.append(w)
        net.bs.append(np.full((1, n_out), config.bias_value))
    if config.pe_dim:
        net.pe_matrix = make_rff_matrix(
            rng.derive("pe"), config.pe_input_dim, config.pe_dim // 2, config.pe_sigma_b
        )
    return net


def param_count(net: DenseNet) -> int:
    return sum(w.size for w in net.ws) + sum(b.size for b in net.bs)


def forward_features(net: DenseNet, x: np.ndarray) -> list:
    """All layer outputs [F_0, F_1, ..., F_L]; F_L is the prediction.

    When the net carries a frozen embedding, F_0 is the embedded input (the
    effective first-layer input), not the raw coordinates.
    """
    x = np.asarray(x, dtype=np.float64)
    if net.pe_matrix is not None:
        if x.ndim != 2 or x.shape[1] != net.config.pe_input_dim:
            raise ValueError(
                f"input must be (N, {net.config.pe_input_dim}) before embedding, got {x.shape}"
            )
        x = rff_embed(x, net.pe_matrix)
    elif x.ndim != 2 or x.shape[1] != net.config.widths[0]:
        raise ValueError(
            f"input must be (N, {net.config.widths[0]}), got {x.shape}"
        )
    act = net.config.activation
    feats = [x]
    L = net.config.depth
    for k in range(L):
        z = feats[-1] @ net.ws[k] + net.bs[k]
        feats.append(z if k == L - 1 else activate(act, z))
    return feats


def predict(net: DenseNet, x: np.ndarray) -> np.ndarray:
    return forward_features(net, x)[-1]


def loss_sum_sq(pred: np.ndarray, y: np.ndarray) -> float:
    """Half the sum of squared errors over every output entry."""
    d = np.asarray(pred, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    return 0.5 * float(np.sum(d * d))


def grads_from_output_delta(net: DenseNet, feats: list, delta: np.ndarray):
    """Backpropagate an arbitrary dLoss/dOutput through stored features.

    Hidden preactivations are recomputed from the stored features instead
    of cached, trading one extra matmul per layer for half the memory; at
    the widths used here the matmuls are cheap next to the activations.
    """
    act = net.config.activation
    L = net.config.depth
    dws = [None] * L
    dbs = [None] * L
    for k in range(L - 1, -1, -1):
        if k != L - 1:
            z = feats[k] @ net.ws[k] + net.bs[k]
            delta = delta * activate_prime(act, z)
        dws[k] = feats[k].T @ delta
        dbs[k] = np.sum(delta, axis=0, keepdims=True)
        if k > 0:
            delta = delta @ net.ws[k].T
    return dws, dbs


def loss_and_grads(net: DenseNet, x: np.ndarray, y: np.ndarray):
    """Squared-error loss plus exact gradients (dws, dbs)."""
    y = np.asarray(y, dtype=np.float64)
    feats = forward_features(net, x)
    if feats[-1].shape != y.shape:
        raise ValueError(f"target shape {y.shape} != prediction {feats[-1].shape}")
    delta = feats[-1] - y
    # overflow to inf is the divergence signal, not an error
    with np.errstate(over="ignore"):
        loss = 0.5 * float(np.sum(delta * delta))
    dws, dbs = grads_from_output_delta(net, feats, delta)
    return loss, (dws, dbs)


def rff_embed(x: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Random Fourier feature lift: [cos(2 pi x B), sin(2 pi x B)].

    x is (N, d), B is (d, m); the result is (N, 2m) with every row on the
    torus, which gives piecewise-linear activations something periodic to
    work with.
    """
    x = np.asarray(x, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    proj = 2.0 * np.pi * (x @ b)
    return np.concatenate([np.cos(proj), np.sin(proj)], axis=1)


def make_rff_matrix(rng: RngState, d: int, m: int, sigma_b: float = 1.0) -> np.ndarray:
    """Frequency matrix B ~ N(0, sigma_b^2), shape (d, m)."""
    if d < 1 or m < 1:
        raise ValueError("embedding dims must be positive")
    return rng.normal((d, m), std=sigma_b)
