"""Pointwise activation families and their exact derivatives.

Each activation is a small frozen config (kind plus shape parameters) with
vectorized value/derivative evaluation.  Derivatives are analytic, not
numeric: training and the gradient checks in the test suite depend on them
agreeing with finite differences to ~1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("sine", "sinc", "gaussian", "gabor", "relu", "identity")

# Below this |omega*x| the sinc ratio switches to its Taylor series; the
# truncation error is ~u^6/5040 < 1e-25 there.
_SINC_TAYLOR_CUTOFF = 1e-4


@dataclass(frozen=True)
class Activation:
    """One activation: kind in KINDS, frequency/width omega, envelope s."""

    kind: str
    omega: float = 1.0
    s: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind in ("gaussian", "gabor") and self.omega <= 0:
            raise ValueError("width must be positive")
        if self.kind == "gabor" and self.s <= 0:
            raise ValueError("envelope width must be positive")

    def __call__(self, x):
        return activate(self, x)

    def prime(self, x):
        return activate_prime(self, x)


def sine(omega: float = 30.0) -> Activation:
    """sin(omega * x)."""
    return Activation("sine", omega)


def sinc(omega: float = 30.0) -> Activation:
    """sin(omega*x) / (omega*x), continued with value 1 at x = 0."""
    return Activation("sinc", omega)


def gaussian(width: float = 0.1) -> Activation:
    """exp(-x^2 / (2 width^2)); width plays the role of omega."""
    return Activation("gaussian", width)


def gabor(omega: float = 10.0, s: float = 1.0) -> Activation:
    """cos(omega*x) * exp(-x^2 / (2 s^2)): an oscillation under a bell."""
    return Activation("gabor", omega, s)


def relu() -> Activation:
    return Activation("relu")


def identity() -> Activation:
    return Activation("identity")


def _sinc_ratio(u: np.ndarray) -> np.ndarray:
    """sin(u)/u with a series branch near zero."""
    small = np.abs(u) < _SINC_TAYLOR_CUTOFF
    safe = np.where(small, 1.0, u)
    out = np.sin(safe) / safe
    u2 = u * u
    series = 1.0 - u2 / 6.0 * (1.0 - u2 / 20.0)
    return np.where(small, series, out)


def _sinc_ratio_prime(u: np.ndarray) -> np.ndarray:
    """d/du [sin(u)/u] = (u*cos(u) - sin(u)) / u^2, series branch near zero."""
    small = np.abs(u) < _SINC_TAYLOR_CUTOFF
    safe = np.where(small, 1.0, u)
    out = (safe * np.cos(safe) - np.sin(safe)) / (safe * safe)
    u2 = u * u
    series = -u / 3.0 * (1.0 - u2 / 10.0)
    return np.where(small, series, out)


def activate(act: Activation, x):
    """Elementwise activation value."""
    x = np.asarray(x, dtype=np.float64)
    k = act.kind
    if k == "sine":
        return np.sin(act.omega * x)
    if k == "sinc":
        return _sinc_ratio(act.omega * x)
    if k == "gaussian":
        return np.exp(-(x * x) / (2.0 * act.omega * act.omega))
    if k == "gabor":
        return np.cos(act.omega * x) * np.exp(-(x * x) / (2.0 * act.s * act.s))
    if k == "relu":
        return np.maximum(x, 0.0)
    return x.copy()  # identity


def activate_prime(act: Activation, x):
    """Elementwise derivative of the activation.

    relu' and sinc' take the value 0 at x = 0 (the symmetric subgradient
    choice for relu; the true two-sided limit for sinc).
    """
    x = np.asarray(x, dtype=np.float64)
    k = act.kind
    if k == "sine":
        return act.omega * np.cos(act.omega * x)
    if k == "sinc":
        return act.omega * _sinc_ratio_prime(act.omega * x)
    if k == "gaussian":
        w2 = act.omega * act.omega
        return -(x / w2) * np.exp(-(x * x) / (2.0 * w2))
    if k == "gabor":
        env = np.exp(-(x * x) / (2.0 * act.s * act.s))
        return env * (-act.omega * np.sin(act.omega * x) - (x / (act.s * act.s)) * np.cos(act.omega * x))
    if k == "relu":
        return (x > 0.0).astype(np.float64)
    return np.ones_like(x)
