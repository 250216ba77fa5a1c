"""Full-batch training loops: plain gradient descent and Adam.

Both optimizers consume the exact gradients of the half-sum-of-squares loss.
Runs stop on a step budget or on reaching a train-PSNR target, whichever
comes first, and leave an auditable trace of (step, loss, psnr) triples.

PSNR here is always computed against peak 1.0 over the mean squared error,
so it is derivable from the sum loss: mse = 2 * loss / (N * n_out).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

PSNR_CAP_DB = 200.0


class DivergenceError(RuntimeError):
    """Loss or a gradient went non-finite; carries the last finite report."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


@dataclass(frozen=True)
class TrainConfig:
    optimizer: str = "gd"  # "gd" or "adam"
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    max_steps: int = 1000
    target_psnr_db: float | None = None
    log_every: int = 100

    def __post_init__(self):
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("betas must lie in [0, 1)")
        if self.max_steps < 0 or self.log_every < 1:
            raise ValueError("bad step counts")


@dataclass
class TrainReport:
    steps_run: int = 0
    loss_trace: list = field(default_factory=list)   # (step, loss) pairs
    psnr_trace: list = field(default_factory=list)   # (step, dB) pairs
    reached_target: bool = False
    final_psnr_db: float = float("nan")
    wall_time_s: float = 0.0


def psnr(pred, target, peak: float = 1.0) -> float:
    """10*log10(peak^2 / mean squared error), capped at 200 dB when exact."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {target.shape}")
    if peak <= 0:
        raise ValueError("peak must be positive")
    d = pred - target
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(peak * peak / mse)))


def psnr_from_sum_loss(loss: float, n_entries: int, peak: float = 1.0) -> float:
    """PSNR implied by the half-sum-of-squares loss over n_entries outputs."""
    mse = 2.0 * loss / n_entries
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(PSNR_CAP_DB, float(10.0 * np.log10(peak * peak / mse)))


def _check_finite_grads(dws, dbs):
    for k, g in enumerate(dws):
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite weight gradient in layer {k + 1}")
    for k, g in enumerate(dbs):
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite bias gradient in layer {k + 1}")


def gd_step(net, grads, lr: float):
    """In-place full-batch descent step: p <- p - lr * g. Returns net."""
    dws, dbs = grads
    _check_finite_grads(dws, dbs)
    for w, g in zip(net.ws, dws):
        w -= lr * g
    for b, g in zip(net.bs, dbs):
        b -= lr * g
    return net


@dataclass
class AdamState:
    mws: list
    vws: list
    mbs: list
    vbs: list
    t: int = 0

    @classmethod
    def for_net(cls, net) -> "AdamState":
        return cls(
            [np.zeros_like(w) for w in net.ws],
            [np.zeros_like(w) for w in net.ws],
            [np.zeros_like(b) for b in net.bs],
            [np.zeros_like(b) for b in net.bs],
        )


def adam_step(net, grads, state: AdamState, cfg: TrainConfig):
    """Standard bias-corrected Adam update, in place. Returns (net, state)."""
    dws, dbs = grads
    _check_finite_grads(dws, dbs)
    state.t += 1
    c1 = 1.0 - cfg.beta1**state.t
    c2 = 1.0 - cfg.beta2**state.t
    for params, gs, ms, vs in (
        (net.ws, dws, state.mws, state.vws),
        (net.bs, dbs, state.mbs, state.vbs),
    ):
        for p, g, m, v in zip(params, gs, ms, vs):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * g
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * (g * g)
            p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return net, state


def _data_xy(data):
    if isinstance(data, tuple):
        return data
    return data.X, data.Y


def train(net, data, cfg: TrainConfig):
    """Run full-batch training; returns (net, TrainReport).

    The PSNR check happens before the first step, so a net already at
    target runs zero steps.  Traces record step 0, every log_every-th
    step, and the last step executed.  On divergence the exception
    carries the report accumulated so far.
    """
    from .network import loss_and_grads  # local import keeps module load light

    x, y = _data_xy(data)
    y = np.asarray(y, dtype=np.float64)
    n_entries = y.size
    report = TrainReport()
    state = AdamState.for_net(net) if cfg.optimizer == "adam" else None
    t_start = time.perf_counter()

    step = 0
    while True:
        loss, grads = loss_and_grads(net, x, y)
        if not np.isfinite(loss):
            report.wall_time_s = time.perf_counter() - t_start
            raise DivergenceError(f"non-finite loss at step {step}", report)
        db = psnr_from_sum_loss(loss, n_entries)
        if step % cfg.log_every == 0 or step == cfg.max_steps:
            report.loss_trace.append((step, loss))
            report.psnr_trace.append((step, db))
        report.steps_run = step
        report.final_psnr_db = db
        if cfg.target_psnr_db is not None and db >= cfg.target_psnr_db:
            report.reached_target = True
            break
        if step >= cfg.max_steps:
            break
        try:
            if state is None:
                gd_step(net, grads, cfg.lr)
            else:
                adam_step(net, grads, state, cfg)
        except DivergenceError as err:
            report.wall_time_s = time.perf_counter() - t_start
            raise DivergenceError(str(err), report) from None
        step += 1

    if not report.loss_trace or report.loss_trace[-1][0] != step:
        report.loss_trace.append((step, loss))
        report.psnr_trace.append((step, db))
    report.wall_time_s = time.perf_counter() - t_start
    return net, report
