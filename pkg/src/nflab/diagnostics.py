"""Numerical verification of the initialization-time spectral machinery.

Four measurements, all at initialization (no training):

* verify_key_bound: does sigma_min(F_last_hidden)^2 dominate
  16 * sqrt(N) * sqrt(n_last) * sqrt(2 L0) * ||W_last||_2 ?
* measure_sigma_min_growth: how sigma_min of the last hidden feature matrix
  grows with that layer's width.
* measure_init_loss: how sqrt(2 L0) scales with the sample count.
* measure_last_layer_norm: how the final weight matrix's spectral norm
  scales with fan-in, compared against two candidate laws.

Slope fits refuse to report when the log-space residual RMS exceeds 0.1;
the raw per-width statistics are always returned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import linear_fit, sigma_min, spectral_norm, svd
from .network import (
    NetTemplate,
    NetworkConfig,
    _layer_std,
    forward_features,
    init_network,
    loss_sum_sq,
    param_count,
)
from .rng import RngState
from .tasks import Dataset

BOUND_CONSTANT = 16.0
SLOPE_REFUSAL_RMS = 0.1


@dataclass
class BoundReport:
    """One evaluation of the key inequality at init."""

    N: int
    n_last: int
    sigma0_sq: float
    rhs: float
    holds: bool
    sigma0: float
    loss0: float
    wnorm: float


@dataclass
class WidthStat:
    n_in: int
    n_out: int
    scheme: str
    seeds: int
    median: float
    iqr: float
    values: list = field(default_factory=list)
    flagged: str = ""


@dataclass
class SlopeReport:
    stats: list                      # WidthStat per width
    slope: float | None              # None when the fit was refused
    intercept: float | None
    residual_rms: float
    refused: bool
    model_residuals: dict = field(default_factory=dict)


def _fit_medians(stats):
    meds = np.array([s.median for s in stats], dtype=np.float64)
    if np.any(meds <= 0.0):
        # log fit is meaningless with exact zeros (rank-deficient cells)
        return None, None, float("inf"), True
    xs = np.log(np.array([s.n_in for s in stats], dtype=np.float64))
    slope, intercept, rms = linear_fit(xs, np.log(meds))
    if rms > SLOPE_REFUSAL_RMS:
        return None, None, rms, True
    return slope, intercept, rms, False


def _iqr(values):
    q75, q25 = np.percentile(values, [75, 25])
    return float(q75 - q25)


def verify_key_bound(net, data: Dataset) -> BoundReport:
    """Evaluate the init-time lower bound on a freshly initialized net.

    All four factors are computed exactly as defined: sigma0 from the last
    hidden feature matrix, loss via the half-sum-of-squares convention,
    the norm as the spectral norm of the final weight matrix.  Deep nets
    use the final hidden layer (the deep analogue of the shallow statement).
    """
    feats = forward_features(net, data.X)
    f_hidden = feats[-2]
    n = data.X.shape[0]
    n_last = f_hidden.shape[1]
    s0 = sigma_min(f_hidden)
    loss0 = loss_sum_sq(feats[-1], data.Y)
    wnorm = spectral_norm(net.ws[-1])
    rhs = BOUND_CONSTANT * np.sqrt(n) * np.sqrt(n_last) * np.sqrt(2.0 * loss0) * wnorm
    return BoundReport(
        N=n,
        n_last=n_last,
        sigma0_sq=s0 * s0,
        rhs=float(rhs),
        holds=bool(s0 * s0 >= rhs),
        sigma0=s0,
        loss0=loss0,
        wnorm=wnorm,
    )


def bound_reports(cfg: NetworkConfig, data: Dataset, seeds: int, rng: RngState) -> list:
    """One BoundReport per seed, each net drawn from a derived stream.

    Seed s always uses rng.derive(("bound", s)), so any consumer handed the
    same master rng sees the same nets, row for row.
    """
    if seeds < 1:
        raise ValueError("need at least one seed")
    return [
        verify_key_bound(init_network(cfg, rng.derive(("bound", s))), data)
        for s in range(seeds)
    ]


def bound_success_rate(
    template: NetTemplate,
    data: Dataset,
    width_rule,
    seeds: int,
    rng: RngState,
) -> float:
    """Fraction of seeds for which the key bound holds.

    width_rule maps the sample count N to the last hidden width (e.g.
    lambda n: 4 * n).  Each seed draws an independent net from a derived
    stream, so the rate is deterministic given rng's key.
    """
    n = data.X.shape[0]
    width = int(width_rule(n))
    cfg = template.config(data.X.shape[1], width, data.Y.shape[1])
    reports = bound_reports(cfg, data, seeds, rng)
    return sum(1 for r in reports if r.holds) / seeds


def measure_sigma_min_growth(
    template: NetTemplate,
    data: Dataset,
    widths,
    seeds: int,
    rng: RngState,
) -> SlopeReport:
    """sigma_min of the last hidden feature matrix vs that layer's width.

    Widths where the feature matrix cannot have full row rank (width < N)
    are still measured but flagged, since sigma_min may legitimately sit
    at zero there.
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2 or sorted(widths) != widths:
        raise ValueError("widths must be increasing, at least 2 values")
    n = data.X.shape[0]
    stats = []
    for w in widths:
        cfg = template.config(data.X.shape[1], w, data.Y.shape[1])
        vals = []
        for s in range(seeds):
            net = init_network(cfg, rng.derive(("sigmin", w, s)))
            f_hidden = forward_features(net, data.X)[-2]
            _, sv, _ = svd(f_hidden)
            vals.append(float(sv[-1]))
        stats.append(
            WidthStat(
                n_in=w,
                n_out=data.Y.shape[1],
                scheme=template.init,
                seeds=seeds,
                median=float(np.median(vals)),
                iqr=_iqr(vals),
                values=vals,
                flagged="underparameterized" if w < n else "",
            )
        )
    slope, intercept, rms, refused = _fit_medians(stats)
    return SlopeReport(stats, slope, intercept, rms, refused)


def measure_init_loss(
    template: NetTemplate,
    make_dataset,
    ns,
    seeds: int,
    rng: RngState,
    width_rule=None,
) -> dict:
    """Per-N ratio sqrt(2 L0) / sqrt(N) at initialization.

    make_dataset(N) -> Dataset supplies the task; width_rule (default 4N)
    sets the last hidden width per N.  Returns medians and the max/min
    ratio spread across N.
    """
    if width_rule is None:
        width_rule = lambda n: 4 * n
    rows = []
    for n in ns:
        data = make_dataset(int(n))
        cfg = template.config(data.X.shape[1], int(width_rule(int(n))), data.Y.shape[1])
        ratios = []
        for s in range(seeds):
            net = init_network(cfg, rng.derive(("initloss", int(n), s)))
            loss0 = loss_sum_sq(forward_features(net, data.X)[-1], data.Y)
            ratios.append(float(np.sqrt(2.0 * loss0) / np.sqrt(n)))
        rows.append(
            {
                "N": int(n),
                "median_ratio": float(np.median(ratios)),
                "iqr": _iqr(ratios),
                "values": ratios,
            }
        )
    meds = [r["median_ratio"] for r in rows]
    return {"rows": rows, "spread": max(meds) / min(meds) if min(meds) > 0 else float("inf")}


def measure_last_layer_norm(
    scheme: str,
    n_out: int,
    widths,
    seeds: int,
    rng: RngState,
    final_exponent: float = 1.5,
    final_gain: float = 2.0,
) -> SlopeReport:
    """Spectral norm of final-layer samples vs fan-in, with model comparison.

    Two candidate laws are scored by their best-constant log-space RMS:
    sqrt(n_out/n_in), and the random-matrix envelope 1 + sqrt(n_out/n_in).
    """
    widths = [int(w) for w in widths]
    if len(widths) < 2:
        raise ValueError("need at least 2 widths")
    stats = []
    for w in widths:
        family, scale = _layer_std(
            scheme, w, n_out, True, final_exponent=final_exponent, final_gain=final_gain
        )
        vals = []
        for s in range(seeds):
            srng = rng.derive(("wnorm", w, s))
            if family == "normal":
                m = srng.normal((w, n_out), std=scale)
            else:
                m = srng.uniform((w, n_out), -scale, scale)
            vals.append(spectral_norm(m))
        stats.append(
            WidthStat(
                n_in=w,
                n_out=n_out,
                scheme=scheme,
                seeds=seeds,
                median=float(np.median(vals)),
                iqr=_iqr(vals),
                values=vals,
            )
        )
    slope, intercept, rms, refused = _fit_medians(stats)
    report = SlopeReport(stats, slope, intercept, rms, refused)

    meds = np.array([s.median for s in stats])
    if np.all(meds > 0):
        log_meds = np.log(meds)
        for name, shape in (
            ("sqrt_ratio", [np.sqrt(n_out / s.n_in) for s in stats]),
            ("one_plus_sqrt_ratio", [1.0 + np.sqrt(n_out / s.n_in) for s in stats]),
        ):
            log_shape = np.log(np.array(shape))
            log_c = float(np.mean(log_meds - log_shape))
            resid = float(np.sqrt(np.mean((log_meds - log_shape - log_c) ** 2)))
            report.model_residuals[name] = {"log_c": log_c, "rms": resid}
    return report
