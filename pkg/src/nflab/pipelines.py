"""End-to-end task pipelines: 4x super-resolution and occupancy fields.

Super-resolution never sees the high-resolution image during training: the
net predicts the full grid, a fixed 4x block-mean operator A maps the
prediction down, and the loss compares against the low-resolution input
(the classic y = Ax inverse problem).  Occupancy is plain regression on
0/1 labels; quality is intersection-over-union at threshold 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .image import ImageGrid, downsample4x, downsample4x_matrix_free, make_grid, ssim
from .network import DenseNet, forward_features, grads_from_output_delta, init_network
from .optim import (
    AdamState,
    DivergenceError,
    TrainConfig,
    _check_finite_grads,
    adam_step,
    gd_step,
    psnr_from_sum_loss,
    train,
)
from .rng import RngState
from .tasks import Dataset, OccupancyScene, grid_coords, iou, make_occupancy_dataset


@dataclass
class SuperresReport:
    steps_run: int = 0
    loss_trace: list = field(default_factory=list)   # (step, loss) pairs
    psnr_trace: list = field(default_factory=list)   # (step, dB) vs the low-res target
    final_psnr_db: float = float("nan")
    ssim: float = float("nan")
    recon: ImageGrid | None = None


def superres_loss_and_grads(net: DenseNet, x_grid: np.ndarray, shape, y_low: np.ndarray):
    """Loss 0.5*||A f(grid) - y_low||^2 and its exact gradients.

    A is the 4x block mean; its adjoint spreads each low-res residual
    uniformly over the 16 source pixels (weight 1/16 each).
    """
    h, w, c = shape
    feats = forward_features(net, x_grid)
    pred = feats[-1].reshape(h, w, c)
    resid = downsample4x_matrix_free(pred) - y_low
    loss = 0.5 * float(np.sum(resid * resid))
    up = np.repeat(np.repeat(resid, 4, axis=0), 4, axis=1) / 16.0
    dws, dbs = grads_from_output_delta(net, feats, up.reshape(-1, c))
    return loss, (dws, dbs), pred


def run_superres(truth: ImageGrid, net: DenseNet, cfg: TrainConfig) -> SuperresReport:
    """Train net to reproduce truth from its own 4x downsampling."""
    if truth.height % 4 or truth.width % 4:
        raise ValueError("image sides must be divisible by 4")
    low = downsample4x(truth)
    y_low = low.pixels
    x_grid = grid_coords(truth.width, truth.height)
    shape = (truth.height, truth.width, truth.channels)
    n_low = y_low.size

    report = SuperresReport()
    state = AdamState.for_net(net) if cfg.optimizer == "adam" else None
    pred = None

    def record(step, loss):
        report.loss_trace.append((step, loss))
        report.psnr_trace.append((step, psnr_from_sum_loss(loss, n_low)))

    for step in range(cfg.max_steps):
        loss, grads, pred = superres_loss_and_grads(net, x_grid, shape, y_low)
        if not np.isfinite(loss):
            raise DivergenceError(f"loss diverged at step {step}", report)
        _check_finite_grads(*grads)
        if step % cfg.log_every == 0:
            record(step, loss)
        if cfg.optimizer == "adam":
            adam_step(net, grads, state, cfg)
        else:
            gd_step(net, grads, cfg.lr)
        report.steps_run = step + 1

    loss, _, pred = superres_loss_and_grads(net, x_grid, shape, y_low)
    record(report.steps_run, loss)
    report.final_psnr_db = report.psnr_trace[-1][1]
    report.recon = make_grid(pred)
    report.ssim = ssim(report.recon, truth)
    return report


@dataclass
class OccupancyReport:
    steps_run: int = 0
    final_psnr_db: float = float("nan")
    iou: float = float("nan")
    train_iou: float = float("nan")


def run_occupancy(
    scene: OccupancyScene,
    data: Dataset,
    net: DenseNet,
    cfg: TrainConfig,
    eval_points: int,
    rng: RngState,
) -> OccupancyReport:
    """Regress occupancy labels, then score IOU on a fresh point sample.

    The evaluation sample is drawn from the same half-uniform half-shell
    mixture as training data, from a stream derived under "eval" so it
    never collides with the training draw.
    """
    net, tr = train(net, data, cfg)
    eval_set = make_occupancy_dataset(scene, eval_points, rng.derive("eval"))
    pred = forward_features(net, eval_set.X)[-1]
    pred_train = forward_features(net, data.X)[-1]
    return OccupancyReport(
        steps_run=tr.steps_run,
        final_psnr_db=tr.final_psnr_db,
        iou=iou(pred, eval_set.Y),
        train_iou=iou(pred_train, data.Y),
    )
