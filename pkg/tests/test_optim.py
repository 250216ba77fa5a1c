"""Optimizer oracles: hand-arithmetic GD steps, an independent scalar Adam
reimplementation, a closed-form least-squares optimum, and PSNR formulas."""

import numpy as np
import pytest

from nflab.activations import gaussian, identity, sine
from nflab.network import (
    DenseNet,
    NetworkConfig,
    init_network,
    loss_sum_sq,
    predict,
)
from nflab.optim import (
    AdamState,
    DivergenceError,
    TrainConfig,
    TrainReport,
    adam_step,
    gd_step,
    psnr,
    psnr_from_sum_loss,
    train,
)
from nflab.rng import RngState


def _one_param_net(w0: float) -> DenseNet:
    cfg = NetworkConfig((1, 1, 1), identity())
    net = DenseNet(cfg)
    net.ws = [np.array([[w0]]), np.array([[1.0]])]
    net.bs = [np.zeros((1, 1)), np.zeros((1, 1))]
    return net


def test_gd_step_hand_arithmetic():
    # minimize 1/2 (w-3)^2 by hand: g = w - 3, lr = 0.1, w0 = 0 -> w1 = 0.3
    net = _one_param_net(0.0)
    g = ([np.array([[net.ws[0][0, 0] - 3.0]]), np.zeros((1, 1))],
         [np.zeros((1, 1)), np.zeros((1, 1))])
    gd_step(net, g, 0.1)
    assert net.ws[0][0, 0] == pytest.approx(0.3, abs=1e-15)


def test_gd_geometric_decay_to_optimum():
    # w_{t+1} - 3 = (1 - lr)(w_t - 3), so 200 steps shrink the error by 0.9^200
    net = _one_param_net(0.0)
    for _ in range(200):
        g = ([np.array([[net.ws[0][0, 0] - 3.0]]), np.zeros((1, 1))],
             [np.zeros((1, 1)), np.zeros((1, 1))])
        gd_step(net, g, 0.1)
    assert abs(net.ws[0][0, 0] - 3.0) <= 1e-8
    assert abs(net.ws[0][0, 0] - 3.0) == pytest.approx(3.0 * 0.9**200, rel=1e-9)


def test_gd_zero_lr_leaves_net_unchanged():
    net = init_network(NetworkConfig((2, 4, 1), sine(3.0)), RngState(1))
    before = [w.copy() for w in net.ws]
    g = ([np.ones_like(w) for w in net.ws], [np.ones_like(b) for b in net.bs])
    gd_step(net, g, 0.0)
    for w, old in zip(net.ws, before):
        np.testing.assert_array_equal(w, old)


def test_gd_nonfinite_gradient_names_layer():
    net = init_network(NetworkConfig((2, 4, 3, 1), sine(3.0)), RngState(1))
    dws = [np.zeros_like(w) for w in net.ws]
    dbs = [np.zeros_like(b) for b in net.bs]
    dws[1][0, 0] = np.nan
    with pytest.raises(DivergenceError, match="layer 2"):
        gd_step(net, (dws, dbs), 0.1)


def test_adam_zero_gradient_is_identity():
    net = init_network(NetworkConfig((2, 4, 1), sine(3.0)), RngState(2))
    before = [w.copy() for w in net.ws]
    state = AdamState.for_net(net)
    cfg = TrainConfig(optimizer="adam", lr=0.1)
    g = ([np.zeros_like(w) for w in net.ws], [np.zeros_like(b) for b in net.bs])
    for _ in range(5):
        adam_step(net, g, state, cfg)
    for w, old in zip(net.ws, before):
        np.testing.assert_array_equal(w, old)


def test_adam_first_step_is_signed_lr():
    # With m-hat/sqrt(v-hat) = g/|g| at t=1, the move is lr*sign(g) up to eps.
    net = _one_param_net(1.0)
    state = AdamState.for_net(net)
    cfg = TrainConfig(optimizer="adam", lr=0.01, eps=1e-12)
    g = ([np.array([[0.37]]), np.zeros((1, 1))], [np.zeros((1, 1)), np.zeros((1, 1))])
    adam_step(net, g, state, cfg)
    assert net.ws[0][0, 0] == pytest.approx(1.0 - 0.01, abs=1e-9)


def test_adam_matches_scalar_reimplementation():
    # Independent textbook-form scalar Adam over a fixed gradient sequence.
    lr, b1, b2, eps = 7e-3, 0.9, 0.999, 1e-8
    cfg = TrainConfig(optimizer="adam", lr=lr, beta1=b1, beta2=b2, eps=eps)
    net = _one_param_net(0.5)
    state = AdamState.for_net(net)

    w_ref, m, v = 0.5, 0.0, 0.0
    for t in range(1, 101):
        g = np.cos(0.3 * t) + 0.2
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1**t)
        vhat = v / (1 - b2**t)
        w_ref -= lr * mhat / (np.sqrt(vhat) + eps)
        grads = ([np.array([[g]]), np.zeros((1, 1))],
                 [np.zeros((1, 1)), np.zeros((1, 1))])
        adam_step(net, grads, state, cfg)
    assert net.ws[0][0, 0] == pytest.approx(w_ref, abs=1e-12)


def test_train_reaches_least_squares_optimum():
    # Identity-activation net is a product of linear maps; with hidden width
    # above the input dim its global optimum is the ordinary least-squares
    # optimum, known in closed form.
    rng = RngState(31)
    x = rng.uniform((20, 3), -1.0, 1.0)
    beta = np.array([[0.7], [-0.4], [0.2]])
    y = x @ beta + 0.05 * rng.normal((20, 1))
    coef, *_ = np.linalg.lstsq(np.column_stack([x, np.ones(20)]), y, rcond=None)
    resid = y - np.column_stack([x, np.ones(20)]) @ coef
    loss_opt = 0.5 * float(np.sum(resid**2))

    net = init_network(NetworkConfig((3, 8, 1), identity()), RngState(32))
    cfg = TrainConfig(optimizer="adam", lr=3e-3, max_steps=6000, log_every=1000)
    net, report = train(net, (x, y), cfg)
    final_loss = loss_sum_sq(predict(net, x), y)
    assert final_loss - loss_opt <= 1e-10
    assert report.steps_run == 6000


def test_train_zero_steps_when_target_met_at_init():
    net = init_network(NetworkConfig((2, 6, 1), sine(2.0)), RngState(4))
    x = RngState(5).uniform((10, 2), -1.0, 1.0)
    y = predict(net, x)  # Exact targets: PSNR at init is the 200 dB cap.
    cfg = TrainConfig(lr=1e-3, max_steps=100, target_psnr_db=35.0)
    net, report = train(net, (x, y), cfg)
    assert report.steps_run == 0
    assert report.reached_target
    assert report.final_psnr_db == 200.0
    assert report.loss_trace[0][0] == 0


def test_train_gd_strictly_decreases_quadratic():
    net = init_network(NetworkConfig((2, 4, 1), identity()), RngState(6))
    x = RngState(7).uniform((16, 2), -1.0, 1.0)
    y = RngState(8).uniform((16, 1), 0.0, 1.0)
    cfg = TrainConfig(optimizer="gd", lr=1e-3, max_steps=500, log_every=1)
    net, report = train(net, (x, y), cfg)
    losses = [v for _, v in report.loss_trace]
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_train_trace_replays_bitwise():
    def run():
        net = init_network(NetworkConfig((1, 8, 1), gaussian(0.5)), RngState(9))
        x = np.linspace(-1, 1, 12)[:, None]
        y = np.abs(x)
        cfg = TrainConfig(optimizer="adam", lr=1e-2, max_steps=300, log_every=50)
        _, report = train(net, (x, y), cfg)
        return report

    a, b = run(), run()
    assert a.loss_trace == b.loss_trace
    assert a.psnr_trace == b.psnr_trace


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # overflow is the point
def test_train_divergence_carries_report():
    net = init_network(NetworkConfig((1, 16, 1), identity()), RngState(10))
    x = np.linspace(-1, 1, 32)[:, None]
    y = x * 0.5
    cfg = TrainConfig(optimizer="gd", lr=10.0, max_steps=2000, log_every=1)
    with pytest.raises(DivergenceError) as exc:
        train(net, (x, y), cfg)
    rep = exc.value.report
    assert isinstance(rep, TrainReport)
    assert len(rep.loss_trace) >= 1
    assert all(np.isfinite(v) for _, v in rep.loss_trace)


def test_train_trace_includes_final_step():
    net = init_network(NetworkConfig((1, 4, 1), sine(1.0)), RngState(11))
    x = np.linspace(-1, 1, 8)[:, None]
    cfg = TrainConfig(lr=1e-4, max_steps=57, log_every=25)
    _, report = train(net, (x, np.zeros((8, 1))), cfg)
    steps = [s for s, _ in report.loss_trace]
    assert steps == [0, 25, 50, 57]
    assert report.steps_run == 57


def test_psnr_formula_and_cap():
    a = np.full((5, 5), 0.6)
    b = np.full((5, 5), 0.5)  # mse = 0.01
    assert psnr(a, b) == pytest.approx(20.0, abs=1e-12)
    assert psnr(a, a) == 200.0


def test_psnr_matches_naive_oracle():
    rng = RngState(12)
    a = rng.uniform((17, 3), 0.0, 1.0)
    b = rng.uniform((17, 3), 0.0, 1.0)
    se = 0.0
    for i in range(17):
        for j in range(3):
            se += (a[i, j] - b[i, j]) ** 2
    expect = 10.0 * np.log10(1.0 / (se / (17 * 3)))
    assert psnr(a, b) == pytest.approx(expect, abs=1e-10)


def test_psnr_from_sum_loss_consistent():
    rng = RngState(13)
    pred = rng.uniform((9, 2), 0.0, 1.0)
    y = rng.uniform((9, 2), 0.0, 1.0)
    loss = loss_sum_sq(pred, y)
    assert psnr_from_sum_loss(loss, y.size) == pytest.approx(psnr(pred, y), abs=1e-12)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(optimizer="sgd")
    with pytest.raises(ValueError):
        TrainConfig(lr=0.0)
    with pytest.raises(ValueError):
        TrainConfig(beta2=1.0)
