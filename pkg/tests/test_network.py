"""Network oracles: init variances from the defining formulas, a hand-worked
forward pass, and analytic gradients against central finite differences."""

import numpy as np
import pytest

from nflab.activations import gabor, gaussian, identity, relu, sinc, sine
from nflab.network import (
    DenseNet,
    NetworkConfig,
    forward_features,
    init_network,
    loss_and_grads,
    loss_sum_sq,
    make_rff_matrix,
    param_count,
    predict,
    rff_embed,
)
from nflab.rng import RngState

# Expected weight variances per scheme at n_in=200, n_out=500, written down
# from the defining formulas before the sampler existed.
N_IN, N_OUT = 200, 500
EXPECTED_VAR = {
    "lecun_normal": 1.0 / 200,
    "lecun_uniform": 1.0 / 200,
    "xavier_normal": 2.0 / 700,
    "xavier_uniform": 2.0 / 700,
    "kaiming_normal": 2.0 / 200,
    "kaiming_uniform": 2.0 / 200,
}
# Final-layer variances for the shrunk schemes at n_in=200.
EXPECTED_FINAL_VAR = {
    "shrunk_final_normal": 2.0 / 200**1.5,      # 7.0711e-4
    "shrunk_final_uniform": 200**-1.5 / 3.0,    # 2.3570e-4
}


def _cfg(widths, act=None, **kw):
    return NetworkConfig(tuple(widths), act or sine(30.0), **kw)


@pytest.mark.parametrize("scheme", sorted(EXPECTED_VAR))
def test_hidden_layer_variance(scheme):
    cfg = _cfg((N_IN, N_OUT, 1), init=scheme)
    net = init_network(cfg, RngState(11))
    w = net.ws[0]
    assert abs(float(w.mean())) < 3e-4
    assert float(w.var()) == pytest.approx(EXPECTED_VAR[scheme], rel=0.03)


@pytest.mark.parametrize("scheme", sorted(EXPECTED_FINAL_VAR))
def test_shrunk_final_layer_variance(scheme):
    cfg = _cfg((3, N_IN, N_OUT), init=scheme)
    net = init_network(cfg, RngState(12))
    assert float(net.ws[-1].var()) == pytest.approx(EXPECTED_FINAL_VAR[scheme], rel=0.03)
    # and the non-final layers keep their base scale
    base = 1.0 / 3 if scheme == "shrunk_final_normal" else (1.0 / 3) / 3
    assert float(net.ws[0].var()) == pytest.approx(base, rel=0.2)


def test_shrunk_final_uniform_respects_bounds():
    cfg = _cfg((3, N_IN, N_OUT), init="shrunk_final_uniform")
    net = init_network(cfg, RngState(13))
    assert float(np.abs(net.ws[-1]).max()) <= N_IN**-0.75
    assert float(np.abs(net.ws[0]).max()) <= 3**-0.5


def test_custom_final_matches_shrunk_normal():
    # custom_final with exponent 3/2 and gain 2 is the same distribution,
    # and with a shared seed the same draws, as shrunk_final_normal.
    a = init_network(_cfg((2, 64, 1), init="shrunk_final_normal"), RngState(5))
    b = init_network(
        _cfg((2, 64, 1), init="custom_final", final_exponent=1.5, final_gain=2.0),
        RngState(5),
    )
    for wa, wb in zip(a.ws, b.ws):
        np.testing.assert_array_equal(wa, wb)


def test_custom_final_exponent_scales_variance():
    cfg = _cfg((3, N_IN, N_OUT), init="custom_final", final_exponent=2.0, final_gain=1.0)
    net = init_network(cfg, RngState(14))
    assert float(net.ws[-1].var()) == pytest.approx(200.0**-2, rel=0.05)


def test_bias_fill():
    net = init_network(_cfg((2, 4, 1)), RngState(0))
    assert all(float(np.abs(b).max()) == 0.0 for b in net.bs)
    net = init_network(_cfg((2, 4, 1), bias_value=0.01), RngState(0))
    assert all(np.all(b == 0.01) for b in net.bs)


def test_layer_streams_are_stable():
    # Growing a later layer must not move earlier layers' draws.
    small = init_network(_cfg((3, 8, 1)), RngState(42))
    big = init_network(_cfg((3, 8, 5)), RngState(42))
    np.testing.assert_array_equal(small.ws[0], big.ws[0])


def test_init_rejects_bad_config():
    with pytest.raises(ValueError):
        NetworkConfig((4,), sine())
    with pytest.raises(ValueError):
        NetworkConfig((4, 2), sine())  # no hidden layer
    with pytest.raises(ValueError):
        NetworkConfig((4, 0, 1), sine())
    with pytest.raises(ValueError):
        NetworkConfig((4, 3, 1), sine(), init="glorot")


def test_forward_hand_computed():
    # widths (2, 2, 1), relu hidden, explicit weights:
    #   z1 = X W1 + b1, F1 = relu(z1), out = F1 W2 + b2
    cfg = _cfg((2, 2, 1), act=relu())
    net = DenseNet(cfg)
    net.ws = [np.array([[1.0, -1.0], [2.0, 0.5]]), np.array([[3.0], [-2.0]])]
    net.bs = [np.array([[0.5, -0.5]]), np.array([[1.0]])]
    x = np.array([[1.0, 1.0], [0.0, -2.0]])
    # row 1: z1 = [3.5, -1.0] -> F1 = [3.5, 0] -> out = 10.5 + 1 = 11.5
    # row 2: z1 = [-3.5, -1.5] -> F1 = [0, 0] -> out = 1.0
    feats = forward_features(net, x)
    assert len(feats) == 3
    np.testing.assert_allclose(feats[1], [[3.5, 0.0], [0.0, 0.0]])
    np.testing.assert_allclose(feats[2], [[11.5], [1.0]])
    np.testing.assert_allclose(predict(net, x), [[11.5], [1.0]])


def test_output_layer_is_affine_not_activated():
    # With a gaussian activation everything activated lies in (0, 1];
    # negative predictions prove the last layer skipped the activation.
    net = init_network(_cfg((1, 16, 1), act=gaussian(0.5)), RngState(3))
    x = np.linspace(-1, 1, 64)[:, None]
    out = predict(net, x)
    hidden = forward_features(net, x)[1]
    assert hidden.min() > 0.0
    assert out.min() < 0.0 or out.max() > 1.0


def test_param_count():
    net = init_network(_cfg((2, 7, 5, 3)), RngState(1))
    # (2*7 + 7) + (7*5 + 5) + (5*3 + 3) = 21 + 40 + 18
    assert param_count(net) == 79


def test_loss_sum_sq_known_value():
    pred = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert loss_sum_sq(pred, np.zeros_like(pred)) == 15.0
    assert loss_sum_sq(pred, pred) == 0.0


def _numeric_grads(net, x, y, eps=1e-6):
    dws, dbs = [], []
    for arrs, grads in ((net.ws, dws), (net.bs, dbs)):
        for a in arrs:
            g = np.zeros_like(a)
            flat = a.ravel()
            for i in range(flat.size):
                old = flat[i]
                flat[i] = old + eps
                lp = loss_sum_sq(predict(net, x), y)
                flat[i] = old - eps
                lm = loss_sum_sq(predict(net, x), y)
                flat[i] = old
                g.ravel()[i] = (lp - lm) / (2 * eps)
            grads.append(g)
    return dws, dbs


@pytest.mark.parametrize(
    "act",
    [sine(3.0), sinc(3.0), gaussian(0.7), gabor(4.0, 0.8), identity()],
    ids=lambda a: a.kind,
)
def test_gradients_match_finite_differences(act):
    cfg = _cfg((2, 6, 5, 3), act=act, bias_value=0.01)
    net = init_network(cfg, RngState(21))
    rng = RngState(22)
    x = rng.uniform((7, 2), -1.0, 1.0)
    y = rng.uniform((7, 3), -1.0, 1.0)
    loss, (dws, dbs) = loss_and_grads(net, x, y)
    assert loss == pytest.approx(loss_sum_sq(predict(net, x), y), rel=1e-12)
    nws, nbs = _numeric_grads(net, x, y)
    for a, n in zip(dws + dbs, nws + nbs):
        scale = max(1.0, float(np.abs(n).max()))
        np.testing.assert_allclose(a, n, atol=2e-5 * scale)


def test_gradients_relu_away_from_kinks():
    cfg = _cfg((2, 8, 1), act=relu(), bias_value=0.3)
    net = init_network(cfg, RngState(31))
    x = RngState(32).uniform((9, 2), -1.0, 1.0)
    z = forward_features(net, x)[0] @ net.ws[0] + net.bs[0]
    assert float(np.abs(z).min()) > 1e-4  # no sample sits on the kink
    y = np.zeros((9, 1))
    _, (dws, dbs) = loss_and_grads(net, x, y)
    nws, nbs = _numeric_grads(net, x, y)
    for a, n in zip(dws + dbs, nws + nbs):
        np.testing.assert_allclose(a, n, atol=2e-5)


def test_shape_errors():
    net = init_network(_cfg((3, 4, 2)), RngState(0))
    with pytest.raises(ValueError):
        predict(net, np.zeros((5, 2)))
    with pytest.raises(ValueError):
        loss_and_grads(net, np.zeros((5, 3)), np.zeros((5, 1)))


def test_rff_embed_known_angles():
    x = np.array([[0.25]])
    b = np.array([[1.0, 2.0]])
    # projections 2*pi*[0.25, 0.5] = [pi/2, pi]
    out = rff_embed(x, b)
    np.testing.assert_allclose(out, [[0.0, -1.0, 1.0, 0.0]], atol=1e-12)


def test_pe_net_forward_and_gradients():
    cfg = NetworkConfig(
        (8, 6, 1), relu(), bias_value=0.05, pe_dim=8, pe_input_dim=2, pe_sigma_b=1.0
    )
    net = init_network(cfg, RngState(41))
    assert net.pe_matrix.shape == (2, 4)
    x = RngState(42).uniform((9, 2), -1.0, 1.0)
    feats = forward_features(net, x)
    np.testing.assert_array_equal(feats[0], rff_embed(x, net.pe_matrix))
    y = RngState(43).uniform((9, 1), 0.0, 1.0)
    _, (dws, dbs) = loss_and_grads(net, x, y)
    nws, nbs = _numeric_grads(net, x, y)
    for a, n in zip(dws + dbs, nws + nbs):
        np.testing.assert_allclose(a, n, atol=2e-5)


def test_pe_matrix_frozen_by_optimizers():
    from nflab.optim import TrainConfig, train

    cfg = NetworkConfig(
        (8, 6, 1), gaussian(0.5), pe_dim=8, pe_input_dim=1, pe_sigma_b=2.0
    )
    net = init_network(cfg, RngState(44))
    before = net.pe_matrix.copy()
    x = np.linspace(-1, 1, 16)[:, None]
    y = np.abs(x)
    train(net, (x, y), TrainConfig(optimizer="adam", lr=1e-2, max_steps=50))
    np.testing.assert_array_equal(net.pe_matrix, before)


def test_pe_config_validation():
    with pytest.raises(ValueError):
        NetworkConfig((8, 4, 1), relu(), pe_dim=7, pe_input_dim=2)
    with pytest.raises(ValueError):
        NetworkConfig((8, 4, 1), relu(), pe_dim=8)  # missing raw dim
    with pytest.raises(ValueError):
        NetworkConfig((6, 4, 1), relu(), pe_dim=8, pe_input_dim=2)  # widths[0] != pe_dim


def test_net_template_builds_expected_widths():
    from nflab.network import NetTemplate

    t = NetTemplate(sine(30.0), init="shrunk_final_normal", hidden_layers=3, fixed_width=64)
    cfg = t.config(2, 512, 3)
    assert cfg.widths == (2, 64, 64, 512, 3)
    assert cfg.init == "shrunk_final_normal"
    pe_t = NetTemplate(relu(), pe_dim=16, pe_sigma_b=10.0)
    pe_cfg = pe_t.config(2, 128)
    assert pe_cfg.widths == (16, 128, 1)
    assert pe_cfg.pe_input_dim == 2


def test_rff_embed_rows_bounded():
    rng = RngState(77)
    b = make_rff_matrix(rng, 2, 8, sigma_b=3.0)
    assert b.shape == (2, 8)
    x = rng.uniform((50, 2), -1.0, 1.0)
    out = rff_embed(x, b)
    assert out.shape == (50, 16)
    assert float(np.abs(out).max()) <= 1.0
    # cos^2 + sin^2 = 1 per frequency
    np.testing.assert_allclose(out[:, :8] ** 2 + out[:, 8:] ** 2, 1.0, atol=1e-12)
