import numpy as np
import pytest

from strandforge.neural import layers as L
from strandforge.neural import tensor as T


def fd_grad(fn, x: np.ndarray, h=1e-6):
    """Central-difference gradient of scalar fn wrt array x (float64)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = fn()
        x[i] = old - h
        fm = fn()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
        it.iternext()
    return g


def rel_err(a, b):
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-8)
    return np.abs(a - b).max() / denom


def naive_conv2d(x, w, b, stride, pad):
    n, c, h, wd = x.shape
    oc, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, oc, oh, ow))
    for ni in range(n):
        for o in range(oc):
            for i in range(oh):
                for j in range(ow):
                    patch = xp[ni, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[ni, o, i, j] = (patch * w[o]).sum() + b[o]
    return out


def test_conv2d_matches_naive():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=4)
    for stride, pad in ((1, 1), (2, 1), (1, 0)):
        got = L.conv2d(T.tensor(x), T.tensor(w), T.tensor(b), stride, pad).data
        want = naive_conv2d(x, w, b, stride, pad)
        assert np.allclose(got, want, atol=1e-12)


def test_deconv2d_is_conv_adjoint():
    # <conv(x), y> == <x, deconv(y)> for matching geometries and zero bias
    rng = np.random.default_rng(1)
    x = rng.normal(size=(1, 2, 8, 8))
    w = rng.normal(size=(3, 2, 4, 4))  # conv reads (OC, IC, KH, KW)
    y = rng.normal(size=(1, 3, 4, 4))
    conv = L.conv2d(T.tensor(x), T.tensor(w), None, stride=2, pad=1).data
    # the same array read as deconv weights (IC, OC, KH, KW) gives the adjoint
    deconv = L.deconv2d(T.tensor(y), T.tensor(w), None, stride=2, pad=1).data
    assert np.isclose((conv * y).sum(), (x * deconv).sum(), rtol=1e-10)


def test_deconv2d_shape():
    x = T.tensor(np.zeros((2, 5, 8, 8)))
    w = T.tensor(np.zeros((5, 7, 4, 4)))
    out = L.deconv2d(x, w, None, stride=2, pad=1)
    assert out.shape == (2, 7, 16, 16)


def test_maxpool_forward_and_grad_routing():
    x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
    t = T.tensor(x, requires_grad=True)
    y = L.maxpool2d(t, 2, 2)
    assert y.data.reshape(-1)[0] == 4.0
    (g,) = T.grad_of(T.tsum(y), [t])
    assert np.array_equal(g.data, [[[[0, 0], [0, 1.0]]]])


def test_tile_depth_and_adjoint():
    rng = np.random.default_rng(2)
    x = T.tensor(rng.normal(size=(1, 2, 3, 3)), requires_grad=True)
    y = L.tile_depth(x, 4)
    assert y.shape == (1, 2, 4, 3, 3)
    (g,) = T.grad_of(T.tsum(y), [x])
    assert np.allclose(g.data, 4.0)


def test_concat_channels_round_trip():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(2, 3, 4, 4))
    b = rng.normal(size=(2, 2, 4, 4))
    out = L.concat_channels([T.tensor(a), T.tensor(b)])
    assert out.shape == (2, 5, 4, 4)
    assert np.array_equal(out.data[:, :3], a)
    assert np.array_equal(out.data[:, 3:], b)


LAYER_CASES = {
    "conv2d": ((2, 2, 5, 5), (3, 2, 3, 3), 3, lambda x, w, b: L.conv2d(x, w, b, 2, 1)),
    "conv3d": ((1, 2, 4, 4, 4), (3, 2, 3, 3, 3), 3, lambda x, w, b: L.conv3d(x, w, b, 2, 1)),
    "deconv2d": ((1, 3, 4, 4), (3, 2, 4, 4), 2, lambda x, w, b: L.deconv2d(x, w, b, 2, 1)),
    "deconv3d": ((1, 2, 3, 3, 3), (2, 2, 4, 4, 4), 2, lambda x, w, b: L.deconv3d(x, w, b, 2, 1)),
    "linear": ((3, 7), (4, 7), 4, lambda x, w, b: L.linear(x, w, b)),
}


@pytest.mark.parametrize("layer_case", sorted(LAYER_CASES))
def test_layer_gradients_match_fd(layer_case):
    xshape, wshape, bsize, apply = LAYER_CASES[layer_case]
    rng = np.random.default_rng(abs(hash(layer_case)) % 2**31)
    x = rng.normal(size=xshape)
    w = rng.normal(size=wshape)
    b = rng.normal(size=bsize)
    tw = T.tensor(w, requires_grad=True)
    tb = T.tensor(b, requires_grad=True)

    def loss():
        return T.tsum(T.square(apply(T.tensor(x), tw, tb)))

    ga_w, ga_b = T.grad_of(loss(), [tw, tb])
    gn_w = fd_grad(lambda: loss().item(), w)
    gn_b = fd_grad(lambda: loss().item(), b)
    assert rel_err(ga_w.data, gn_w) < 1e-6
    assert rel_err(ga_b.data, gn_b) < 1e-6


def test_maxpool_gradient_matches_fd():
    rng = np.random.default_rng(21)
    x = rng.normal(size=(2, 3, 6, 6))
    tx = T.tensor(x, requires_grad=True)

    def loss():
        return T.tsum(T.square(L.maxpool2d(tx, 2, 2)))

    (ga,) = T.grad_of(loss(), [tx])
    gn = fd_grad(lambda: loss().item(), x)
    assert rel_err(ga.data, gn) < 1e-7


def test_double_backward_gradient_penalty_style():
    # f(w) = (||d/dx (w . x)^2 ||| - 1)^2 style expression: check grad of a
    # function of a gradient against finite differences
    rng = np.random.default_rng(7)
    x0 = rng.normal(size=(4,))
    w0 = rng.normal(size=(4,))

    def penalty(w_arr):
        xt = T.tensor(x0.copy(), requires_grad=True)
        wt = T.tensor(w_arr, requires_grad=True)
        y = T.tsum(T.square(T.mul(wt, xt)))  # sum (w_i x_i)^2
        (gx,) = T.grad_of(y, [xt], create_graph=True)
        norm = T.pow_(T.tsum(T.square(gx)), 0.5)
        pen = T.square(norm - T.constant(np.asarray(1.0)))
        return pen, wt

    pen, wt = penalty(w0)
    (gw,) = T.grad_of(pen, [wt])
    gn = fd_grad(lambda: penalty(w0)[0].item(), w0)
    assert rel_err(gw.data, gn) < 1e-6


def test_relu_monitor_records_margin():
    T.relu_monitor.armed = True
    T.relu_monitor.reset()
    T.relu(T.tensor(np.array([0.5, -2.0, 1e-9])))
    assert T.relu_monitor.min_abs <= 1e-9
    T.relu_monitor.armed = False


def test_backward_fills_leaf_grads():
    x = T.tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    y = T.tsum(T.square(x))
    y.backward()
    assert np.allclose(x.grad, 2 * x.data)


def test_grad_of_requires_scalar():
    x = T.tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(ValueError):
        T.grad_of(T.square(x), [x])
