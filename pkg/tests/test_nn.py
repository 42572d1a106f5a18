import numpy as np
import pytest

from headerq import nn
from headerq.nn import _kernels

from gradcheck import numeric_grad, rel_error

SEEDS = range(20)
TOL = 1e-5


def _loss_weights(rng, shape):
    return rng.normal(size=shape)


# -- forward examples --------------------------------------------------------

def test_gaussian_init_determinism_and_mean():
    a = nn.gaussian_init((4, 5), 0.05, seed=3)
    b = nn.gaussian_init((4, 5), 0.05, seed=3)
    assert np.array_equal(a, b)
    std = 0.05
    big = nn.gaussian_init((1_000_000,), std, seed=7)
    assert abs(big.mean()) < 4 * std / 1e3
    with pytest.raises(ValueError):
        nn.gaussian_init((2,), 0.0, seed=0)


def test_embedding_forward_and_accumulation():
    table = np.arange(12.0).reshape(4, 3)
    out = nn.embedding_forward(np.array([0, 0]), table)
    assert np.array_equal(out, [table[0], table[0]])
    grad = nn.embedding_backward(np.array([1, 1]), np.ones((2, 3)), 4)
    assert np.array_equal(grad[1], [2, 2, 2]) and grad[[0, 2, 3]].sum() == 0
    with pytest.raises(IndexError):
        nn.embedding_forward(np.array([4]), table)


def test_conv_identity_kernel_and_boundary():
    x = np.random.default_rng(0).normal(size=(6, 4))
    out, _ = nn.conv1d_forward(x, np.ones((1, 1, 4)), np.zeros(1))
    assert np.allclose(out[:, 0], x.sum(axis=1))
    out, _ = nn.conv1d_forward(x, np.ones((2, 6, 4)), np.zeros(2))
    assert out.shape == (1, 2)
    with pytest.raises(nn.ShapeError):
        nn.conv1d_forward(x, np.ones((1, 7, 4)), np.zeros(1))


def test_conv_matches_definition():
    rng = np.random.default_rng(1)
    x, w, b = rng.normal(size=(9, 4)), rng.normal(size=(2, 3, 4)), rng.normal(size=2)
    out, _ = nn.conv1d_forward(x, w, b)
    for t in range(7):
        for f in range(2):
            assert out[t, f] == pytest.approx(b[f] + sum(
                x[t + k, e] * w[f, k, e] for k in range(3) for e in range(4)))


def test_maxpool_examples():
    out, _ = nn.maxpool1d(np.array([[1.0], [3.0], [2.0]]), 3, 3)
    assert out.tolist() == [[3.0]]
    inc = np.arange(6.0)[:, None]
    out, _ = nn.maxpool1d(inc, 2, 2)
    assert out[:, 0].tolist() == [1.0, 3.0, 5.0]
    assert nn.pool_out_len(58, 3, 3) == 19 == nn.maxpool1d(np.zeros((58, 1)), 3, 3)[0].shape[0]
    with pytest.raises(nn.ShapeError):
        nn.maxpool1d(np.zeros((2, 1)), 3, 3)


def test_maxpool_tie_goes_to_first():
    _, arg = nn.maxpool1d(np.array([[2.0], [2.0], [1.0]]), 3, 3)
    assert arg[0, 0] == 0
    dx = nn.maxpool1d_backward(np.array([[1.0]]), arg, 3)
    assert dx[:, 0].tolist() == [1.0, 0.0, 0.0]


def test_global_maxpool_examples():
    out, _ = nn.global_maxpool(np.array([[1.0, 5.0], [2.0, 4.0]]))
    assert out.tolist() == [2.0, 5.0]
    row = np.array([[3.0, -1.0]])
    assert nn.global_maxpool(row)[0].tolist() == [3.0, -1.0]


def test_dense_examples():
    x = np.array([1.0, -2.0, 3.0])
    assert np.array_equal(nn.dense(x, np.eye(3), np.zeros(3)), x)
    b = np.array([0.5, 1.5])
    assert np.array_equal(nn.dense(np.zeros(3), np.ones((2, 3)), b), b)
    with pytest.raises(nn.ShapeError):
        nn.dense(x, np.ones((2, 4)), b)


def test_activations_and_dropout():
    assert nn.sigmoid(0.0) == 0.5
    s = nn.sigmoid(np.array([-1000.0, -30.0, 30.0, 1000.0]))
    assert np.isfinite(s).all() and (s[1:3] > 0).all() and (s[1:3] < 1).all()
    assert np.array_equal(nn.relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])
    x = np.ones(100_000)
    same, mask = nn.dropout(x, 0.5, train=False)
    assert same is x and mask is None
    out, _ = nn.dropout(x, 0.5, train=True, rng=np.random.default_rng(0))
    survivors = (out > 0).mean()
    assert abs(survivors - 0.5) < 0.01
    assert set(np.unique(out)) <= {0.0, 2.0}
    for bad in (-0.1, 1.0):
        with pytest.raises(ValueError):
            nn.dropout(x, bad, train=True, rng=np.random.default_rng(0))


def test_bce_values():
    loss, g = nn.bce_loss(0.0, 1.0)
    assert loss == pytest.approx(np.log(2)) and g == pytest.approx(-0.5)
    loss, _ = nn.bce_loss(40.0, 1.0)
    assert loss < 1e-12
    loss, _ = nn.bce_loss(-1000.0, 1.0)
    assert np.isfinite(loss) and loss == pytest.approx(-np.log(1e-12))


def test_sgd_momentum():
    w = {"w": np.array([1.0, 2.0])}
    g = {"w": np.array([0.5, -1.0])}
    st = nn.OptimizerState(lr=0.1, momentum=0.0)
    nn.sgd_momentum_step(w, g, st)
    assert np.allclose(w["w"], [0.95, 2.1])
    w0 = {"w": np.array([1.0, 2.0])}
    nn.sgd_momentum_step(w0, {"w": np.zeros(2)}, nn.OptimizerState(lr=1.0))
    assert np.array_equal(w0["w"], [1.0, 2.0])
    # two steps, constant g, mu=0.9, lr=1: displacement -(1 + 1.9) g
    w = {"w": np.zeros(2)}
    st = nn.OptimizerState(lr=1.0, momentum=0.9)
    for _ in range(2):
        nn.sgd_momentum_step(w, g, st)
    assert np.allclose(w["w"], -(1 + 1.9) * g["w"])
    with pytest.raises(ValueError):
        nn.sgd_momentum_step(w, {"w": np.zeros(3)}, st)
    with pytest.raises(ValueError):
        nn.OptimizerState(lr=0.1, momentum=1.0)


# -- finite-difference checks ---------------------------------------------------

@pytest.mark.parametrize("seed", SEEDS)
def test_embedding_grad(seed):
    rng = np.random.default_rng(seed)
    table = rng.normal(size=(5, 3))
    ids = rng.integers(0, 5, size=(2, 6))
    w = _loss_weights(rng, (2, 6, 3))
    f = lambda: float((nn.embedding_forward(ids, table) * w).sum())
    analytic = nn.embedding_backward(ids, w, 5)
    assert rel_error(analytic, numeric_grad(f, table)) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_conv1d_grads(seed):
    rng = np.random.default_rng(seed)
    t, e, k, f_ = rng.integers(3, 10), rng.integers(1, 5), rng.integers(1, 4), rng.integers(1, 4)
    x = rng.normal(size=(2, t, e))
    w = rng.normal(size=(f_, k, e))
    b = rng.normal(size=f_)
    lw = _loss_weights(rng, (2, t - k + 1, f_))
    f = lambda: float((nn.conv1d_forward(x, w, b)[0] * lw).sum())
    _, cache = nn.conv1d_forward(x, w, b)
    dx, dw, db = nn.conv1d_backward(lw, cache, w)
    assert rel_error(dx, numeric_grad(f, x)) < TOL
    assert rel_error(dw, numeric_grad(f, w)) < TOL
    assert rel_error(db, numeric_grad(f, b)) < TOL


def test_conv1d_grads_spec_geometry():
    rng = np.random.default_rng(99)
    x, w, b = rng.normal(size=(9, 4)), rng.normal(size=(2, 3, 4)), rng.normal(size=2)
    lw = rng.normal(size=(7, 2))
    f = lambda: float((nn.conv1d_forward(x, w, b)[0] * lw).sum())
    _, cache = nn.conv1d_forward(x, w, b)
    dx, dw, db = nn.conv1d_backward(lw, cache, w)
    for a, p in ((dx, x), (dw, w), (db, b)):
        assert rel_error(a, numeric_grad(f, p)) < 1e-6


@pytest.mark.parametrize("seed", SEEDS)
def test_maxpool_grad(seed):
    rng = np.random.default_rng(seed)
    w, s = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    t = int(rng.integers(w, 12))
    x = rng.permutation(2 * t * 3).reshape(2, t, 3).astype(float) * 0.1  # distinct values
    out, arg = nn.maxpool1d(x, w, s)
    lw = _loss_weights(rng, out.shape)
    f = lambda: float((nn.maxpool1d(x, w, s)[0] * lw).sum())
    assert rel_error(nn.maxpool1d_backward(lw, arg, t), numeric_grad(f, x)) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_global_maxpool_grad(seed):
    rng = np.random.default_rng(seed)
    t = int(rng.integers(1, 8))
    x = rng.permutation(2 * t * 4).reshape(2, t, 4).astype(float) * 0.1
    out, arg = nn.global_maxpool(x)
    lw = _loss_weights(rng, out.shape)
    f = lambda: float((nn.global_maxpool(x)[0] * lw).sum())
    dx = nn.global_maxpool_backward(lw, arg, t)
    assert rel_error(dx, numeric_grad(f, x)) < TOL
    assert (dx != 0).sum() <= lw.size  # routed to argmax rows only


@pytest.mark.parametrize("seed", SEEDS)
def test_dense_grads(seed):
    rng = np.random.default_rng(seed)
    n, m = rng.integers(1, 6), rng.integers(1, 6)
    x, w, b = rng.normal(size=(3, n)), rng.normal(size=(m, n)), rng.normal(size=m)
    lw = _loss_weights(rng, (3, m))
    f = lambda: float((nn.dense(x, w, b) * lw).sum())
    dx, dw, db = nn.dense_backward(lw, x, w)
    for a, p in ((dx, x), (dw, w), (db, b)):
        assert rel_error(a, numeric_grad(f, p)) < TOL


@pytest.mark.parametrize("seed", SEEDS)
def test_relu_dropout_bce_grads(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(4, 5))
    x[np.abs(x) < 1e-3] = 0.5  # keep away from the kink
    lw = _loss_weights(rng, x.shape)
    f = lambda: float((nn.relu(x) * lw).sum())
    assert rel_error(nn.relu_backward(lw, x), numeric_grad(f, x)) < TOL

    _, mask = nn.dropout(x, 0.3, True, np.random.default_rng(seed))
    f = lambda: float((nn.dropout(x, 0.3, True, np.random.default_rng(seed))[0] * lw).sum())
    assert rel_error(nn.dropout_backward(lw, mask), numeric_grad(f, x)) < TOL

    z = rng.normal(size=7) * 3
    y = rng.integers(0, 2, size=7).astype(float)
    f = lambda: float(nn.bce_loss(z, y)[0].sum())
    _, g = nn.bce_loss(z, y)
    assert np.allclose(g, nn.sigmoid(z) - y)
    assert rel_error(g, numeric_grad(f, z)) < TOL


# -- kernel backends -------------------------------------------------------------

@pytest.mark.skipif(not _kernels.HAVE_NUMBA, reason="numba not installed")
@pytest.mark.parametrize("seed", range(5))
def test_numba_and_numpy_kernels_agree(seed):
    rng = np.random.default_rng(seed)
    np_k, nb_k = _kernels.NUMPY_KERNELS, _kernels.NUMBA_KERNELS
    x = rng.normal(size=(3, 11, 4))
    assert np.array_equal(np_k["unfold"](x, 3), nb_k["unfold"](x, 3))
    cols = rng.normal(size=(3, 9, 12))
    assert np.allclose(np_k["fold_add"](cols, 3, 11), nb_k["fold_add"](cols, 3, 11), atol=1e-14)
    for w, s in ((3, 3), (2, 1), (4, 2)):
        o1, i1 = np_k["maxpool_fwd"](x, w, s)
        o2, i2 = nb_k["maxpool_fwd"](x, w, s)
        assert np.array_equal(o1, o2) and np.array_equal(i1, i2)
        d = rng.normal(size=o1.shape)
        assert np.allclose(np_k["maxpool_bwd"](d, i1, 11), nb_k["maxpool_bwd"](d, i2, 11), atol=1e-14)
    ids = rng.integers(0, 6, size=(3, 11))
    assert np.allclose(np_k["embed_bwd"](ids, x, 6), nb_k["embed_bwd"](ids, x, 6), atol=1e-14)


def test_backend_flag_reported():
    assert nn.BACKEND in ("numba", "numpy")
