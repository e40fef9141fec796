import numpy as np
import pytest

from audiodiff.autodiff import Tensor, finite_diff_check, grad
from audiodiff.errors import ContractError, ParameterError


def test_hand_derived_scalar_chain():
    # f(x, y) = (x*y + x)^2, df/dx = 2(xy+x)(y+1), df/dy = 2(xy+x)x
    x = Tensor(3.0)
    y = Tensor(-2.0)
    u = x * y + x
    f = u * u
    gx, gy = grad(f, [x, y])
    assert f.item() == 9.0
    assert gx.data == pytest.approx(2.0 * (-3.0) * (-1.0), abs=1e-15)
    assert gy.data == pytest.approx(2.0 * (-3.0) * 3.0, abs=1e-15)


def test_diamond_graph_accumulates():
    # z = x*x + x reuses x twice; dz/dx = 2x + 1
    x = Tensor(1.5)
    z = x * x + x
    (g,) = grad(z, [x])
    assert g.data == pytest.approx(4.0, abs=1e-15)


def test_matmul_and_broadcast_bias():
    rng = np.random.default_rng(0)
    a = Tensor(rng.standard_normal((3, 4)))
    w = Tensor(rng.standard_normal((4, 2)))
    b = Tensor(rng.standard_normal((1, 2)))
    out = (a @ w + b).sqnorm()
    ga, gw, gb = grad(out, [a, w, b])
    # d||Y||^2/dA = 2 Y W^T, /dW = 2 A^T Y, /db = 2 sum_rows(Y)
    y = a.data @ w.data + b.data
    assert np.allclose(ga.data, 2.0 * y @ w.data.T, atol=1e-12)
    assert np.allclose(gw.data, 2.0 * a.data.T @ y, atol=1e-12)
    assert np.allclose(gb.data, 2.0 * y.sum(axis=0, keepdims=True),
                       atol=1e-12)


def test_elementwise_op_gradients():
    rng = np.random.default_rng(1)
    x = rng.uniform(0.5, 2.0, size=7)
    t = Tensor(x)
    checks = [
        (t.exp().sum(), np.exp(x)),
        (t.log().sum(), 1.0 / x),
        (t.tanh().sum(), 1.0 - np.tanh(x) ** 2),
        ((t * t).sum(), 2.0 * x),
        ((-t).sum(), -np.ones_like(x)),
    ]
    for out, expect in checks:
        (g,) = grad(out, [t])
        assert np.allclose(g.data, expect, atol=1e-12)


def test_relu_subgradient_zero_at_kink():
    t = Tensor(np.array([-1.0, 0.0, 2.0]))
    (g,) = grad(t.relu().sum(), [t])
    assert np.array_equal(g.data, [0.0, 0.0, 1.0])


def test_softmax_rows_and_gradient():
    rng = np.random.default_rng(2)
    x = Tensor(rng.standard_normal((4, 5)) * 30.0)  # stressed scale
    sm = x.softmax()
    assert np.allclose(sm.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(sm.data >= 0.0)

    # weighted-sum objective vs the analytic softmax Jacobian
    w = rng.standard_normal((4, 5))
    out = (sm * Tensor(w)).sum()
    (g,) = grad(out, [x])
    p = sm.data
    expect = p * (w - (w * p).sum(axis=1, keepdims=True))
    assert np.allclose(g.data, expect, atol=1e-12)


def test_reductions_and_reshape():
    x = Tensor(np.arange(6.0).reshape(2, 3))
    assert x.mean().item() == 2.5
    assert x.sum().item() == 15.0
    (g,) = grad(x.reshape((6,)).sqnorm(), [x])
    assert np.allclose(g.data, 2.0 * x.data, atol=0.0)
    (g,) = grad(x.T.sum(), [x])
    assert np.array_equal(g.data, np.ones((2, 3)))


def test_unreachable_parameter_gets_zero_gradient():
    x = Tensor(2.0)
    unused = Tensor(np.ones((3, 3)))
    gx, gu = grad(x * x, [x, unused])
    assert gx.data == 4.0
    assert np.array_equal(gu.data, np.zeros((3, 3)))


def test_deep_chain_does_not_recurse():
    # iterative topological order must handle graphs deeper than the
    # interpreter recursion limit
    x = Tensor(1.0)
    y = x
    for _ in range(5000):
        y = y + x
    (g,) = grad(y * Tensor(1.0), [x])
    assert g.data == 5001.0


def test_contracts():
    with pytest.raises(ContractError):
        Tensor(np.array([1.0, np.inf]))
    with pytest.raises(ContractError):
        Tensor(np.array([np.nan]))
    with pytest.raises(ContractError):
        grad(Tensor(np.ones(3)).exp(), [Tensor(1.0)])  # non-scalar objective
    with pytest.raises(ContractError):
        Tensor(np.ones(3)) @ Tensor(np.ones(3))  # matmul wants rank 2
    with pytest.raises(ParameterError):
        finite_diff_check(lambda ps: ps[0] * ps[0], [Tensor(1.0)], step=0.0)


def test_finite_diff_check_on_small_mlp():
    rng = np.random.default_rng(3)
    w1 = Tensor(rng.standard_normal((4, 8)) * 0.5)
    b1 = Tensor(rng.standard_normal((1, 8)) * 0.1)
    w2 = Tensor(rng.standard_normal((8, 2)) * 0.5)
    x = rng.standard_normal((5, 4))
    tgt = rng.standard_normal((5, 2))

    def f(ps):
        a, c, d = ps
        hidden = (Tensor(x) @ a + c).tanh()
        return (hidden @ d - Tensor(tgt)).sqnorm()

    err = finite_diff_check(f, [w1, b1, w2])
    assert err < 1e-7


def test_finite_diff_check_flags_wrong_gradient():
    # a function whose graph ignores part of the dependence must be caught
    x = Tensor(1.2345)

    def dishonest(ps):
        frozen = Tensor(ps[0].data * ps[0].data)  # detached square
        return frozen + ps[0]

    err = finite_diff_check(dishonest, [x])
    assert err > 0.1
