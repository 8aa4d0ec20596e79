from __future__ import annotations

import math

import numpy as np
import pytest

from hyperkt import autodiff as ad
from hyperkt.errors import DomainError, ShapeError, TapeError


def test_sigmoid_at_zero():
    assert ad.sigmoid(ad.Tensor(0.0)).item() == pytest.approx(0.5, abs=1e-15)


def test_arccosh_boundary():
    assert ad.arccosh(ad.Tensor(1.0)).item() == 0.0


def test_cosh_against_reference():
    # stdlib math is the independent high-precision reference
    assert ad.cosh(ad.Tensor(1.0)).item() == pytest.approx(math.cosh(1.0), abs=1e-12)
    assert ad.cosh(ad.Tensor(1.0)).item() == pytest.approx(1.5430806, abs=1e-7)


def test_matmul_identity():
    a = ad.Tensor([[1.0, 2.0], [3.0, 4.0]])
    eye = ad.Tensor(np.eye(2))
    np.testing.assert_allclose(ad.matmul(eye, a).data, a.data)


def test_matmul_hand_example():
    out = ad.matmul(ad.Tensor([[1.0, 2.0]]), ad.Tensor([[3.0], [4.0]]))
    np.testing.assert_allclose(out.data, [[11.0]])


def test_matmul_grad_is_ones_times_bt():
    rng = np.random.default_rng(0)
    a = ad.Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = ad.Tensor(rng.normal(size=(4, 2)))
    ad.backward(ad.tsum(ad.matmul(a, b)))
    np.testing.assert_allclose(a.grad, np.ones((3, 2)) @ b.data.T)


def test_concat_basic_and_empty():
    out = ad.concat([ad.Tensor([1.0]), ad.Tensor([2.0])])
    np.testing.assert_allclose(out.data, [1.0, 2.0])
    with pytest.raises(ShapeError):
        ad.concat([])


def test_concat_backward_splits_gradient():
    a = ad.Tensor([1.0, 2.0], requires_grad=True)
    b = ad.Tensor([3.0, 4.0, 5.0], requires_grad=True)
    ad.backward(ad.tsum(ad.concat([a, b]) * ad.Tensor([1.0, 2.0, 3.0, 4.0, 5.0])))
    assert a.grad.shape == (2,)
    assert b.grad.shape == (3,)
    np.testing.assert_allclose(a.grad, [1.0, 2.0])
    np.testing.assert_allclose(b.grad, [3.0, 4.0, 5.0])


def test_backward_square():
    x = ad.Tensor(3.0, requires_grad=True)
    ad.backward(x * x)
    assert float(x.grad) == pytest.approx(6.0, abs=1e-12)


def test_backward_sigmoid_quarter():
    x = ad.Tensor(0.0, requires_grad=True)
    ad.backward(ad.sigmoid(x))
    assert float(x.grad) == pytest.approx(0.25, abs=1e-12)


def test_backward_matmul_grad_shapes():
    a = ad.Tensor(np.ones((2, 3)), requires_grad=True)
    b = ad.Tensor(np.ones((3, 5)), requires_grad=True)
    ad.backward(ad.tsum(ad.matmul(a, b)))
    assert a.grad.shape == (2, 3)
    assert b.grad.shape == (3, 5)


def test_backward_requires_scalar_root():
    x = ad.Tensor([1.0, 2.0], requires_grad=True)
    with pytest.raises(ShapeError):
        ad.backward(x * x)


def test_backward_consumes_tape():
    x = ad.Tensor(2.0, requires_grad=True)
    y = x * x
    ad.backward(y)
    with pytest.raises(TapeError):
        ad.backward(y)


def test_backward_deterministic_bit_identical():
    rng = np.random.default_rng(3)
    data = rng.normal(size=(4, 4))

    def run():
        ad.reset_tape()
        x = ad.Tensor(data, requires_grad=True)
        y = ad.tsum(ad.sigmoid(ad.matmul(x, x)) * ad.tanh(x))
        ad.backward(y)
        return x.grad.copy()

    g1, g2 = run(), run()
    assert np.array_equal(g1, g2)


def test_grad_check_sum_of_squares():
    x = ad.Tensor(np.array([0.5, -1.2, 2.0]))
    assert ad.grad_check(lambda t: ad.tsum(t * t), x) < 1e-5


def test_grad_check_constant_is_exact_zero():
    x = ad.Tensor(np.array([1.0, 2.0]))
    err = ad.grad_check(lambda t: ad.Tensor(4.2) + ad.tsum(t * 0.0), x)
    assert err == 0.0


def test_grad_check_rejects_bad_eps():
    with pytest.raises(DomainError):
        ad.grad_check(lambda t: ad.tsum(t), ad.Tensor([1.0]), eps=1e-2)


@pytest.mark.parametrize("name", sorted(ad.UNARY_OPS))
def test_every_unary_op_grad(name):
    rng = np.random.default_rng(hash(name) % (2**32))
    lo, hi = ad.OP_DOMAINS[name]
    x = ad.Tensor(rng.uniform(lo, hi, size=(3, 5)))
    op = ad.UNARY_OPS[name]
    err = ad.grad_check(lambda t: ad.tsum(op(t)), x)
    assert err < 1e-4, f"{name}: {err}"


@pytest.mark.parametrize("name", sorted(ad.BINARY_OPS))
def test_every_binary_op_grad_both_sides(name):
    rng = np.random.default_rng(hash(name) % (2**32))
    lo, hi = ad.OP_DOMAINS[name]
    op = ad.BINARY_OPS[name]
    a = ad.Tensor(rng.uniform(lo, hi, size=(4, 3)))
    b = ad.Tensor(rng.uniform(lo, hi, size=(3,)))  # broadcast path
    assert ad.grad_check(lambda t: ad.tsum(op(t, b)), a) < 1e-4
    assert ad.grad_check(lambda t: ad.tsum(op(a, t)), b) < 1e-4


def test_structural_op_grads():
    rng = np.random.default_rng(11)
    a = ad.Tensor(rng.normal(size=(3, 4)))
    b = ad.Tensor(rng.normal(size=(4, 2)))
    assert ad.grad_check(lambda t: ad.tsum(ad.matmul(t, b)), a) < 1e-4
    assert ad.grad_check(lambda t: ad.tsum(ad.matmul(a, t)), b) < 1e-4
    assert ad.grad_check(lambda t: ad.tsum(ad.concat([t, t], axis=1) * 1.5), a) < 1e-4
    assert ad.grad_check(lambda t: ad.tsum(t[1:, :2] * 2.0), a) < 1e-4
    assert ad.grad_check(lambda t: ad.tsum(ad.reshape(t, (12,)) * 0.5), a) < 1e-4
    assert ad.grad_check(lambda t: ad.tmean(t, axis=0)[1], a) < 1e-4
    assert ad.grad_check(lambda t: ad.tsum(ad.clamp(t, -0.5, 0.5)), a) < 1e-4
    idx = np.array([0, 2, 2, 1])
    assert ad.grad_check(lambda t: ad.tsum(ad.gather_rows(t, idx)), a) < 1e-4
    src = ad.Tensor(rng.normal(size=(4, 2)))
    assert ad.grad_check(lambda t: ad.tsum(ad.scatter_sum(t, idx, 3) * 1.5), src) < 1e-4
    weights = rng.normal(size=(2, 4))
    assert ad.grad_check(lambda t: ad.tsum(ad.softmax(t, axis=1) * weights), ad.Tensor(rng.normal(size=(2, 4)))) < 1e-4


# -- broadcasting oracle ----------------------------------------------------

def _loop_broadcast(op, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Index-by-index trailing-axis broadcasting, no numpy broadcasting used."""
    nd = max(a.ndim, b.ndim)
    sa = (1,) * (nd - a.ndim) + a.shape
    sb = (1,) * (nd - b.ndim) + b.shape
    out_shape = []
    for da, db in zip(sa, sb):
        assert da == db or da == 1 or db == 1
        out_shape.append(max(da, db))
    out = np.empty(tuple(out_shape))
    av = a.reshape(sa)
    bv = b.reshape(sb)
    for idx in np.ndindex(*out_shape):
        ia = tuple(0 if sa[d] == 1 else idx[d] for d in range(nd))
        ib = tuple(0 if sb[d] == 1 else idx[d] for d in range(nd))
        out[idx] = op(float(av[ia]), float(bv[ib]))
    return out


def test_broadcasting_matches_loop_oracle():
    rng = np.random.default_rng(21)
    shapes = [((3, 1), (1, 4)), ((2, 3, 4), (4,)), ((4,), (2, 1, 4)), ((1,), (3, 2)), ((2, 3), (2, 3))]
    pyops = {"add": lambda x, y: x + y, "sub": lambda x, y: x - y,
             "mul": lambda x, y: x * y, "div": lambda x, y: x / y}
    for sa, sb in shapes:
        a = rng.uniform(0.5, 2.0, size=sa)
        b = rng.uniform(0.5, 2.0, size=sb)
        for name, pyop in pyops.items():
            got = ad.BINARY_OPS[name](ad.Tensor(a), ad.Tensor(b)).data
            want = _loop_broadcast(pyop, a, b)
            assert np.array_equal(got, want), f"{name} {sa} {sb}"


def test_shape_mismatch_errors():
    with pytest.raises(ShapeError):
        ad.add(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4,))))
    with pytest.raises(ShapeError):
        ad.matmul(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((2, 3))))


def test_domain_errors_name_the_op():
    with pytest.raises(DomainError) as exc:
        ad.arccosh(ad.Tensor(0.5))
    assert "arccosh" in str(exc.value)
    with pytest.raises(DomainError):
        ad.log(ad.Tensor(-1.0))
    with pytest.raises(DomainError):
        ad.sqrt(ad.Tensor(-0.1))
    with pytest.raises(DomainError):
        ad.div(ad.Tensor(1.0), ad.Tensor(0.0))


def test_elementwise_dispatch():
    out = ad.elementwise("add", ad.Tensor([1.0]), ad.Tensor([2.0]))
    np.testing.assert_allclose(out.data, [3.0])
    np.testing.assert_allclose(ad.elementwise("neg", ad.Tensor([1.0])).data, [-1.0])
    with pytest.raises(DomainError):
        ad.elementwise("nope", ad.Tensor([1.0]))
    with pytest.raises(ShapeError):
        ad.elementwise("exp", ad.Tensor([1.0]), ad.Tensor([1.0]))


def test_no_grad_suppresses_recording():
    x = ad.Tensor(2.0, requires_grad=True)
    with ad.no_grad():
        y = x * x
    assert not y.requires_grad


def test_arccosh_clamps_rounding_noise():
    # values a hair below 1 are legitimate on-manifold rounding
    out = ad.arccosh(ad.Tensor(1.0 - 1e-12))
    assert out.item() == 0.0
