import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deltacrop.errors import ContractError, DimensionError
from deltacrop.numcore import Tensor, grad_check, ops


def t64(a, grad=True):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


class TestMatmul:
    def test_identity(self, rng):
        x = rng.normal(size=(2, 2))
        out = ops.matmul(Tensor(np.eye(2)), Tensor(x))
        np.testing.assert_array_equal(out.data, x)

    def test_hand_product(self):
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])

    def test_zero(self, rng):
        out = Tensor(np.zeros((3, 4))) @ Tensor(rng.normal(size=(4, 2)))
        assert not out.data.any()

    def test_shape_error_names_shapes(self):
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_associativity_32bit(self, rng):
        for _ in range(20):
            a, b, c = (Tensor(rng.normal(size=(8, 8)).astype(np.float32)) for _ in range(3))
            left = ((a @ b) @ c).data
            right = (a @ (b @ c)).data
            np.testing.assert_allclose(left, right, atol=1e-4)


class TestConv2d:
    def test_unit_kernel_identity(self, rng):
        x = rng.normal(size=(1, 4, 5)).astype(np.float32)
        out = ops.conv2d(Tensor(x), Tensor(np.ones((1, 1, 1, 1))))
        np.testing.assert_array_equal(out.data, x)

    def test_all_ones(self):
        out = ops.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
        assert out.shape == (1, 1, 1)
        assert out.data.item() == 9.0

    def test_zero_kernel(self, rng):
        out = ops.conv2d(Tensor(rng.normal(size=(2, 6, 6))), Tensor(np.zeros((3, 2, 3, 3))), padding=1)
        assert out.shape == (3, 6, 6) and not out.data.any()

    @pytest.mark.parametrize("h,k,s,p", [(7, 3, 1, 0), (7, 3, 2, 1), (5, 5, 1, 2), (19, 3, 3, 0)])
    def test_output_extent(self, h, k, s, p):
        out = ops.conv2d(Tensor(np.ones((1, h, h))), Tensor(np.ones((2, 1, k, k))), stride=s, padding=p)
        assert out.shape[1] == (h + 2 * p - k) // s + 1

    def test_kernel_too_large(self):
        with pytest.raises(DimensionError):
            ops.conv2d(Tensor(np.ones((1, 3, 3))), Tensor(np.ones((1, 1, 5, 5))))

    def test_matches_direct_loop(self, rng):
        x = rng.normal(size=(2, 3, 6, 5))
        k = rng.normal(size=(4, 3, 3, 2))
        out = ops.conv2d(Tensor(x), Tensor(k), stride=2, padding=1).data
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        ref = np.zeros_like(out)
        for n in range(2):
            for o in range(4):
                for i in range(out.shape[2]):
                    for j in range(out.shape[3]):
                        ref[n, o, i, j] = (xp[n, :, 2 * i:2 * i + 3, 2 * j:2 * j + 2] * k[o]).sum()
        np.testing.assert_allclose(out, ref, atol=1e-12)


class TestSoftmax:
    def test_uniform(self):
        out = ops.softmax(Tensor(np.full(5, 0.3)))
        np.testing.assert_allclose(out.data, 0.2, atol=1e-7)

    def test_hand_values(self):
        out = ops.softmax(Tensor(np.array([0.0, np.log(3.0)])))
        np.testing.assert_allclose(out.data, [0.25, 0.75], atol=1e-7)

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12), st.floats(-100, 100))
    @settings(max_examples=100, deadline=None)
    def test_shift_invariance_and_simplex(self, xs, c):
        x = np.array(xs)
        a = ops.softmax(Tensor(x)).data
        b = ops.softmax(Tensor(x + c)).data
        np.testing.assert_allclose(a, b, atol=1e-6)
        assert abs(a.sum() - 1) < 1e-6
        assert (a > 0).all() and (a <= 1).all()

    def test_large_logits_stable(self):
        out = ops.softmax(Tensor(np.array([1000.0, 1000.0])))
        np.testing.assert_allclose(out.data, [0.5, 0.5])

    def test_masked_exact_zeros(self, rng):
        x = Tensor(rng.normal(size=(3, 6)))
        mask = np.array([[1, 1, 0, 0, 0, 0], [1, 1, 1, 1, 1, 1], [0, 0, 1, 0, 0, 0]], dtype=bool)
        out = ops.masked_softmax(x, mask).data
        assert (out[~mask] == 0).all()
        np.testing.assert_allclose(out.sum(axis=1), 1, atol=1e-6)
        assert out[2, 2] == 1.0

    def test_masked_all_masked_rejected(self):
        with pytest.raises(ContractError):
            ops.masked_softmax(Tensor(np.ones((1, 3))), np.zeros((1, 3), dtype=bool))


class TestBackward:
    def test_sum_of_squares(self):
        x = t64([1.0, 2.0, 3.0])
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [2, 4, 6])

    def test_constant_function(self):
        x = t64([1.0, 2.0])
        y = t64([3.0, 4.0], grad=False)
        ((x * 0.0) + y).sum().backward()
        np.testing.assert_array_equal(x.grad, [0, 0])

    def test_column_sums(self):
        m, n = 4, 3
        x = t64(np.arange(n, dtype=float).reshape(n, 1))
        (Tensor(np.ones((m, n), dtype=np.float64)) @ x).sum().backward()
        np.testing.assert_array_equal(x.grad.ravel(), [m] * n)

    def test_non_scalar_loss(self):
        x = t64([1.0, 2.0])
        with pytest.raises(ContractError):
            (x * 2).backward()

    def test_accumulation_is_exact_sum(self, rng):
        a = rng.normal(size=(3, 3))
        w1 = rng.normal(size=(3, 3))
        w2 = rng.normal(size=(3, 3))

        def single(w):
            x = t64(a)
            (x @ Tensor(w)).sum().backward()
            return x.grad

        x = t64(a)
        ((x @ Tensor(w1)).sum() + (x @ Tensor(w2)).sum()).backward()
        np.testing.assert_array_equal(x.grad, single(w1) + single(w2))

    def test_diamond_visits_once(self):
        x = t64([2.0])
        y = x * x
        z = y + y
        z.sum().backward()
        np.testing.assert_array_equal(x.grad, [8.0])
        assert len(z.tape()) == 3


class TestGradCheck:
    def test_square(self):
        rep = grad_check(lambda x: (x * x).sum(), np.array([1.0]), eps=1e-6, tol=1e-6)
        assert rep.passed
        assert rep.analytic.item() == 2.0
        assert abs(rep.numeric.item() - 2.0) < 1e-6

    def test_corrupted_backward_fails(self):
        def bad_square(x):
            return Tensor.from_op(x.data ** 2, (x,), lambda g: (g * 4 * x.data,)).sum()

        assert not grad_check(bad_square, np.array([1.0, -0.5])).passed

    def test_composite_chain(self, rng):
        w = Tensor(rng.normal(size=(3, 3)))
        rep = grad_check(lambda x: ops.log(ops.softmax(x @ w, axis=1)).sum(), rng.normal(size=(3, 3)))
        assert rep.max_rel_error < 1e-6


PRIMITIVES = {
    "add": (lambda x, c: (x + c).sum() * (x * 1.3).sum(), (3, 4)),
    "sub": (lambda x, c: ((x - c) * (x - 2 * c)).sum(), (3, 4)),
    "mul_broadcast": (lambda x, c: (x * c[0]).sum() ** 2, (3, 4)),
    "div": (lambda x, c: (c / (x * x + 1.0)).sum(), (3, 4)),
    "power": (lambda x, c: ((x * x + 0.5) ** 1.7 * c).sum(), (3, 4)),
    "exp": (lambda x, c: (ops.exp(x) * c).sum(), (3, 4)),
    "log": (lambda x, c: (ops.log(x * x + 0.1) * c).sum(), (3, 4)),
    "sqrt": (lambda x, c: (ops.sqrt(x * x + 0.2) * c).sum(), (3, 4)),
    "relu": (lambda x, c: (ops.relu(x) * c).sum(), (3, 4)),
    "mean_axis": (lambda x, c: (x.mean(axis=1) ** 2).sum(), (3, 4)),
    "std": (lambda x, c: (ops.std(x, axis=1) * c[:, 0]).sum(), (3, 4)),
    "reshape_transpose": (lambda x, c: (x.reshape(4, 3).T * c).sum() ** 2, (3, 4)),
    "getitem": (lambda x, c: (x[1:, ::2] ** 2).sum(), (3, 4)),
    "concat": (lambda x, c: (ops.concat([x, x * 2], axis=1) ** 2).sum(), (3, 4)),
    "matmul": (lambda x, c: ((x @ c.T) ** 2).sum(), (3, 4)),
    "linear": (lambda x, c: (ops.linear(x, c, c[:, 0]) ** 2).sum(), (4, 4)),
    "softmax": (lambda x, c: (ops.softmax(x, axis=1) * c).sum(), (3, 4)),
    "log_softmax": (lambda x, c: (ops.log_softmax(x, axis=0) * c).sum(), (3, 4)),
    "masked_softmax": (
        lambda x, c: (ops.masked_softmax(x, np.array([1, 0, 1, 1], dtype=bool)) * c).sum(),
        (3, 4),
    ),
    "conv2d": (
        lambda x, c: (ops.conv2d(x.reshape(1, 1, 3, 4), c.reshape(1, 1, 3, 4)[:, :, :2, :2], padding=1) ** 2).sum(),
        (3, 4),
    ),
}


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients(name):
    f, shape = PRIMITIVES[name]
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    worst = 0.0
    for trial in range(100):
        x = rng.uniform(-1, 1, size=shape)
        c = Tensor(rng.uniform(-1, 1, size=shape))
        rep = grad_check(lambda t: f(t, c), x, eps=1e-5, tol=1e-6)
        worst = max(worst, rep.max_rel_error)
    assert worst < 1e-6, f"{name}: max relative error {worst:.3e}"


def test_conv_kernel_gradient(rng):
    x = Tensor(rng.normal(size=(2, 3, 5, 5)))
    f = lambda k: (ops.conv2d(x, k, stride=2, padding=1) ** 2).sum()  # noqa: E731
    assert grad_check(f, rng.normal(size=(2, 3, 3, 3))).max_rel_error < 1e-6


def test_no_grad_blocks_tape():
    from deltacrop.numcore import no_grad

    x = t64([1.0])
    with no_grad():
        y = x * 2
    assert not y.requires_grad
