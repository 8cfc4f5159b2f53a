import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from genet import diffcore as dc
from genet.diffcore import Tensor, kernels
from genet.errors import ContractError, DimensionError

from .gradcheck import check

SEEDS = range(20)


def t64(a, grad=False):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=grad)


def away_from_kinks(rng, shape, margin=1e-4):
    x = rng.standard_normal(shape)
    return np.where(np.abs(x) < margin, margin * 10 * np.sign(x + 1e-12), x)


# -- trivial examples -------------------------------------------------------------

def test_add_and_relu_examples():
    assert np.array_equal(dc.add(Tensor([1, 2]), Tensor([3, 4])).data, [4, 6])
    assert np.array_equal(dc.relu(Tensor([-1, 0, 2])).data, [0, 0, 2])


def test_mean_abs_gradient_is_sign():
    x = t64([2.0], grad=True)
    y = t64([5.0])
    dc.mean(dc.abs(x - y)).backward()
    assert x.grad.tolist() == [-1.0]


def test_kink_subgradients_are_zero():
    x = t64([0.0, 0.0], grad=True)
    dc.sum(dc.abs(x) + dc.relu(x)).backward()
    assert x.grad.tolist() == [0.0, 0.0]


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        dc.add(Tensor(np.ones(3)), Tensor(np.ones(4)))
    with pytest.raises(DimensionError):
        dc.mul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 2))))


def test_scalar_operand_broadcasts():
    x = t64([[1.0, 2.0], [3.0, 4.0]], grad=True)
    s = t64([2.0], grad=True)
    dc.sum(x * s).backward()
    assert np.allclose(x.grad, 2.0)
    assert s.grad.tolist() == [10.0]


def test_constants_do_not_require_grad():
    assert not Tensor([1.0, 2.0]).requires_grad
    assert Tensor([1.0]).dtype == np.float32


def test_reductions():
    assert dc.l1(Tensor([1, -2, 3])).item() == 6
    assert dc.l2(Tensor([3, 4])).item() == 5
    x = t64(np.arange(5.0), grad=True)
    dc.mean(x).backward()
    assert np.allclose(x.grad, 1 / 5)
    z = t64(np.zeros(3), grad=True)
    dc.l2(z).backward()
    assert np.array_equal(z.grad, np.zeros(3))


def test_backward_examples():
    x = t64([3.0], grad=True)
    (x * x).sum().backward()
    assert x.grad.tolist() == [6.0]
    a, b = t64([1.0], grad=True), t64([2.0], grad=True)
    (a + b).sum().backward()
    assert a.grad.tolist() == [1.0] and b.grad.tolist() == [1.0]


def test_backward_requires_scalar():
    x = t64([1.0, 2.0], grad=True)
    with pytest.raises(ContractError):
        (x * 2).backward()


def test_backward_accumulates_and_is_deterministic():
    rng = np.random.default_rng(0)
    w = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32), requires_grad=True)
    x = Tensor(rng.standard_normal((2, 3, 6, 6)).astype(np.float32))
    loss = dc.mean(dc.relu(dc.conv2d(x, w, padding=1)))
    loss.backward(retain_graph=True)
    g1 = w.grad.copy()
    w.zero_grad()
    loss.backward(retain_graph=True)
    assert np.array_equal(w.grad, g1)
    loss.backward()
    assert np.array_equal(w.grad, 2 * g1)
    with pytest.raises(ContractError):
        loss.backward()


def test_tape_is_reverse_execution_order():
    x = t64([1.0, 2.0], grad=True)
    y = dc.relu(x * 3.0)
    z = dc.sum(y + x)
    tape = dc.ComputationTape(z)
    names = [n.name for n in tape.nodes]
    assert names == ["mul", "relu", "add", "sum"]
    assert [n.name for n in tape.reverse()] == names[::-1]
    z.backward()
    assert x.grad.tolist() == [4.0, 4.0]


def test_unreached_leaf_gets_zero_grad():
    x = t64([1.0], grad=True)
    y = t64([2.0], grad=True)
    (x * 0.0 + dc.relu(y * -1.0)).sum().backward()
    assert x.grad.tolist() == [0.0]
    assert y.grad.tolist() == [0.0]


def test_no_grad_records_nothing():
    x = t64([1.0], grad=True)
    with dc.no_grad():
        y = x * 2
    assert not y.requires_grad and y.is_leaf


# -- convolutions -----------------------------------------------------------------

def test_conv2d_shapes_and_values():
    x = Tensor(np.ones((1, 1, 8, 8)))
    w = Tensor(np.ones((5, 1, 3, 3)))
    assert dc.conv2d(x, w, stride=1, padding=1).shape == (1, 5, 8, 8)
    out = dc.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
    assert out.data.tolist() == [[[[9.0]]]]
    with pytest.raises(DimensionError):
        dc.conv2d(Tensor(np.ones((1, 1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))))


def test_conv_transpose2d_shapes():
    w = Tensor(np.ones((6, 4, 4, 4)))
    assert dc.conv_transpose2d(Tensor(np.ones((1, 6, 1, 1))), w, stride=2, padding=1).shape == (1, 4, 2, 2)
    assert dc.conv_transpose2d(Tensor(np.ones((1, 6, 4, 4))), w, stride=2, padding=1).shape == (1, 4, 8, 8)


@pytest.mark.parametrize("h,k,s,p", [(8, 3, 1, 1), (8, 4, 2, 1), (9, 3, 2, 0), (8, 1, 1, 0)])
def test_conv_transpose_is_adjoint_of_conv(h, k, s, p):
    rng = np.random.default_rng(k * 10 + s)
    a = rng.standard_normal((2, 3, h, h))
    w = rng.standard_normal((4, 3, k, k))
    ca = dc.conv2d(t64(a), t64(w), stride=s, padding=p).data
    b = rng.standard_normal(ca.shape)
    ctb = dc.conv_transpose2d(t64(b), t64(w), stride=s, padding=p).data
    assert ctb.shape == a.shape
    assert np.isclose(np.vdot(ca, b), np.vdot(a, ctb), rtol=1e-12)


def test_instance_norm_examples():
    const = dc.instance_norm(Tensor(np.full((1, 1, 2, 2), 3.0)))
    assert np.array_equal(const.data, np.zeros((1, 1, 2, 2), dtype=np.float32))
    out = dc.instance_norm(t64([[[[1.0, 3.0]]]]), eps=1e-12)
    assert np.allclose(out.data.ravel(), [-1, 1])


def test_instance_norm_plane_statistics():
    rng = np.random.default_rng(3)
    out = dc.instance_norm(Tensor(rng.standard_normal((3, 4, 5, 5)) * 7 + 2)).data
    assert np.abs(out.mean(axis=(2, 3))).max() <= 1e-5
    assert np.abs(out.var(axis=(2, 3)) - 1).max() <= 1e-3


# -- gradient suites: 20 seeds per op, both precisions ---------------------------

def _grad_cases():
    def elementwise(rng):
        a, b = away_from_kinks(rng, (3, 4)), rng.standard_normal((3, 4))
        return (lambda x, y: dc.sum(dc.relu(x) * y + dc.abs(x - y) - dc.clamp(x, -0.5, 0.5))), [a, b]

    def scalar_mul(rng):
        return (lambda x, s: dc.sum(dc.sigmoid(x * s))), [rng.standard_normal((5,)), rng.standard_normal((1,))]

    def conv2d(rng):
        x, w, b = rng.standard_normal((1, 1, 5, 5)), rng.standard_normal((2, 1, 3, 3)), rng.standard_normal(2)
        r = rng.standard_normal((1, 2, 3, 3))
        return (lambda x, w, b: dc.sum(dc.conv2d(x, w, b, stride=2, padding=1) * Tensor(r, dtype=x.dtype))), [x, w, b]

    def conv_t(rng):
        x, w, b = rng.standard_normal((1, 2, 3, 3)), rng.standard_normal((2, 3, 4, 4)), rng.standard_normal(3)
        r = rng.standard_normal((1, 3, 6, 6))
        return (lambda x, w, b: dc.sum(dc.conv_transpose2d(x, w, b, stride=2, padding=1) * Tensor(r, dtype=x.dtype))), [x, w, b]

    def inorm(rng):
        x, g, b = rng.standard_normal((2, 3, 4, 4)), rng.standard_normal(3), rng.standard_normal(3)
        r = rng.standard_normal((2, 3, 4, 4))
        return (lambda x, g, b: dc.sum(dc.instance_norm(x, 1e-5, g, b) * Tensor(r, dtype=x.dtype))), [x, g, b]

    def reductions(rng):
        x = away_from_kinks(rng, (6,))
        return (lambda x: dc.l1(x) + dc.l2(x) + dc.mean(x) * 3.0 + dc.sum(x)), [x]

    def softmax_ce(rng):
        x = rng.standard_normal((2, 4, 3, 3))
        lab = rng.integers(0, 4, size=(2, 3, 3))
        r = rng.standard_normal((2, 4, 3, 3))
        return (lambda x: dc.cross_entropy(x, lab) + dc.sum(dc.softmax(x) * Tensor(r, dtype=x.dtype))), [x]

    def resample(rng):
        x = rng.standard_normal((1, 2, 4, 4))
        r = rng.standard_normal((1, 2, 4, 4))
        return (lambda x: dc.sum(dc.upsample_nearest(dc.avg_pool(x, 2), 2) * Tensor(r, dtype=x.dtype))), [x]

    def shape_ops(rng):
        a, b, m = rng.standard_normal((2, 3)), rng.standard_normal((2, 2)), rng.standard_normal((5, 4))
        r = rng.standard_normal((2, 1, 3, 3))

        def f(a, b, m):
            c = dc.concat([a, b], axis=1)
            y = dc.matmul(c, m)[:, 1:4]
            z = dc.broadcast_to(dc.reshape(y[:, :1], (2, 1, 1, 1)), (2, 1, 3, 3))
            return dc.sum(y * y) + dc.sum(z * Tensor(r, dtype=a.dtype))
        return f, [a, b, m]

    return {
        "elementwise": elementwise, "scalar_mul": scalar_mul, "conv2d": conv2d,
        "conv_transpose2d": conv_t, "instance_norm": inorm, "reductions": reductions,
        "softmax_cross_entropy": softmax_ce, "resample": resample, "shape_ops": shape_ops,
    }


GRAD_CASES = _grad_cases()


@pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-3), (np.float64, 1e-6)])
@pytest.mark.parametrize("op", sorted(GRAD_CASES))
def test_gradients_match_finite_differences(op, dtype, tol):
    worst = 0.0
    for seed in SEEDS:
        build, arrays = GRAD_CASES[op](np.random.default_rng(seed))
        worst = max(worst, check(build, [a.astype(dtype) for a in arrays]))
    assert worst <= tol, f"{op}: max rel err {worst:.2e}"


# -- optimizer --------------------------------------------------------------------

def test_sgd_step_examples():
    x = t64([1.0], grad=True)
    x.grad = np.array([2.0])
    dc.sgd_step([x], 0.5)
    assert x.data.tolist() == [0.0]
    y = t64([5.0, 5.0], grad=True)
    y.grad = np.array([1.0, 1.0])
    dc.sgd_step([y], [np.array([1.0, 2.0])])
    assert y.data.tolist() == [4.0, 3.0]
    y.grad = np.array([7.0, 7.0])
    dc.sgd_step([y], 0.0)
    assert y.data.tolist() == [4.0, 3.0]


def test_sgd_step_needs_grads():
    with pytest.raises(ContractError):
        dc.sgd_step([t64([1.0], grad=True)], 0.1)


# -- kernel backends --------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(
    n=st.integers(1, 2), c=st.integers(1, 3), h=st.integers(3, 9),
    k=st.integers(1, 4), s=st.integers(1, 3), p=st.integers(0, 2),
)
def test_backends_agree(n, c, h, k, s, p):
    if (h + 2 * p - k) // s + 1 <= 0 or h + 2 * p < k:
        return
    rng = np.random.default_rng(h * 100 + k * 10 + s)
    x = rng.standard_normal((n, c, h, h))
    results = {}
    for name in kernels.available_backends():
        kernels.use_backend(name)
        cols = kernels.im2col(x, k, s, p)
        results[name] = (cols, kernels.col2im(cols, x.shape, k, s, p))
    kernels.use_backend("cython" if "cython" in results else "numpy")
    ref = results["numpy"]
    for cols, back in results.values():
        assert np.array_equal(cols, ref[0])
        assert np.allclose(back, ref[1], rtol=1e-12, atol=1e-12)


# -- GEW1 -------------------------------------------------------------------------

def test_gew1_roundtrip_and_layout(tmp_path):
    tensors = {"a": np.arange(6, dtype=np.float32).reshape(2, 3), "bé": np.array([1.5], dtype=np.float32)}
    buf = dc.dumps_weights(tensors)
    assert buf[:4] == b"GEW1"
    assert struct.unpack_from("<I", buf, 4) == (2,)
    name_len, = struct.unpack_from("<I", buf, 8)
    assert name_len == 1 and buf[12:13] == b"a"
    rank, d0, d1 = struct.unpack_from("<3I", buf, 13)
    assert (rank, d0, d1) == (2, 2, 3)
    assert np.frombuffer(buf, "<f4", 6, 25).tolist() == list(range(6))
    back = dc.loads_weights(buf)
    assert list(back) == ["a", "bé"]
    for k in tensors:
        assert np.array_equal(back[k], tensors[k])
    path = tmp_path / "w.gew"
    dc.save_weights(path, tensors)
    assert path.read_bytes() == buf
