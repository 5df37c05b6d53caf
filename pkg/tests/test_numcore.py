import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from grammarscope.numcore import (
    Adam,
    AdamState,
    Graph,
    GraphError,
    ShapeError,
    Tensor,
    WeightFormatError,
    adam_step,
    dumps_weights,
    loads_weights,
    max_relative_error,
    numerical_gradients,
    ops,
    parse_schedule,
)


def test_matmul_identity():
    out = ops.matmul(np.eye(2, dtype=np.float32), np.array([3.0, -1.0], dtype=np.float32))
    np.testing.assert_array_equal(out.data, [3.0, -1.0])


def test_softmax_symmetric():
    np.testing.assert_allclose(ops.softmax(np.zeros(2, np.float32)).data, [0.5, 0.5])


def test_tanh_matches_extended_precision():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    expected = [float(mpmath.tanh(mpmath.mpf("0.5"))), float(mpmath.tanh(mpmath.mpf("-0.5")))]
    out = ops.tanh(np.array([0.5, -0.5], dtype=np.float32)).data
    np.testing.assert_allclose(out, expected, rtol=1e-7)
    np.testing.assert_allclose(out, [0.46211716, -0.46211716], atol=1e-8)


def test_sum_squares_grad():
    v = Tensor([1.0, 2.0], requires_grad=True)
    ops.sum_squares(v).backward()
    np.testing.assert_array_equal(v.grad, [2.0, 4.0])


def test_mean_grad():
    v = Tensor(np.arange(4.0), requires_grad=True)
    ops.mean(v).backward()
    np.testing.assert_array_equal(v.grad, [0.25] * 4)


def test_backward_requires_scalar_root():
    v = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(GraphError):
        ops.tanh(v).backward()


def test_graph_backward_before_forward():
    g = Graph(lambda x: ops.sum_squares(x))
    with pytest.raises(GraphError):
        g.backward()


def test_graph_named_gradients():
    g = Graph(lambda x, w: ops.sum(ops.matmul(x, w)))
    g.forward(x=np.ones((2, 3)), w=np.full((3, 1), 2.0))
    grads = g.backward()
    np.testing.assert_allclose(grads["x"], np.full((2, 3), 2.0))
    np.testing.assert_allclose(grads["w"], np.full((3, 1), 2.0))


def test_shape_error_names_node():
    a = Tensor(np.ones((2, 3)), name="lhs")
    b = Tensor(np.ones((2, 3)), name="rhs")
    with pytest.raises(ShapeError) as info:
        ops.matmul(a, b)
    assert "lhs" in info.value.node and "rhs" in info.value.node


def test_forward_is_pure():
    rng = np.random.default_rng(3)
    x = rng.normal(size=(4, 5)).astype(np.float32)
    w = rng.normal(size=(5, 3)).astype(np.float32)
    g = Graph(lambda x, w: ops.mean(ops.log_softmax(ops.tanh(ops.matmul(x, w)))))
    first = g.forward(x=x, w=w).copy()
    second = g.forward(x=x, w=w)
    assert first.tobytes() == second.tobytes()


# one entry per differentiable op-kind: (builder over inputs, input factories)
def _pos(rng, shape):
    return rng.uniform(0.5, 2.0, size=shape)


def _normal(rng, shape):
    return rng.normal(size=shape)


OP_CASES = {
    "matmul": (lambda a, b: ops.matmul(a, b), [(_normal, (3, 4)), (_normal, (4, 2))]),
    "add": (lambda a, b: ops.add(a, b), [(_normal, (3, 4)), (_normal, (4,))]),
    "sub": (lambda a, b: ops.sub(a, b), [(_normal, (3, 1)), (_normal, (3, 4))]),
    "multiply": (lambda a, b: ops.mul(a, b), [(_normal, (3, 4)), (_normal, (1, 4))]),
    "tanh": (lambda a: ops.tanh(a), [(_normal, (3, 4))]),
    "sigmoid": (lambda a: ops.sigmoid(a), [(_normal, (3, 4))]),
    "exp": (lambda a: ops.exp(a), [(_normal, (3, 4))]),
    "log": (lambda a: ops.log(a), [(_pos, (3, 4))]),
    "power": (lambda a: ops.power(a, -0.5), [(_pos, (3, 4))]),
    "softmax": (lambda a: ops.softmax(a, axis=-1), [(_normal, (3, 4))]),
    "log_softmax": (lambda a: ops.log_softmax(a, axis=-1), [(_normal, (3, 4))]),
    "concat": (lambda a, b: ops.concat([a, b], axis=1), [(_normal, (3, 2)), (_normal, (3, 4))]),
    "slice": (lambda a: ops.take(a, (slice(None), slice(3, 0, -1))), [(_normal, (3, 4))]),
    "gather": (lambda a: ops.take(a, (np.array([0, 2, 2]), np.array([1, 1, 3]))), [(_normal, (3, 4))]),
    "mean": (lambda a: ops.mean(a, axis=0), [(_normal, (3, 4))]),
    "sum": (lambda a: ops.sum(a, axis=1), [(_normal, (3, 4))]),
    "sum_squares": (lambda a: ops.sum_squares(a, axis=1), [(_normal, (3, 4))]),
    "reshape": (lambda a: ops.reshape(a, (4, 3)), [(_normal, (3, 4))]),
    "transpose": (lambda a: ops.transpose(a, (1, 0)), [(_normal, (3, 4))]),
    "unfold2d": (lambda a: ops.unfold2d(a, 3, stride=2, pad=1), [(_normal, (1, 5, 4, 2))]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradient_matches_finite_differences(name):
    build, specs = OP_CASES[name]
    rng = np.random.default_rng(1234)
    worst = 0.0
    for _ in range(100):
        arrays = {f"x{i}": make(rng, shape).astype(np.float64) for i, (make, shape) in enumerate(specs)}
        probe = build(*[Tensor(a) for a in arrays.values()]).data
        weights = rng.normal(size=probe.shape)

        graph = Graph(lambda **kw: ops.sum(ops.mul(build(*kw.values()), weights)))
        graph.forward(**arrays)
        analytic = graph.backward()

        def loss():
            return float(np.sum(build(*[Tensor(a) for a in arrays.values()]).data * weights))

        numeric = numerical_gradients(loss, arrays, eps=1e-3)
        worst = max(worst, max_relative_error(analytic, numeric))
    assert worst < 1e-4, f"{name}: {worst}"


@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, (3, 5), elements=st.floats(-30, 30, width=32)))
def test_softmax_rows_on_simplex(x):
    y = ops.softmax(x).data
    assert np.all(y >= 0)
    np.testing.assert_allclose(y.sum(axis=1, dtype=np.float64), 1.0, atol=1e-6)


def test_adam_zero_gradient_leaves_params():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    state = AdamState(lr=0.1)
    for _ in range(5):
        adam_step(params, {"w": np.zeros(3)}, state)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])
    adam_step(params, {"w": None}, state)
    np.testing.assert_array_equal(params["w"], [1.0, -2.0, 3.0])
    assert state.step == 6


def test_adam_first_step_by_hand():
    params = {"w": np.array([0.0])}
    state = AdamState(lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8)
    adam_step(params, {"w": np.array([1.0])}, state)
    # m_hat = (0.1 * 1) / 0.1 = 1, v_hat = (0.001 * 1) / 0.001 = 1
    expected = -1e-4 * 1.0 / (1.0 + 1e-8)
    np.testing.assert_allclose(params["w"], [expected], rtol=1e-12)
    assert state.step == 1


def test_adam_descends_quadratic():
    x = Tensor(np.array([3.0]), requires_grad=True, name="x")
    opt = Adam({"x": x}, lr=0.1)
    losses = []
    for _ in range(3):
        opt.zero_grad()
        loss = ops.sum_squares(x)
        losses.append(loss.item())
        loss.backward()
        opt.step()
    assert losses[0] > losses[1] > losses[2]


def test_adam_shape_mismatch():
    with pytest.raises(ShapeError):
        adam_step({"w": np.zeros(3)}, {"w": np.zeros(2)}, AdamState())


def test_schedules():
    step = parse_schedule("step:20:0.1")
    assert step(19) == 1.0 and step(20) == pytest.approx(0.1)
    multi = parse_schedule("multistep:5,10,15:0.8")
    assert multi(4) == 1.0 and multi(10) == pytest.approx(0.64)
    with pytest.raises(ValueError):
        parse_schedule("cosine")


def test_weights_round_trip():
    rng = np.random.default_rng(0)
    arrays = {"a": rng.normal(size=(2, 3)).astype(np.float32), "scalar": np.float32(2.5), "vec": np.arange(4, dtype=np.float32)}
    back = loads_weights(dumps_weights(arrays))
    assert list(back) == ["a", "scalar", "vec"]
    for k in arrays:
        assert back[k].tobytes() == np.asarray(arrays[k], dtype=np.float32).tobytes()


def test_weights_header_layout():
    blob = dumps_weights({"w": np.ones((1, 2), np.float32)})
    assert blob[:4] == b"IGWT"
    assert blob[4:8] == (1).to_bytes(4, "little")
    assert blob[8:12] == (1).to_bytes(4, "little") and blob[12:13] == b"w"


@pytest.mark.parametrize("blob", [b"NOPE\x01\x00\x00\x00", dumps_weights({"w": np.ones(4)})[:-3], b"IGWT\x09\x00\x00\x00"])
def test_weights_rejects_bad_containers(blob):
    with pytest.raises(WeightFormatError):
        loads_weights(blob)


def test_scalar_results_keep_float64():
    a = Tensor(np.float64(0.1), requires_grad=True, dtype=np.float64)
    out = ops.sum(a * a) * (1.0 / 3.0)
    assert out.dtype == np.float64
