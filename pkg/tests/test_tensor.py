import numpy as np
import pytest

from descrl.core import tensor as T
from descrl.core.gradcheck import gradient_check, relative_errors
from descrl.core.tensor import Parameter, Tensor, backward, no_grad, precision
from descrl.exceptions import ShapeError, ValidationError

MASK = np.array([[False, True, False, False], [False, False, False, True], [True, False, False, False]])
IDS = np.array([[0, 2], [4, 1]])
PICKS = np.array([1, 3, 0])

# name -> (builder over the parameter dict, parameter shapes)
PRIMITIVES = {
    "add_broadcast": (lambda p: p["a"] + p["b"], {"a": (3, 4), "b": (4,)}),
    "sub": (lambda p: p["a"] - p["b"], {"a": (3, 4), "b": (3, 1)}),
    "mul": (lambda p: p["a"] * p["b"], {"a": (3, 4), "b": (1, 4)}),
    "div": (lambda p: p["a"] / (p["b"] * p["b"] + 1.0), {"a": (3, 4), "b": (3, 4)}),
    "neg": (lambda p: -p["a"], {"a": (5,)}),
    "power": (lambda p: (p["a"] * p["a"] + 1.0) ** 1.5, {"a": (3, 4)}),
    "exp": (lambda p: T.exp(p["a"]), {"a": (3, 4)}),
    "log": (lambda p: T.log(p["a"] * p["a"] + 0.5), {"a": (3, 4)}),
    "tanh": (lambda p: T.tanh(p["a"]), {"a": (3, 4)}),
    "relu": (lambda p: T.relu(p["a"]), {"a": (3, 4)}),
    "gelu": (lambda p: T.gelu(p["a"]), {"a": (3, 4)}),
    "minimum": (lambda p: T.minimum(p["a"], p["b"]), {"a": (3, 4), "b": (3, 4)}),
    "clip": (lambda p: T.clip(p["a"], -0.5, 0.5), {"a": (3, 4)}),
    "masked_softmax": (lambda p: T.softmax(T.masked_fill(p["a"], MASK, -1e9)), {"a": (3, 4)}),
    "matmul_batched": (lambda p: p["a"] @ p["b"], {"a": (2, 3, 4), "b": (4, 5)}),
    "sum_axis": (lambda p: p["a"].sum(axis=1, keepdims=True) * p["a"], {"a": (3, 4)}),
    "mean": (lambda p: p["a"].mean(axis=0), {"a": (3, 4)}),
    "reshape": (lambda p: p["a"].reshape(4, 3) @ p["b"], {"a": (3, 4), "b": (3, 2)}),
    "transpose": (lambda p: p["a"].transpose(2, 0, 1), {"a": (2, 3, 4)}),
    "swapaxes": (lambda p: p["a"].swapaxes(0, 1) @ p["b"], {"a": (3, 4), "b": (3, 2)}),
    "concat": (lambda p: T.concat([p["a"], p["b"]], axis=-1), {"a": (3, 4), "b": (3, 2)}),
    "stack": (lambda p: T.stack([p["a"], p["b"] * p["a"]], axis=1), {"a": (3, 4), "b": (3, 4)}),
    "getitem": (lambda p: p["a"][:, 1:3], {"a": (3, 4)}),
    "embedding_repeated": (lambda p: T.embedding(p["w"], np.array([[0, 2], [2, 1]])), {"w": (5, 3)}),
    "take_last": (lambda p: T.take_last(p["a"], PICKS), {"a": (3, 4)}),
    "softmax": (lambda p: T.softmax(p["a"], axis=0), {"a": (3, 4)}),
    "log_softmax": (lambda p: T.log_softmax(p["a"]), {"a": (3, 4)}),
    "layer_norm": (lambda p: T.layer_norm(p["a"], p["g"], p["b"]), {"a": (3, 4), "g": (4,), "b": (4,)}),
}


def _weighted(out: Tensor) -> Tensor:
    weights = np.random.default_rng(0).normal(size=out.shape)
    return (out * weights).sum()


@pytest.mark.parametrize("name", sorted(PRIMITIVES))
def test_primitive_gradients_match_finite_differences(name):
    build, shapes = PRIMITIVES[name]
    rng = np.random.default_rng(42)
    with precision("float64"):
        params = {k: Parameter(rng.normal(size=s), name=k) for k, s in shapes.items()}
        error = gradient_check(lambda: _weighted(build(params)), params)
    assert error < 1e-4


def _off_kinks(params):
    # relu, clip and minimum are not differentiable at 0, +-0.5 and a == b.
    for p in params.values():
        near = np.isclose(np.abs(p.data), 0.0, atol=2e-3) | np.isclose(np.abs(p.data), 0.5, atol=2e-3)
        p.data[near] += 0.01
    if "a" in params and "b" in params and params["a"].shape == params["b"].shape:
        a, b = params["a"].data, params["b"].data
        b[np.abs(a - b) < 2e-3] += 0.01
    return params


@pytest.mark.parametrize("seed", range(50))
def test_primitive_gradients_hold_across_seeds(seed):
    rng = np.random.default_rng(seed)
    with precision("float64"):
        for name, (build, shapes) in sorted(PRIMITIVES.items()):
            params = _off_kinks({k: Parameter(rng.normal(size=s), name=k) for k, s in shapes.items()})
            error = gradient_check(lambda: _weighted(build(params)), params)
            assert error < 1e-4, name


def test_default_dtype_is_float32_and_precision_restores():
    assert Tensor([1.0]).dtype == np.float32
    with precision("float64"):
        assert Tensor([1.0]).dtype == np.float64
    assert Tensor([1.0]).dtype == np.float32


def test_gradcheck_rejects_float32():
    p = Parameter(np.ones(3), name="p")
    with pytest.raises(ValidationError):
        relative_errors(lambda: (p * p).sum(), {"p": p})


def test_backward_gives_zeros_for_unused_parameters():
    a = Parameter(np.ones((2, 2)), name="a")
    unused = Parameter(np.ones(3), name="unused")
    grads = backward((a * 3.0).sum(), {"a": a, "unused": unused})
    assert np.allclose(grads["a"], 3.0)
    assert np.array_equal(grads["unused"], np.zeros(3, dtype=np.float32))


def test_backward_accumulates_over_shared_subexpressions():
    a = Parameter(np.array([2.0]), name="a")
    b = a * a
    grads = backward((b + b * a).sum(), {"a": a})
    # d/da (a^2 + a^3) = 2a + 3a^2
    assert np.allclose(grads["a"], [16.0])


def test_backward_rejects_non_scalar_loss():
    a = Parameter(np.ones(3), name="a")
    with pytest.raises(ShapeError):
        backward(a * 2.0, {"a": a})


def test_no_grad_records_nothing_and_nests():
    a = Parameter(np.ones(3), name="a")
    with no_grad():
        with no_grad():
            inner = a * 2.0
        outer = a + 1.0
    assert not inner.requires_grad and not outer.requires_grad
    assert (a * 2.0).requires_grad


def test_shape_errors_name_the_operation():
    a = Tensor(np.ones((2, 3)), name="left")
    b = Tensor(np.ones((4, 5)), name="right")
    with pytest.raises(ShapeError) as excinfo:
        a @ b
    assert excinfo.value.details["node"] == "matmul(left, right)"
    assert excinfo.value.details["shapes"] == [(2, 3), (4, 5)]
    with pytest.raises(ShapeError):
        a + Tensor(np.ones(4))
    with pytest.raises(ShapeError):
        a.reshape(5)
    with pytest.raises(ShapeError):
        T.embedding(Tensor(np.ones((3, 2))), np.array([3]))
    with pytest.raises(ShapeError):
        T.take_last(a, np.array([0, 1, 2]))
    with pytest.raises(ShapeError):
        T.masked_fill(a, np.zeros((3, 3), dtype=bool), 0.0)


def test_masked_fill_blocks_gradient():
    a = Parameter(np.ones((3, 4)), name="a")
    grads = backward(T.masked_fill(a, MASK, 5.0).sum(), {"a": a})
    assert np.array_equal(grads["a"], (~MASK).astype(np.float32))


def test_softmax_rows_sum_to_one_with_large_inputs():
    out = T.softmax(Tensor(np.array([[1000.0, 999.0, -1000.0]])))
    assert np.all(np.isfinite(out.data))
    assert np.allclose(out.data.sum(axis=-1), 1.0)


def test_embedding_backward_accumulates_repeated_ids():
    w = Parameter(np.zeros((5, 3)), name="w")
    grads = backward(T.embedding(w, IDS).sum() + T.embedding(w, np.array([2])).sum(), {"w": w})
    assert np.allclose(grads["w"][2], 2.0)
    assert np.allclose(grads["w"][3], 0.0)
