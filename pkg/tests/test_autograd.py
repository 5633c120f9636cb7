import zlib

import numpy as np
import pytest

from turbtensor import autograd as ag


def leaf(x):
    return ag.Node(np.array(x, dtype=float))


def test_outer_product_shape():
    vecs = [leaf(np.ones(n)) for n in (2, 3, 4, 5)]
    assert ag.outer_product(*vecs).shape == (2, 3, 4, 5)


def test_batched_outer_product_shape():
    vecs = [leaf(np.ones((7, n))) for n in (2, 3, 4, 5)]
    assert ag.outer_product(*vecs).shape == (7, 2, 3, 4, 5)


def test_sigmoid_at_zero():
    x = leaf(0.0)
    y = ag.sigmoid(x)
    ag.backward(y)
    assert y.value == 0.5
    assert x.grad == 0.25


def test_identity_loss_grad():
    x = leaf(3.0)
    ag.backward(x)
    assert x.grad == 1.0


def test_dot_self_grad():
    x = leaf([1.0, 2.0])
    ag.backward(ag.dot(x, x))
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_diamond_accumulates():
    x = leaf(1.5)
    ag.backward(ag.add(x, x))
    assert x.grad == 2.0


def test_backward_rejects_non_scalar():
    with pytest.raises(ag.ShapeError):
        ag.backward(leaf([1.0, 2.0]))


@pytest.mark.parametrize("op", [ag.add, ag.multiply, ag.dot])
def test_shape_mismatch_names_op(op):
    with pytest.raises(ag.ShapeError, match=op.__name__ + r".*\(2,\).*\(3,\)"):
        op(leaf([1.0, 2.0]), leaf([1.0, 2.0, 3.0]))


def test_matvec_mismatch():
    with pytest.raises(ag.ShapeError, match="matvec"):
        ag.matvec(leaf(np.ones((2, 3))), leaf(np.ones(4)))


def test_no_broadcasting_in_add():
    with pytest.raises(ag.ShapeError):
        ag.add(leaf(np.ones((2, 3))), leaf(np.ones(3)))


def test_outer_flatten_dot_matches_finite_differences():
    rng = np.random.default_rng(0)
    a, b, c, d = (leaf(rng.normal(size=n)) for n in (2, 3, 4, 5))
    w = ag.constant(rng.normal(size=120))

    def f():
        return ag.dot(ag.flatten(ag.outer_product(a, b, c, d)), w)

    assert ag.grad_check(f, [a], step=1e-5) <= 1e-6


def test_grad_check_quadratic():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    A = A @ A.T
    x = leaf(rng.normal(size=(1, 4)))

    def f():
        y = ag.matmul(x, ag.constant(A))
        return ag.sum_all(ag.multiply(y, x))

    assert ag.grad_check(f, [x]) <= 1e-8


def test_grad_check_sigmoid_chain():
    x = leaf([0.3, -1.2, 2.0])

    def f():
        return ag.sum_all(ag.sigmoid(ag.scale(ag.sigmoid(x), 3.0)))

    assert ag.grad_check(f, [x]) <= 1e-6


def test_grad_check_zero_function():
    x = leaf([1.0, 2.0])

    def f():
        return ag.sum_all(ag.scale(x, 0.0))

    assert ag.grad_check(f, [x]) == 0.0


def _random_graph(rng, op):
    """Scalar loss through ``op`` on random leaves; returns (f, leaves)."""
    B = 3
    if op == "add":
        a, b = leaf(rng.normal(size=(B, 4))), leaf(rng.normal(size=(B, 4)))
        return (lambda: ag.sum_all(ag.multiply(ag.add(a, b), ag.add(a, b)))), [a, b]
    if op == "multiply":
        a, b = leaf(rng.normal(size=(B, 4))), leaf(rng.normal(size=(B, 4)))
        return (lambda: ag.sum_all(ag.multiply(a, b))), [a, b]
    if op == "matvec":
        m, v = leaf(rng.normal(size=(B, 4))), leaf(rng.normal(size=4))
        return (lambda: ag.sum_all(ag.sigmoid(ag.matvec(m, v)))), [m, v]
    if op == "matmul":
        x, w = leaf(rng.normal(size=(B, 4))), leaf(rng.normal(size=(4, 2)))
        return (lambda: ag.sum_all(ag.sigmoid(ag.matmul(x, w)))), [x, w]
    if op == "outer_product":
        vs = [leaf(rng.normal(size=(B, n))) for n in (2, 3, 2, 2)]
        t = ag.constant(rng.normal(size=(B, 2, 3, 2, 2)))
        return (lambda: ag.sum_all(ag.multiply(ag.outer_product(*vs), t))), vs
    if op == "flatten":
        x = leaf(rng.normal(size=(B, 2, 3)))
        w = ag.constant(rng.normal(size=6))
        return (lambda: ag.sum_all(ag.sigmoid(ag.matvec(ag.flatten(x, batched=True), w)))), [x]
    if op == "dot":
        a, b = leaf(rng.normal(size=5)), leaf(rng.normal(size=5))
        return (lambda: ag.sigmoid(ag.dot(a, b))), [a, b]
    if op == "sigmoid":
        x = leaf(rng.normal(size=(B, 3)))
        return (lambda: ag.sum_all(ag.sigmoid(x))), [x]
    if op == "relu":
        # keep inputs away from the kink
        x = leaf(rng.choice([-1, 1], size=(B, 3)) * rng.uniform(0.1, 2.0, size=(B, 3)))
        return (lambda: ag.sum_all(ag.multiply(ag.relu(x), ag.relu(x)))), [x]
    if op == "concat":
        a, b = leaf(rng.normal(size=(B, 2))), leaf(rng.normal(size=(B, 3)))
        w = ag.constant(rng.normal(size=5))
        return (lambda: ag.sum_all(ag.sigmoid(ag.matvec(ag.concat([a, b], axis=1), w)))), [a, b]
    if op == "mse_loss":
        p = leaf(rng.normal(size=B))
        y = ag.constant(rng.normal(size=B))
        return (lambda: ag.mse_loss(p, y)), [p]
    if op == "gather":
        table = leaf(rng.normal(size=(4, 3)))
        idx = rng.integers(0, 4, size=6)
        return (lambda: ag.sum_all(ag.sigmoid(ag.gather(table, idx)))), [table]
    if op == "add_row":
        x, b = leaf(rng.normal(size=(B, 3))), leaf(rng.normal(size=3))
        return (lambda: ag.sum_all(ag.sigmoid(ag.add_row(x, b)))), [x, b]
    if op == "add_scalar":
        x, b = leaf(rng.normal(size=B)), leaf(rng.normal())
        return (lambda: ag.sum_all(ag.sigmoid(ag.add_scalar(x, b)))), [x, b]
    raise KeyError(op)


PRIMITIVES = ["add", "multiply", "matvec", "matmul", "outer_product", "flatten", "dot",
              "sigmoid", "relu", "concat", "mse_loss", "gather", "add_row", "add_scalar"]


@pytest.mark.parametrize("op", PRIMITIVES)
def test_primitive_grad_check_random(op):
    rng = np.random.default_rng(zlib.crc32(op.encode()))
    for _ in range(100):
        f, leaves = _random_graph(rng, op)
        assert ag.grad_check(f, leaves) <= 1e-5


def test_backward_deterministic():
    def run():
        rng = np.random.default_rng(7)
        f, leaves = _random_graph(rng, "outer_product")
        ag.backward(f())
        return [l.grad.copy() for l in leaves]

    for g1, g2 in zip(run(), run()):
        assert g1.tobytes() == g2.tobytes()


def test_linearity_of_gradients():
    rng = np.random.default_rng(3)
    x = leaf(rng.normal(size=4))
    w1, w2 = ag.constant(rng.normal(size=4)), ag.constant(rng.normal(size=4))

    def f():
        return ag.sigmoid(ag.dot(x, w1))

    def g():
        return ag.dot(ag.multiply(x, x), w2)

    def grad(fn):
        x.zero_grad()
        ag.backward(fn())
        return x.grad.copy()

    a, b = 2.5, -0.7
    combined = grad(lambda: ag.add(ag.scale(f(), a), ag.scale(g(), b)))
    np.testing.assert_allclose(combined, a * grad(f) + b * grad(g), rtol=1e-12, atol=1e-14)


def test_gather_out_of_range():
    with pytest.raises(IndexError):
        ag.gather(leaf(np.ones((3, 2))), np.array([3]))
