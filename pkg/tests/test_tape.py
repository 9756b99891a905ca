import numpy as np
import pytest

from tdmasync.tape import ComputationTape


def test_square_gradient():
    tape = ComputationTape()
    x = tape.leaf(3.0)
    y = tape.weighted_squares([x], [1.0])  # y = x^2
    assert y.value == 9.0
    tape.backward(y)
    assert x.grad == pytest.approx(6.0, rel=1e-15)


def test_sigmoid_local_derivative_at_zero():
    tape = ComputationTape()
    x = tape.leaf(np.zeros(1))
    s = tape.sigmoid(x)
    out = tape.dot(s, tape.leaf(np.ones(1)))
    tape.backward(out)
    assert x.grad[0] == pytest.approx(0.25, rel=1e-15)


def test_lincomb_values_and_grads():
    tape = ComputationTape()
    a = tape.leaf(2.0)
    b = tape.leaf(-1.5)
    y = tape.lincomb([a, b], [3.0, 2.0], constant=0.5)  # 0.5 + 3a + 2b
    assert y.value == pytest.approx(3.5, rel=1e-15)
    out = tape.weighted_squares([y], [1.0])
    tape.backward(out)
    assert a.grad == pytest.approx(2 * 3.5 * 3.0, rel=1e-14)
    assert b.grad == pytest.approx(2 * 3.5 * 2.0, rel=1e-14)


def test_softmax_and_mask_renormalize_gradients_match_fd():
    rng = np.random.default_rng(5)
    logits0 = rng.normal(size=6)
    mask = np.array([True, False, True, True, False, True])
    coeff = rng.normal(size=6)

    def value(logits):
        e = np.exp(logits - logits.max())
        s = e / e.sum()
        kept = s * mask
        w = kept / kept.sum()
        return float(coeff @ w)

    tape = ComputationTape()
    x = tape.leaf(logits0)
    w = tape.masked_renormalize(tape.softmax(x), mask)
    out = tape.dot(w, tape.leaf(coeff))
    tape.backward(out)

    h = 1e-7
    for i in range(6):
        bumped = logits0.copy()
        bumped[i] += h
        dropped = logits0.copy()
        dropped[i] -= h
        fd = (value(bumped) - value(dropped)) / (2 * h)
        # abs floor covers central-difference roundoff (~1e-9 at h=1e-7)
        assert x.grad[i] == pytest.approx(fd, rel=1e-6, abs=5e-9)


def test_dense_gradients_match_fd():
    rng = np.random.default_rng(8)
    w0 = rng.normal(size=(4, 3))
    b0 = rng.normal(size=4)
    x0 = rng.normal(size=3)
    coeff = rng.normal(size=4)

    def value(w, b, x):
        return float(coeff @ (w @ x + b))

    tape = ComputationTape()
    w = tape.leaf(w0)
    b = tape.leaf(b0)
    x = tape.leaf(x0)
    out = tape.dot(tape.dense(w, b, x), tape.leaf(coeff))
    tape.backward(out)

    h = 1e-7
    for arr, node in ((w0, w), (b0, b), (x0, x)):
        for idx in range(arr.size):
            up = arr.copy()
            up.flat[idx] += h
            down = arr.copy()
            down.flat[idx] -= h
            args_up = [up if arr is cand else cand for cand in (w0, b0, x0)]
            args_dn = [down if arr is cand else cand for cand in (w0, b0, x0)]
            fd = (value(*args_up) - value(*args_dn)) / (2 * h)
            assert node.grad.flat[idx] == pytest.approx(fd, rel=1e-6, abs=1e-10)


def test_backward_requires_scalar_on_this_tape():
    tape = ComputationTape()
    vec = tape.leaf(np.ones(3))
    with pytest.raises(ValueError):
        tape.backward(vec)
    other = ComputationTape()
    x = other.leaf(1.0)
    y = other.weighted_squares([x], [1.0])
    with pytest.raises(ValueError):
        tape.backward(y)


def test_backward_visits_each_node_once():
    tape = ComputationTape()
    x = tape.leaf(1.5)
    mid = tape.lincomb([x, x], [1.0, 2.0])  # 3x reuses the same parent twice
    out = tape.weighted_squares([mid], [1.0])  # 9x^2
    tape.backward(out)
    assert x.grad == pytest.approx(27.0, rel=1e-14)
    assert len(tape) == 3


def test_gather_and_interleave():
    tape = ComputationTape()
    a = tape.leaf(2.0)
    b = tape.leaf(5.0)
    vec = tape.gather([a, b], [0.5, 2.0])
    assert np.allclose(vec.value, [1.0, 10.0])
    full = tape.interleave_const(vec, np.array([7.0, 8.0]))
    assert np.allclose(full.value, [1.0, 7.0, 10.0, 8.0])
    out = tape.dot(full, tape.leaf(np.array([1.0, 1.0, 3.0, 1.0])))
    tape.backward(out)
    assert a.grad == pytest.approx(0.5, rel=1e-15)
    assert b.grad == pytest.approx(6.0, rel=1e-15)
