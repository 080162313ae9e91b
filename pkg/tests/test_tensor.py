import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import central_differences, flat_grads, max_rel_error
from ramp.tensor import (
    Adam,
    AdamConfig,
    DenseLayer,
    DimensionError,
    Mlp,
    cross_entropy_logits_grad,
    cross_entropy_loss,
    gradients,
    mse_loss,
    optimizer_step,
    softmax,
)


def one_layer(w, b, act="identity"):
    return Mlp([DenseLayer(np.array(w, float), np.array(b, float), act)])


class TestForward:
    def test_identity(self):
        m = one_layer(np.eye(2), [0, 0])
        np.testing.assert_array_equal(m.forward([1, 2]), [1, 2])

    def test_hand_affine(self):
        m = one_layer([[1, 1], [0, 1]], [0, 1])
        np.testing.assert_array_equal(m.forward([2, 3]), [5, 4])

    def test_relu_clips(self):
        m = one_layer([[-1]], [0], "relu")
        np.testing.assert_array_equal(m.forward([2]), [0])

    def test_dimension_mismatch_names_dims(self):
        m = one_layer(np.eye(2), [0, 0])
        with pytest.raises(DimensionError, match="expected input dim 2"):
            m.forward([1, 2, 3])

    def test_layers_must_chain(self):
        with pytest.raises(DimensionError):
            Mlp([DenseLayer.zeros(3, 4), DenseLayer.zeros(5, 1)])

    def test_pure(self, rng):
        m = Mlp.build([5, 7, 3], rng)
        x = rng.normal(size=5)
        a, b = m.forward(x), m.forward(x)
        assert a.tobytes() == b.tobytes()

    def test_batch_rows_match_single(self, rng):
        m = Mlp.build([4, 6, 2], rng)
        X = rng.normal(size=(5, 4))
        for row, out in zip(X, m.forward(X)):
            np.testing.assert_allclose(m.forward(row), out, rtol=1e-14)

    def test_non_finite_params_rejected(self):
        with pytest.raises(ValueError):
            DenseLayer(np.array([[np.nan]]), np.zeros(1))

    def test_glorot_bounds(self, rng):
        layer = DenseLayer.glorot(10, 6, rng)
        assert np.all(np.abs(layer.weights) <= math.sqrt(6 / 16))
        assert np.all(layer.bias == 0)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax([0, 0, 0]), [1 / 3] * 3, rtol=1e-15)

    def test_log_closed_form(self):
        np.testing.assert_allclose(softmax(np.log([1, 2, 3])), [1 / 6, 2 / 6, 3 / 6], rtol=1e-14)

    def test_stable_for_large_logits(self):
        p = softmax([1000.0, 0.0])
        assert np.all(np.isfinite(p))
        assert p[0] == pytest.approx(1.0) and p[1] == pytest.approx(0.0, abs=1e-300)

    def test_empty(self):
        with pytest.raises(ValueError):
            softmax([])

    @given(arrays(np.float64, st.integers(1, 20), elements=st.floats(-50, 50)))
    def test_probability_vector(self, z):
        p = softmax(z)
        assert abs(p.sum() - 1) < 1e-12
        assert np.all(p > 0) and np.all(p <= 1)


class TestLosses:
    @pytest.mark.parametrize("pred,target,expected", [(3.0, 3.0, 0.0), (2.0, 3.5, 2.25), (0, 1, 1)])
    def test_mse(self, pred, target, expected):
        assert mse_loss(pred, target) == expected

    def test_cross_entropy_confident(self):
        assert cross_entropy_loss([1.0, 0.0], 0) == pytest.approx(0.0, abs=1e-11)

    def test_cross_entropy_half(self):
        assert cross_entropy_loss([0.5, 0.5], 1) == pytest.approx(math.log(2), rel=1e-11)

    def test_cross_entropy_tenth(self):
        assert cross_entropy_loss([0.1, 0.9], 0) == pytest.approx(2.302585092994046, rel=1e-10)

    def test_cross_entropy_bad_bin(self):
        with pytest.raises(IndexError):
            cross_entropy_loss([0.5, 0.5], 2)

    @given(arrays(np.float64, st.integers(2, 10), elements=st.floats(-20, 20)), st.data())
    def test_cross_entropy_non_negative(self, z, data):
        p = softmax(z)
        t = data.draw(st.integers(0, len(p) - 1))
        assert cross_entropy_loss(p, t) >= -1e-11


class TestGradients:
    def test_hand_chain_rule(self):
        m = one_layer([[1.0]], [0.0])

        def loss(out):
            return mse_loss(out[0], 4.0), np.array([2 * (out[0] - 4.0)])

        _, grads = gradients(m, [2.0], loss)
        assert grads[0][0][0, 0] == -8.0
        assert grads[0][1][0] == -4.0

    def test_zero_at_optimum(self, rng):
        m = Mlp.build([3, 4, 1], rng)
        x = rng.normal(size=3)
        target = m.forward(x)[0]
        _, grads = gradients(m, x, lambda out: ((out[0] - target) ** 2, 2 * (out - target)))
        assert all(np.all(g == 0) for pair in grads for g in pair)

    def test_non_scalar_loss_rejected(self, rng):
        m = Mlp.build([2, 2], rng)
        with pytest.raises(ValueError, match="scalar"):
            gradients(m, [1.0, 2.0], lambda out: (out, np.ones_like(out)))

    @pytest.mark.parametrize("seed", range(8))
    def test_finite_differences_mse(self, seed):
        rng = np.random.default_rng(seed)
        m = Mlp.build([4, 6, 5, 1], rng)
        for layer in m.layers:
            layer.bias[:] = rng.normal(scale=0.3, size=layer.bias.shape)
        X = rng.normal(size=(3, 4))
        y = rng.normal(size=3)

        def loss_fn(out):
            err = out[:, 0] - y
            return np.mean(err**2), (2 * err / len(y))[:, None]

        _, grads = gradients(m, X, loss_fn)
        numeric = central_differences(m.parameters(), lambda: loss_fn(m.forward(X))[0])
        assert max_rel_error(flat_grads([grads]), numeric) < 1e-4

    @pytest.mark.parametrize("seed", range(4))
    def test_finite_differences_cross_entropy(self, seed):
        rng = np.random.default_rng(100 + seed)
        m = Mlp.build([3, 8, 5], rng)
        X = rng.normal(size=(4, 3))
        t = rng.integers(0, 5, size=4)

        def loss_fn(out):
            p = softmax(out)
            loss = np.mean([cross_entropy_loss(p[i], t[i]) for i in range(len(t))])
            return loss, cross_entropy_logits_grad(p, t) / len(t)

        _, grads = gradients(m, X, loss_fn)
        numeric = central_differences(m.parameters(), lambda: loss_fn(m.forward(X))[0])
        assert max_rel_error(flat_grads([grads]), numeric) < 1e-4


class TestAdam:
    def test_zero_gradient_no_change(self, rng):
        m = Mlp.build([3, 2], rng)
        before = [p.copy() for p in m.parameters()]
        Adam([m]).step([[(np.zeros((2, 3)), np.zeros(2))]])
        for a, b in zip(before, m.parameters()):
            np.testing.assert_array_equal(a, b)

    def test_first_step_closed_form(self):
        m = one_layer([[1.0]], [0.0])
        new, _ = optimizer_step(m, [(np.array([[1.0]]), np.array([0.0]))], AdamConfig(learning_rate=0.1))
        assert new.layers[0].weights[0, 0] == pytest.approx(1 - 0.1 / (1 + 1e-8), rel=1e-15)
        assert new.layers[0].weights[0, 0] == pytest.approx(0.9, abs=1e-8)
        assert m.layers[0].weights[0, 0] == 1.0

    def test_deterministic(self):
        def run():
            m = one_layer([[1.0, -2.0]], [0.5])
            opt = Adam([m], AdamConfig(0.01))
            g = [(np.array([[0.3, -0.7]]), np.array([0.2]))]
            opt.step([g])
            opt.step([g])
            return np.concatenate([p.ravel() for p in m.parameters()])

        assert run().tobytes() == run().tobytes()

    def test_shape_mismatch(self, rng):
        m = Mlp.build([3, 2], rng)
        with pytest.raises(DimensionError):
            Adam([m]).step([[(np.zeros((3, 2)), np.zeros(2))]])


class TestSerialization:
    def test_round_trip_exact(self, rng):
        m = Mlp.build([5, 9, 3], rng)
        back = Mlp.from_json(m.to_json())
        for a, b in zip(m.parameters(), back.parameters()):
            assert a.tobytes() == b.tobytes()
        assert [l.activation for l in back.layers] == ["relu", "identity"]

    def test_document_shape(self):
        doc = one_layer([[1, 2], [3, 4], [5, 6]], [7, 8, 9], "relu").to_dict()
        assert doc == {"layers": [{"in": 2, "out": 3, "activation": "relu",
                                   "w": [1, 2, 3, 4, 5, 6], "b": [7, 8, 9]}]}

    def test_seventeen_digits_survive(self):
        v = 0.1 + 0.2  # needs 17 significant digits
        m = one_layer([[v]], [1 / 3])
        text = m.to_json()
        assert "0.30000000000000004" in text
        assert Mlp.from_json(text).layers[0].weights[0, 0] == v

    def test_bad_weight_count(self):
        with pytest.raises(DimensionError):
            Mlp.from_dict({"layers": [{"in": 2, "out": 2, "activation": "identity", "w": [1, 2, 3], "b": [0, 0]}]})


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_forward_bit_identical_on_repeat(seed):
    rng = np.random.default_rng(seed)
    m = Mlp.build([3, 4, 2], rng)
    x = rng.normal(size=3)
    assert m.forward(x).tobytes() == m.forward(x).tobytes()
