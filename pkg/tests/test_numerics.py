import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nnclr.errors import RowNormUnderflow
from nnclr.numerics import (
    finite_difference_gradient,
    l2_normalize,
    l2_normalize_backward,
    rel_err,
    softmax,
    softmax_cross_entropy,
)


class TestL2Normalize:
    def test_three_four_five(self):
        out = l2_normalize(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8]], atol=1e-15)

    def test_unit_rows_unchanged(self):
        x = np.eye(2)
        np.testing.assert_array_equal(l2_normalize(x), x)

    def test_random_rows_unit_norm(self):
        rng = np.random.default_rng(7)
        out = l2_normalize(rng.standard_normal((5, 7)))
        # independent per-row oracle
        for row in out:
            assert abs(math.sqrt(sum(v * v for v in row)) - 1.0) < 1e-12

    def test_underflow_raises(self):
        with pytest.raises(RowNormUnderflow):
            l2_normalize(np.array([[1.0, 0.0], [0.0, 0.0]]))

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=30, deadline=None)
    def test_idempotent(self, seed):
        x = np.random.default_rng(seed).standard_normal((4, 6))
        once = l2_normalize(x)
        assert np.max(np.abs(l2_normalize(once) - once)) < 1e-15

    def test_direction_preserved(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((6, 4))
        out = l2_normalize(x)
        cos = np.sum(out * x, axis=1) / np.linalg.norm(x, axis=1)
        np.testing.assert_allclose(cos, 1.0, atol=1e-12)


class TestSoftmaxCrossEntropy:
    def test_single_class(self):
        loss, grad = softmax_cross_entropy(np.array([[5.0]]), [0])
        assert loss == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(grad, [[0.0]], atol=1e-15)

    def test_uniform(self):
        loss, _ = softmax_cross_entropy(np.zeros((2, 2)), [0, 1])
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_hand_computed(self):
        # per-row: -log(e^1 / (e^1 + e^0)) = log(1 + e^-1)
        loss, _ = softmax_cross_entropy(np.array([[1.0, 0.0], [0.0, 1.0]]), [0, 1])
        assert loss == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(11)
        probs = softmax(rng.standard_normal((8, 5)) * 20)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_grad_matches_fd(self):
        rng = np.random.default_rng(2)
        logits = rng.standard_normal((4, 4))
        labels = np.array([0, 1, 2, 3])
        _, grad = softmax_cross_entropy(logits, labels)
        fd = finite_difference_gradient(
            lambda x: softmax_cross_entropy(x, labels)[0], logits)
        assert rel_err(grad, fd) < 1e-6

    def test_stable_at_large_logits(self):
        loss, grad = softmax_cross_entropy(np.array([[1000.0, 0.0]]), [0])
        assert np.isfinite(loss) and np.all(np.isfinite(grad))


class TestFiniteDifference:
    def test_sum_of_squares(self):
        fd = finite_difference_gradient(lambda x: float(np.sum(x * x)),
                                        np.array([[1.0, 2.0]]))
        np.testing.assert_allclose(fd, [[2.0, 4.0]], atol=1e-6)

    def test_normalize_then_dot(self):
        rng = np.random.default_rng(5)
        x = rng.standard_normal((3, 4))
        c = rng.standard_normal((3, 4))

        def f(v):
            return float(np.sum(l2_normalize(v) * c))

        analytic = l2_normalize_backward(x, c)
        assert rel_err(analytic, finite_difference_gradient(f, x)) < 1e-6


def test_rel_err_metric():
    assert rel_err(np.array([2.0]), np.array([2.0])) == 0.0
    # below 1 the denominator clamps at 1, so it is an absolute error
    assert rel_err(np.array([0.1]), np.array([0.2])) == pytest.approx(0.1)
