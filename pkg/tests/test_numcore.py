import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fscilbench.errors import ShapeError
from fscilbench.numcore import (
    Rng,
    finite_diff_grad,
    l2_normalize_rows,
    matmul,
    softmax,
    softmax_rows,
)


def matmul_naive(a, b):
    """Independent triple-loop oracle for the matrix product."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            acc = 0.0
            for k in range(a.shape[1]):
                acc += a[i, k] * b[k, j]
            out[i, j] = acc
    return out


class TestMatmul:
    def test_identity(self):
        out = matmul([[1, 0], [0, 1]], [[3], [4]])
        np.testing.assert_array_equal(out, [[3], [4]])

    def test_hand_arithmetic(self):
        np.testing.assert_array_equal(matmul([[1, 2]], [[3], [4]]), [[11]])

    def test_against_naive_oracle(self):
        rng = Rng(101)
        a = rng.normal(5, 7)
        b = rng.normal(7, 3)
        got = matmul(a, b)
        want = matmul_naive(a, b)
        np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_random_shapes_against_oracle(self):
        rng = Rng(2024)
        for trial in range(10):
            r, m, c = (int(v) % 6 + 1 for v in rng.choice(50, 3, replace=True))
            a = rng.normal(r, m)
            b = rng.normal(m, c)
            np.testing.assert_allclose(matmul(a, b), matmul_naive(a, b), rtol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(np.zeros((2, 3)), np.zeros((2, 3)))


class TestL2NormalizeRows:
    def test_three_four_five(self):
        np.testing.assert_allclose(l2_normalize_rows([[3.0, 4.0]]), [[0.6, 0.8]])

    def test_zero_row_guarded(self):
        np.testing.assert_array_equal(l2_normalize_rows([[0.0, 0.0]]), [[0.0, 0.0]])

    def test_symmetry(self):
        out = l2_normalize_rows([[1.0, 1.0]])
        np.testing.assert_allclose(out, [[0.70710678, 0.70710678]], atol=1e-8)

    def test_unit_norms(self):
        m = Rng(5).normal(20, 6)
        norms = np.linalg.norm(l2_normalize_rows(m), axis=1)
        np.testing.assert_allclose(norms, 1.0, atol=1e-9)

    def test_idempotent_above_eps(self):
        m = Rng(6).normal(15, 4) + 0.5
        once = l2_normalize_rows(m)
        twice = l2_normalize_rows(once)
        np.testing.assert_allclose(twice, once, atol=1e-12)

    def test_rejects_bad_eps(self):
        with pytest.raises(ValueError):
            l2_normalize_rows([[1.0, 2.0]], eps=0.0)


finite_floats = st.floats(
    min_value=-50, max_value=50, allow_nan=False, allow_infinity=False
)


class TestSoftmax:
    def test_two_zeros(self):
        np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_three_equal(self):
        np.testing.assert_allclose(softmax([1.0, 1.0, 1.0]), [1 / 3] * 3)

    def test_large_logits_no_overflow(self):
        out = softmax([1000.0, 1000.0])
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out, [0.5, 0.5])

    @given(st.lists(finite_floats, min_size=1, max_size=8))
    @settings(max_examples=80, deadline=None)
    def test_positive_and_sums_to_one(self, logits):
        out = softmax(logits)
        assert np.all(out > 0)
        assert abs(out.sum() - 1.0) < 1e-9

    @given(st.lists(finite_floats, min_size=2, max_size=8), finite_floats)
    @settings(max_examples=80, deadline=None)
    def test_shift_invariance(self, logits, shift):
        base = softmax(logits)
        shifted = softmax(np.asarray(logits) + shift)
        np.testing.assert_allclose(shifted, base, atol=1e-9)

    @given(st.lists(finite_floats, min_size=2, max_size=8))
    @settings(max_examples=80, deadline=None)
    def test_order_preserving(self, logits):
        assert int(np.argmax(softmax(logits))) == int(np.argmax(logits))

    def test_rows_matches_vector_form(self):
        m = Rng(3).normal(4, 5)
        rows = softmax_rows(m)
        for i in range(4):
            np.testing.assert_allclose(rows[i], softmax(m[i]), atol=1e-15)


class TestFiniteDiffGrad:
    def test_square(self):
        grad = finite_diff_grad(lambda p: float(p[0] ** 2), np.array([3.0]), 1e-4)
        assert abs(grad[0] - 6.0) < 1e-6

    def test_constant(self):
        grad = finite_diff_grad(lambda p: 7.5, np.arange(4.0), 1e-4)
        np.testing.assert_allclose(grad, 0.0, atol=1e-9)

    def test_linear_form(self):
        w = np.array([2.0, -3.0, 0.5])
        grad = finite_diff_grad(lambda p: float(w @ p), np.zeros(3), 1e-5)
        np.testing.assert_allclose(grad, w, atol=1e-8)

    def test_rejects_bad_h(self):
        with pytest.raises(ValueError):
            finite_diff_grad(lambda p: 0.0, np.zeros(2), 0.0)


class TestRng:
    def test_equal_seeds_bit_identical(self):
        a = Rng(42).normal(10, 10)
        b = Rng(42).normal(10, 10)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(1).normal(4, 4), Rng(2).normal(4, 4))

    def test_split_streams_independent_and_stable(self):
        root = Rng(7)
        child_a = root.split(1).normal(3, 3)
        child_b = root.split(2).normal(3, 3)
        assert not np.array_equal(child_a, child_b)
        np.testing.assert_array_equal(child_a, Rng(7).split(1).normal(3, 3))

    def test_split_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            Rng(0).split(0)
        with pytest.raises(ValueError):
            Rng(0).split(1 << 16)

    def test_permutation_deterministic(self):
        np.testing.assert_array_equal(Rng(9).permutation(20), Rng(9).permutation(20))
