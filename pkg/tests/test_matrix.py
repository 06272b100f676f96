import numpy as np
import pytest

from moduleport.errors import ShapeMismatchError, TooFewSamplesError
from moduleport.matrix import column_stats, matmul, pearson_correlation


def pearson_by_definition(xs, xt):
    """Independent oracle: per-entry textbook Pearson with explicit loops."""
    xs, xt = np.asarray(xs, float), np.asarray(xt, float)
    n = xs.shape[0]
    out = np.zeros((xs.shape[1], xt.shape[1]))
    for i in range(xs.shape[1]):
        for j in range(xt.shape[1]):
            a = xs[:, i] - xs[:, i].mean()
            b = xt[:, j] - xt[:, j].mean()
            denom = np.sqrt((a**2).sum()) * np.sqrt((b**2).sum())
            out[i, j] = 0.0 if denom == 0 else (a * b).sum() / denom
    return out


class TestMatmul:
    def test_identity(self):
        m = np.arange(9.0).reshape(3, 3) + 1
        assert np.array_equal(matmul(np.eye(3), m), m)

    def test_hand_product(self):
        out = matmul([[1.0, 2.0], [3.0, 4.0]], [[5.0], [6.0]])
        assert np.array_equal(out, [[17.0], [39.0]])

    def test_dimension_mismatch_names_shapes(self):
        with pytest.raises(ShapeMismatchError, match="2x3"):
            matmul(np.ones((2, 3)), np.ones((2, 3)))


class TestColumnStats:
    def test_hand_values(self):
        means, stds = column_stats(np.array([[1.0], [2.0], [3.0]]))
        assert means[0] == pytest.approx(2.0)
        assert stds[0] == pytest.approx(np.sqrt(2.0 / 3.0))

    def test_constant_column(self):
        means, stds = column_stats(np.array([[5.0], [5.0], [5.0]]))
        assert means[0] == 5.0 and stds[0] == 0.0

    def test_symmetric_column(self):
        means, stds = column_stats(np.array([[-1.0], [1.0]]))
        assert means[0] == 0.0 and stds[0] == 1.0

    def test_too_few_rows(self):
        with pytest.raises(TooFewSamplesError):
            column_stats(np.ones((1, 3)))


class TestPearson:
    def test_self_correlation(self):
        col = np.array([[1.0], [2.0], [3.0], [4.0]])
        assert pearson_correlation(col, col)[0, 0] == pytest.approx(1.0)

    def test_anti_correlation(self):
        xs = np.array([[1.0], [2.0], [3.0]])
        xt = np.array([[6.0], [4.0], [2.0]])
        assert pearson_correlation(xs, xt)[0, 0] == pytest.approx(-1.0)

    def test_hand_value(self):
        xs = np.array([[1.0], [2.0], [3.0], [4.0]])
        xt = np.array([[1.0], [3.0], [2.0], [4.0]])
        # covariance sum 4.0 over sqrt(5*5) by the textbook formula
        assert pearson_correlation(xs, xt)[0, 0] == pytest.approx(0.8)

    def test_zero_variance_convention(self):
        xs = np.array([[1.0], [2.0], [3.0]])
        xt = np.array([[7.0], [7.0], [7.0]])
        assert pearson_correlation(xs, xt)[0, 0] == 0.0

    def test_row_count_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            pearson_correlation(np.ones((3, 2)), np.ones((4, 2)))

    def test_too_few_samples(self):
        with pytest.raises(TooFewSamplesError):
            pearson_correlation(np.ones((1, 2)), np.ones((1, 2)))

    def test_matches_definition(self):
        rng = np.random.default_rng(1)
        xs = rng.normal(size=(64, 16))
        xt = rng.normal(size=(64, 24))
        c = pearson_correlation(xs, xt)
        assert c.shape == (16, 24)
        assert np.max(np.abs(c - pearson_by_definition(xs, xt))) < 1e-12

    def test_diagonal_is_one(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(50, 8))
        assert np.max(np.abs(np.diag(pearson_correlation(x, x)) - 1.0)) < 1e-12

    def test_affine_invariance(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(40, 6))
        y = rng.normal(size=(40, 5))
        scales = rng.uniform(0.5, 3.0, 6)
        shifts = rng.normal(size=6)
        c1 = pearson_correlation(x, y)
        c2 = pearson_correlation(x * scales + shifts, y)
        assert np.max(np.abs(c1 - c2)) < 1e-12

    def test_transpose_symmetry(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 7))
        y = rng.normal(size=(30, 9))
        assert np.max(np.abs(pearson_correlation(x, y) - pearson_correlation(y, x).T)) < 1e-12

    def test_bounds(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(10, 4))
        y = x * 2.0 + rng.normal(size=(10, 4)) * 1e-9
        c = pearson_correlation(x, y)
        assert np.all(c >= -1.0) and np.all(c <= 1.0)
