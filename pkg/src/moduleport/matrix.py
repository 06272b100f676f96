"""Dense float64 matrix primitives: products, column stats, Pearson correlation.

A "matrix" throughout the toolkit is a 2-D ``numpy.ndarray`` of float64.
All public operations validate shapes, never mutate their inputs, and
return freshly allocated arrays, so results are safe to share across
threads.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeMismatchError, TooFewSamplesError

Matrix = np.ndarray


def as_matrix(values, *, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-D float64 array, rejecting anything else."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeMismatchError(f"{name} must be 2-D, got ndim={m.ndim}")
    if m.shape[0] < 1 or m.shape[1] < 1:
        raise ShapeMismatchError(f"{name} must have at least one row and column, got {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite values")
    return m


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """Matrix product with an explicit inner-dimension check."""
    a = as_matrix(a, name="a")
    b = as_matrix(b, name="b")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(
            f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}: "
            f"inner dimensions {a.shape[1]} and {b.shape[0]} differ"
        )
    return a @ b


def column_stats(m: Matrix) -> tuple[np.ndarray, np.ndarray]:
    """Per-column mean and population (1/N) standard deviation.

    Requires at least two rows; a single observation has no spread to
    measure.
    """
    m = as_matrix(m)
    if m.shape[0] < 2:
        raise TooFewSamplesError(f"need at least 2 rows for column stats, got {m.shape[0]}")
    means = m.mean(axis=0)
    stds = np.sqrt(np.mean((m - means) ** 2, axis=0))
    return means, stds


def pearson_correlation(xs: Matrix, xt: Matrix) -> Matrix:
    """Cross-correlation matrix between the columns of two sample sets.

    ``xs`` and ``xt`` hold one sample per row, matched row-for-row.
    Entry (i, j) of the result is the Pearson coefficient between column
    i of ``xs`` and column j of ``xt``. Columns with zero variance
    correlate with everything at 0 by convention, so degenerate
    dimensions are never preferentially matched downstream. Output is
    clamped to [-1, 1].
    """
    xs = as_matrix(xs, name="xs")
    xt = as_matrix(xt, name="xt")
    if xs.shape[0] != xt.shape[0]:
        raise ShapeMismatchError(
            f"sample counts differ: xs has {xs.shape[0]} rows, xt has {xt.shape[0]}"
        )
    if xs.shape[0] < 2:
        raise TooFewSamplesError(f"need at least 2 matched samples, got {xs.shape[0]}")

    n = xs.shape[0]
    # Two-pass: center first, then accumulate products, for stability.
    xs_c = xs - xs.mean(axis=0)
    xt_c = xt - xt.mean(axis=0)
    std_s = np.sqrt(np.mean(xs_c**2, axis=0))
    std_t = np.sqrt(np.mean(xt_c**2, axis=0))

    cov = (xs_c.T @ xt_c) / n
    denom = np.outer(std_s, std_t)
    with np.errstate(invalid="ignore", divide="ignore"):
        c = np.where(denom > 0.0, cov / np.where(denom > 0.0, denom, 1.0), 0.0)
    return np.clip(c, -1.0, 1.0)
