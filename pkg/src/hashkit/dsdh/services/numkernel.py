"""
Dense float64 numeric kernel shared by every other service.

Matrices are C-ordered (row-major) ``float64`` numpy arrays. Shape errors are
programmer errors and are reported with both shapes.
"""

import math
from typing import Union

import numpy as np
import numpy.typing as npt
from scipy.linalg import cho_solve
from scipy.linalg.lapack import dpotrf

from src.hashkit.dsdh.exceptions import NotPositiveDefiniteError, ShapeError

Matrix = npt.NDArray[np.float64]


def as_matrix(values: npt.ArrayLike) -> Matrix:
    """
    Coerce array-like input to a contiguous 2-D float64 matrix.

    Args:
        values (ArrayLike): Nested sequences or an ndarray.

    Returns:
        Matrix: A row-major float64 copy (or view when already conforming).
    """
    matrix = np.ascontiguousarray(values, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2:
        raise ShapeError("Expected a 2-D matrix", matrix.shape)
    return matrix


def matmul(a: Matrix, b: Matrix) -> Matrix:
    """
    Standard matrix product.

    Args:
        a (Matrix): Left operand, m x k.
        b (Matrix): Right operand, k x n.

    Returns:
        Matrix: The m x n product.
    """
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError("Cannot multiply", a.shape, b.shape)
    return np.ascontiguousarray(a @ b, dtype=np.float64)


def solve_spd(a: Matrix, b: Matrix) -> Matrix:
    """
    Solve a x = b for a symmetric positive definite a via Cholesky.

    Args:
        a (Matrix): Square SPD matrix, n x n.
        b (Matrix): Right-hand side, n x m (a vector is treated as n x 1).

    Returns:
        Matrix: The solution x with the shape of b.

    Raises:
        NotPositiveDefiniteError: When the factorization meets a non-positive
            pivot; ``pivot`` is the zero-based index of that pivot.
    """
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError("Expected a square matrix", a.shape)
    if b.shape[0] != a.shape[0]:
        raise ShapeError("Right-hand side rows do not match", a.shape, b.shape)

    factor, info = dpotrf(np.asarray(a, dtype=np.float64), lower=0, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(int(info) - 1)
    if info < 0:
        raise ValueError(f"Illegal argument {-info} passed to dpotrf")

    solution = cho_solve((factor, False), np.asarray(b, dtype=np.float64))
    return np.ascontiguousarray(solution, dtype=np.float64)


def sigmoid(x: float) -> float:
    """
    Logistic sigmoid computed from exp(-|x|) only, so it never overflows.

    Args:
        x (float): Any finite value.

    Returns:
        float: A value in (0, 1) (saturating to exactly 1.0 or a subnormal).
    """
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def sigmoid_array(x: Union[Matrix, npt.ArrayLike]) -> Matrix:
    """Vectorised counterpart of :func:`sigmoid`."""
    values = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(values))
    return np.where(values >= 0.0, 1.0 / (1.0 + z), z / (1.0 + z))


def log1pexp(x: Union[Matrix, npt.ArrayLike]) -> Matrix:
    """
    Overflow-safe log(1 + e^x) = max(x, 0) + log1p(e^-|x|).

    Args:
        x (ArrayLike): Real values.

    Returns:
        Matrix: log(1 + e^x) elementwise.
    """
    values = np.asarray(x, dtype=np.float64)
    return np.maximum(values, 0.0) + np.log1p(np.exp(-np.abs(values)))
