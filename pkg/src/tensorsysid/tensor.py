"""Dense matrices and rank-3 tensors for small state/parameter counts.

Matrices are 2-D and rank-3 tensors 3-D float64 numpy arrays in row-major
(C) order, so ``T.ravel()`` gives the lexicographic ``(i, j, k)`` layout used
everywhere else (flat augmented state, serialized reports).
"""
import numpy as np

from ._backend import get_kernels
from .errors import DimensionError


def _as(arr, ndim, name):
    a = np.ascontiguousarray(arr, dtype=np.float64)
    if a.ndim != ndim:
        raise DimensionError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def mat_mul(A, B, backend=None):
    """Matrix product ``C_ij = sum_m A_im B_mj``."""
    A = _as(A, 2, "A")
    B = _as(B, 2, "B")
    if A.shape[1] != B.shape[0]:
        raise DimensionError(f"cannot multiply {A.shape} by {B.shape}")
    return get_kernels(backend).mat_mul(A, B)


def contract_last2(T, B, C, backend=None):
    """``R_ijk = sum_{m,n} T_imn B_mj C_nk``.

    This is how a second derivative of the dynamics is pulled back through two
    first-order transition matrices.
    """
    T = _as(T, 3, "T")
    B = _as(B, 2, "B")
    C = _as(C, 2, "C")
    if T.shape[1] != B.shape[0] or T.shape[2] != C.shape[0]:
        raise DimensionError(
            f"cannot contract tensor {T.shape} with {B.shape} and {C.shape}")
    return get_kernels(backend).contract_last2(T, B, C)


def contract_first(A, T, backend=None):
    """``R_ijk = sum_m A_im T_mjk``."""
    A = _as(A, 2, "A")
    T = _as(T, 3, "T")
    if A.shape[1] != T.shape[0]:
        raise DimensionError(f"cannot contract matrix {A.shape} with tensor {T.shape}")
    return get_kernels(backend).contract_first(A, T)
