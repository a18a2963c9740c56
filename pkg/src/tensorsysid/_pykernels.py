"""Pure numpy implementation of the hot kernels.

Same call signatures as the compiled ``_kernels`` extension; used when the
extension is unavailable or ``TENSORSYSID_BACKEND=python`` is set.
"""
import numpy as np

from ._layout import block_slices

NAME = "python"


def mat_mul(A, B):
    return A @ B


def contract_last2(T, B, C):
    # R_ijk = T_imn B_mj C_nk
    return np.einsum("imn,mj,nk->ijk", T, B, C)


def contract_first(A, T):
    # R_ijk = A_im T_mjk
    a = A.shape[0]
    m, j, k = T.shape
    return (A @ T.reshape(m, j * k)).reshape(a, j, k)


def augmented_rhs(n, m, order, f, fx, fp, fxx, fxp, fpx, fpp, y, out):
    """Write the time derivative of the flat augmented state ``y`` into ``out``."""
    sl = block_slices(n, m, order)
    out[:n] = f
    if order < 1:
        return out
    phi = y[sl["phi"][0]].reshape(n, n)
    theta = y[sl["theta"][0]].reshape(n, m)
    out[sl["phi"][0]] = (fx @ phi).ravel()
    out[sl["theta"][0]] = (fx @ theta + fp).ravel()
    if order < 2:
        return out

    phi1 = y[sl["phi1"][0]].reshape(n, n, n)
    theta1 = y[sl["theta1"][0]].reshape(n, m, m)
    chi1 = y[sl["chi1"][0]].reshape(n, n, m)
    chi2 = y[sl["chi2"][0]].reshape(n, m, n)

    # fxx contracted on its last index, shared by several blocks
    fxx_phi = (fxx.reshape(n * n, n) @ phi).reshape(n, n, n)      # s_imk = fxx_imb phi_bk
    fxx_theta = (fxx.reshape(n * n, n) @ theta).reshape(n, n, m)  # s_imk = fxx_imb theta_bk

    d_phi1 = np.einsum("mj,imk->ijk", phi, fxx_phi) + contract_first(fx, phi1)
    d_theta1 = (
        np.einsum("mj,imk->ijk", theta, fxx_theta)
        + (fpx.reshape(n * m, n) @ theta).reshape(n, m, m)
        + np.einsum("mj,imk->ijk", theta, fxp)
        + contract_first(fx, theta1)
        + fpp
    )
    d_chi1 = (
        np.einsum("mj,imk->ijk", phi, fxx_theta)
        + np.einsum("mj,imk->ijk", phi, fxp)
        + contract_first(fx, chi1)
    )
    d_chi2 = (
        np.einsum("mj,imk->ijk", theta, fxx_phi)
        + contract_first(fx, chi2)
        + (fpx.reshape(n * m, n) @ phi).reshape(n, m, n)
    )
    out[sl["phi1"][0]] = d_phi1.ravel()
    out[sl["theta1"][0]] = d_theta1.ravel()
    out[sl["chi1"][0]] = d_chi1.ravel()
    out[sl["chi2"][0]] = d_chi2.ravel()
    return out
