"""Output-error cost with analytic gradient and Hessian.

With residuals ``r_h = y_obs(t_h) - c(x(t_h), p)`` the cost is
``J = sum_h r_h . r_h``.  Writing ``Yx = C_x phi`` and
``Yp = C_x theta + C_p`` for the output sensitivities, the gradient is
``-2 sum r Y`` and each Hessian block is a Gauss-Newton term ``2 sum Y^T Y``
minus twice the residual-weighted second derivative of the output, which
brings in ``phi1``, ``theta1``, ``chi1``, ``chi2`` and the second partials
of ``c``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .sensitivity import SensitivityOrder


@dataclass
class CostReport:
    J: float
    residuals: np.ndarray
    grad_x0: np.ndarray = None
    grad_p: np.ndarray = None
    H_x0x0: np.ndarray = None
    H_x0p: np.ndarray = None
    H_px0: np.ndarray = None
    H_pp: np.ndarray = None

    @property
    def gradient(self):
        return np.concatenate([self.grad_x0, self.grad_p])

    @property
    def hessian(self):
        return np.block([[self.H_x0x0, self.H_x0p], [self.H_px0, self.H_pp]])


def _check(traj, model, dataset):
    if len(traj) != len(dataset) or not np.array_equal(traj.times, dataset.times):
        raise DimensionError("trajectory times differ from dataset sample times")
    if dataset.n_outputs != model.dims.n_outputs:
        raise DimensionError(
            f"dataset has {dataset.n_outputs} outputs, model {model.dims.n_outputs}")


def _outputs(traj, model, p, dataset, order):
    return model.output_batch(dataset.times, traj.x, np.asarray(p, float),
                              dataset.inputs, order)


def simulate_outputs(traj, model, p, dataset):
    """Model outputs ``c(x(t_h), p)`` at the dataset's samples, shape ``(P+1, S)``."""
    _check(traj, model, dataset)
    return _outputs(traj, model, p, dataset, 0).c


def evaluate_cost(traj, model, p, dataset):
    """Return ``(J, residuals)``."""
    r = dataset.outputs - simulate_outputs(traj, model, p, dataset)
    return float(np.sum(r * r)), r


def _first_order_terms(traj, out, r):
    Yx = np.einsum("hgi,hij->hgj", out.c_x, traj.phi)
    Yp = np.einsum("hgi,hij->hgj", out.c_x, traj.theta) + out.c_p
    gx = -2.0 * np.einsum("hg,hgj->j", r, Yx)
    gp = -2.0 * np.einsum("hg,hgj->j", r, Yp)
    return Yx, Yp, gx, gp


def gradient(traj, model, p, dataset):
    """Return ``(dJ/dx0, dJ/dp)``; needs a first- or second-order trajectory."""
    _check(traj, model, dataset)
    if traj.order < SensitivityOrder.FIRST:
        raise ValueError("gradient needs a trajectory with first-order sensitivities")
    out = _outputs(traj, model, p, dataset, 1)
    r = dataset.outputs - out.c
    _, _, gx, gp = _first_order_terms(traj, out, r)
    return gx, gp


def _hessian_blocks(traj, out, r, Yx, Yp):
    phi, th = traj.phi, traj.theta
    # fold residuals into the output partials first
    rc = np.einsum("hg,hgi->hi", r, out.c_x)
    rcxx = np.einsum("hg,hgim->him", r, out.c_xx)
    rcxp = np.einsum("hg,hgik->hik", r, out.c_xp)
    rcpx = np.einsum("hg,hgjm->hjm", r, out.c_px)
    rcpp = np.einsum("hg,hgjk->jk", r, out.c_pp)

    def pull(A, B, C):
        # sum_h sum_{i,m} A_him B_hij C_hmk
        return np.einsum("hij,him,hmk->jk", B, A, C, optimize=True)

    curv_xx = np.einsum("hi,hijk->jk", rc, traj.phi1) + pull(rcxx, phi, phi)
    curv_xp = (np.einsum("hi,hijk->jk", rc, traj.chi1)
               + np.einsum("hik,hij->jk", rcxp, phi)
               + pull(rcxx, phi, th))
    curv_px = (np.einsum("hi,hijk->jk", rc, traj.chi2)
               + pull(rcxx, th, phi)
               + np.einsum("hjm,hmk->jk", rcpx, phi))
    curv_pp = (pull(rcxx, th, th)
               + np.einsum("hik,hij->jk", rcxp, th)
               + np.einsum("hi,hijk->jk", rc, traj.theta1)
               + rcpp
               + np.einsum("hjm,hmk->jk", rcpx, th))

    Hxx = 2.0 * np.einsum("hgj,hgk->jk", Yx, Yx) - 2.0 * curv_xx
    Hxp = 2.0 * np.einsum("hgj,hgk->jk", Yx, Yp) - 2.0 * curv_xp
    Hpx = 2.0 * np.einsum("hgj,hgk->jk", Yp, Yx) - 2.0 * curv_px
    Hpp = 2.0 * np.einsum("hgj,hgk->jk", Yp, Yp) - 2.0 * curv_pp
    return Hxx, Hxp, Hpx, Hpp


def hessian(traj, model, p, dataset):
    """Return ``(H_x0x0, H_x0p, H_px0, H_pp)``; needs a second-order trajectory.

    ``H_x0p[j, k] = d2J / dx0_j dp_k`` and ``H_px0[j, k] = d2J / dp_j dx0_k``
    are assembled independently (from ``chi1`` and ``chi2``), so their
    transpose agreement is a consistency check rather than an identity.
    """
    _check(traj, model, dataset)
    if traj.order < SensitivityOrder.SECOND:
        raise ValueError("Hessian needs a trajectory with second-order tensors")
    out = _outputs(traj, model, p, dataset, 2)
    r = dataset.outputs - out.c
    Yx, Yp, _, _ = _first_order_terms(traj, out, r)
    return _hessian_blocks(traj, out, r, Yx, Yp)


def cost_report(traj, model, p, dataset):
    """Cost plus as many derivatives as the trajectory's order allows."""
    _check(traj, model, dataset)
    order = int(traj.order)
    out = _outputs(traj, model, p, dataset, order)
    r = dataset.outputs - out.c
    rep = CostReport(J=float(np.sum(r * r)), residuals=r)
    if order >= 1:
        Yx, Yp, rep.grad_x0, rep.grad_p = _first_order_terms(traj, out, r)
    if order >= 2:
        rep.H_x0x0, rep.H_x0p, rep.H_px0, rep.H_pp = _hessian_blocks(traj, out, r, Yx, Yp)
    return rep


def gof(y_obs, y_sim):
    """Goodness of fit ``1 - ||y_obs - y_sim|| / ||y_obs - mean(y_obs)||``.

    Norms are Euclidean over all samples and outputs; the mean is taken per
    output channel.  1 is a perfect match, 0 is no better than the mean.
    """
    y_obs = np.asarray(y_obs, float)
    y_sim = np.asarray(y_sim, float)
    if y_obs.shape != y_sim.shape:
        raise DimensionError(f"observed {y_obs.shape} vs simulated {y_sim.shape}")
    den = np.linalg.norm(y_obs - y_obs.mean(axis=0))
    if den == 0.0:
        raise ValueError("observations are constant; goodness of fit is undefined")
    return float(1.0 - np.linalg.norm(y_obs - y_sim) / den)
