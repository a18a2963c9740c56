"""Propagation of the state together with its transition matrices and tensors.

Alongside ``dx/dt = f`` we integrate

* ``phi    = dx/dx0``          (n x n)
* ``theta  = dx/dp``           (n x m)
* ``phi1   = d2x/dx0 dx0``     (n x n x n)
* ``theta1 = d2x/dp dp``       (n x m x m)
* ``chi1   = d2x/dx0 dp``      (n x n x m), ``chi1[i, j, k]`` with ``j`` over x0, ``k`` over p
* ``chi2   = d2x/dp dx0``      (n x m x n), ``chi2[i, j, k]`` with ``j`` over p, ``k`` over x0

with ``phi(t0) = I`` and every other sensitivity zero at ``t0``.  Initial
states and parameters are independent, so the ``dp/dx0`` coupling terms are
identically zero and are not integrated.

The integrator is classical RK4 with a fixed number of uniform substeps per
sample interval, so output lands exactly on the sample times.  The input is
held at ``u(t_h)`` over the whole interval ``[t_h, t_{h+1})``.
"""
import enum
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _backend
from ._layout import block_shapes, block_slices, blocks_for_order, state_size
from .errors import IntegrationError, ModelEvaluationError
from .model import InputSignal, check_derivatives


class ClampWarning(RuntimeWarning):
    """A model state reached the model's clamp floor during integration."""


class SensitivityOrder(enum.IntEnum):
    """How much of the augmented system to propagate.

    ``STATE`` integrates ``x`` only (cost evaluation); ``FIRST`` adds
    ``phi`` and ``theta`` (gradient); ``SECOND`` adds the rank-3 tensors
    (Hessian).
    """

    STATE = 0
    FIRST = 1
    SECOND = 2


@dataclass
class IntegratorConfig:
    substeps: int = 8
    clamp_eps: float = 1e-12

    def __post_init__(self):
        if int(self.substeps) < 1:
            raise ValueError("substeps must be >= 1")
        if not self.clamp_eps > 0:
            raise ValueError("clamp_eps must be positive")
        self.substeps = int(self.substeps)


@dataclass
class AugmentedState:
    """State and sensitivities at one time; blocks above the order are None."""

    t: float
    x: np.ndarray
    phi: Optional[np.ndarray] = None
    theta: Optional[np.ndarray] = None
    phi1: Optional[np.ndarray] = None
    theta1: Optional[np.ndarray] = None
    chi1: Optional[np.ndarray] = None
    chi2: Optional[np.ndarray] = None

    @property
    def order(self):
        if self.phi1 is not None:
            return SensitivityOrder.SECOND
        if self.phi is not None:
            return SensitivityOrder.FIRST
        return SensitivityOrder.STATE

    def flatten(self):
        return np.concatenate([np.ravel(getattr(self, b))
                               for b in blocks_for_order(self.order)])

    @classmethod
    def unflatten(cls, t, y, n, m, order):
        sl = block_slices(n, m, order)
        return cls(t, **{k: np.array(y[s]).reshape(shape) for k, (s, shape) in sl.items()})


def init_augmented(x0, n_params, t0=0.0, order=SensitivityOrder.SECOND):
    """Augmented state at ``t0``: ``x = x0``, ``phi = I``, everything else zero."""
    x0 = np.array(x0, dtype=float).ravel()
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    n = len(x0)
    shapes = block_shapes(n, n_params)
    blocks = {b: np.zeros(shapes[b]) for b in blocks_for_order(order)}
    blocks["x"] = x0
    if order >= SensitivityOrder.FIRST:
        blocks["phi"] = np.eye(n)
    return AugmentedState(float(t0), **blocks)


def augmented_rhs(model, s, p, u, order=None, backend=None):
    """Time derivative of every block of ``s`` (returned as an AugmentedState)."""
    order = s.order if order is None else SensitivityOrder(order)
    n, m = model.dims.n_states, model.dims.n_params
    kern = _backend.get_kernels(backend)
    derivs = _evaluate_flow(model, s.t, s.x, np.asarray(p, float), u, order)
    y = s.flatten() if order == s.order else AugmentedState(
        s.t, **{b: getattr(s, b) for b in blocks_for_order(order)}).flatten()
    out = np.empty(state_size(n, m, order))
    kern.augmented_rhs(n, m, int(order), *_padded(derivs), y, out)
    return AugmentedState.unflatten(s.t, out, n, m, order)


def _padded(derivs):
    return tuple(derivs) + (None,) * (7 - len(derivs))


def _evaluate_flow(model, t, x, p, u, order):
    try:
        d = model.flow(t, x, p, u, int(order))
    except Exception as exc:
        raise ModelEvaluationError(f"model {model.name!r} failed at t={t:.9g}: {exc}") from exc
    return d


class Trajectory:
    """Augmented states at the requested sample times.

    ``data`` holds one flat augmented state per row; the block properties
    (``x``, ``phi``, ...) are reshaped views with a leading sample axis.
    """

    def __init__(self, times, data, n, m, order, clamp_hits=0):
        self.times = np.asarray(times, dtype=float)
        self.data = data
        self.n = n
        self.m = m
        self.order = SensitivityOrder(order)
        self.clamp_hits = int(clamp_hits)
        self._slices = block_slices(n, m, self.order)

    def __len__(self):
        return len(self.times)

    def __getitem__(self, h):
        return AugmentedState.unflatten(self.times[h], self.data[h], self.n, self.m, self.order)

    def block(self, name):
        if name not in self._slices:
            raise AttributeError(
                f"trajectory of order {self.order.name} has no {name!r} block")
        sl, shape = self._slices[name]
        return self.data[:, sl].reshape((len(self.times),) + shape)

    x = property(lambda self: self.block("x"))
    phi = property(lambda self: self.block("phi"))
    theta = property(lambda self: self.block("theta"))
    phi1 = property(lambda self: self.block("phi1"))
    theta1 = property(lambda self: self.block("theta1"))
    chi1 = property(lambda self: self.block("chi1"))
    chi2 = property(lambda self: self.block("chi2"))


def _as_input(input_signal, sample_times):
    if isinstance(input_signal, InputSignal):
        return input_signal
    if np.isscalar(input_signal):
        t = np.asarray(sample_times, float)
        if len(t) == 0:
            return InputSignal.constant(float(input_signal), 0.0, 1.0)
        return InputSignal.constant(float(input_signal), t[0], max(t[-1], t[0] + 1.0))
    raise TypeError("input must be an InputSignal or a scalar")


def integrate(model, x0, p, input_signal, sample_times,
              order=SensitivityOrder.SECOND, cfg=None, backend=None):
    """Integrate the augmented system and sample it at ``sample_times``.

    Parameters
    ----------
    model : DynamicsModel
    x0, p : array_like
        Initial state (at ``sample_times[0]``) and parameters.
    input_signal : InputSignal or float
        Exogenous input; a scalar means a constant input.
    sample_times : array_like
        Strictly increasing output times; the first one is the initial time.
    order : SensitivityOrder
    cfg : IntegratorConfig, optional
    backend : {"native", "python"}, optional
        Kernel override; by default the import-time selection is used.

    Returns
    -------
    Trajectory

    Raises
    ------
    IntegrationError
        If the augmented state becomes non-finite; carries the failing time,
        interval and substep.
    """
    cfg = cfg or IntegratorConfig()
    order = SensitivityOrder(order)
    times = np.asarray(sample_times, dtype=float)
    x0 = np.asarray(x0, dtype=float).ravel()
    p = np.asarray(p, dtype=float).ravel()
    n, m = model.dims.n_states, model.dims.n_params
    if x0.shape != (n,) or p.shape != (m,):
        raise ValueError(f"x0 {x0.shape} / p {p.shape} do not match model dims {model.dims}")
    if not (np.all(np.isfinite(x0)) and np.all(np.isfinite(p))):
        raise ValueError("x0 and p must be finite")
    if np.any(np.diff(times) <= 0):
        raise ValueError("sample times must be strictly increasing")
    if len(times) == 0:
        return Trajectory(times, np.empty((0, state_size(n, m, order))), n, m, order)
    u_hold = _as_input(input_signal, times).hold(times)

    # shape check once at the module boundary
    check_derivatives(model.dims, _evaluate_flow(model, times[0], x0, p, u_hold[0], order))

    kern = _backend.get_kernels(backend)
    native = model.native_kernel() if kern.NAME == "native" else None
    if native is not None:
        data, hits = kern.integrate_native(native, x0, p, u_hold, times,
                                           cfg.substeps, int(order))
    else:
        data, hits = _integrate_python(model, kern, x0, p, u_hold, times,
                                       cfg.substeps, order)
    if hits:
        warnings.warn(f"{model.name}: state reached the clamp floor "
                      f"{model.state_floor:g} in {hits} evaluations", ClampWarning,
                      stacklevel=2)
    return Trajectory(times, data, n, m, order, clamp_hits=hits)


def _integrate_python(model, kern, x0, p, u_hold, times, substeps, order):
    n, m = model.dims.n_states, model.dims.n_params
    L = state_size(n, m, order)
    y = init_augmented(x0, m, times[0], order).flatten()
    data = np.empty((len(times), L))
    data[0] = y
    floor = model.state_floor
    hits = 0
    k = [np.empty(L) for _ in range(4)]
    coef = (0.0, 0.5, 0.5, 1.0)

    for h in range(len(times) - 1):
        t0 = times[h]
        dt = (times[h + 1] - t0) / substeps
        u = u_hold[h]
        for s in range(substeps):
            t = t0 + s * dt
            for stage in range(4):
                yt = y if stage == 0 else y + (coef[stage] * dt) * k[stage - 1]
                if floor is not None and np.any(yt[:n] < floor):
                    hits += 1
                d = _evaluate_flow(model, t + coef[stage] * dt, yt[:n], p, u, order)
                kern.augmented_rhs(n, m, int(order), *_padded(d), yt, k[stage])
            y = y + (dt / 6.0) * (k[0] + 2.0 * k[1] + 2.0 * k[2] + k[3])
            if not np.all(np.isfinite(y)):
                raise IntegrationError(
                    f"non-finite augmented state at t={t:.9g} "
                    f"(interval {h}, substep {s})", time=t, interval=h, substep=s)
        data[h + 1] = y
    return data, hits


# ---------------------------------------------------------------------------
# finite-difference validation of the integrated tensors

def decision_scale(values):
    """Per-coordinate scale: ``|v|``, or 1 where ``v`` is exactly zero."""
    v = np.abs(np.asarray(values, dtype=float))
    return np.where(v > 0, v, 1.0)


@dataclass
class TransitionCheck:
    """Worst relative error of each integrated tensor against finite differences.

    Errors are measured on scaled tensors (each differentiated axis multiplied
    by the magnitude of its coordinate) and normalised by the largest of the
    two compared tensors and the first-order magnitude of the problem.
    """

    errors: dict
    times: np.ndarray
    bump: float
    failures: dict = field(default_factory=dict)

    def max_error(self, names=None):
        names = names or list(self.errors)
        return max(self.errors[k] for k in names)


def _rel(a, b, floor):
    diff = float(np.max(np.abs(a - b), initial=0.0))
    ref = max(float(np.max(np.abs(a), initial=0.0)),
              float(np.max(np.abs(b), initial=0.0)), floor)
    return diff / ref if ref > 0 else diff


def fd_transition_check(model, x0, p, input_signal, t_end=None, bump=1e-5,
                        sample_times=None, cfg=None, backend=None):
    """Compare integrated transition tensors with central differences.

    First-order tensors are checked against differences of re-integrated
    states, second-order tensors against differences of re-integrated
    ``phi``/``theta`` under bumped ``x0``/``p``.  Bumps are ``bump`` times the
    coordinate scale.

    ``sample_times`` defaults to the input's sample times up to ``t_end``.
    """
    if bump <= 0:
        raise ValueError("bump must be positive")
    x0 = np.asarray(x0, float)
    p = np.asarray(p, float)
    if sample_times is None:
        if not isinstance(input_signal, InputSignal):
            raise ValueError("sample_times required with a scalar input")
        sample_times = input_signal.times
        if t_end is not None:
            sample_times = sample_times[sample_times <= t_end]
    times = np.asarray(sample_times, float)
    n, m = model.dims.n_states, model.dims.n_params

    ref = integrate(model, x0, p, input_signal, times, SensitivityOrder.SECOND, cfg, backend)
    sx, sp = decision_scale(x0), decision_scale(p)

    failures = {}

    def bumped(kind, i, sign):
        xb, pb = x0.copy(), p.copy()
        if kind == "x":
            xb[i] += sign * bump * sx[i]
        else:
            pb[i] += sign * bump * sp[i]
        try:
            return integrate(model, xb, pb, input_signal, times,
                             SensitivityOrder.FIRST, cfg, backend)
        except Exception as exc:  # recorded per coordinate
            failures[(kind, i, sign)] = str(exc)
            return None

    P1 = len(times)
    fd = {
        "phi": np.zeros((P1, n, n)), "theta": np.zeros((P1, n, m)),
        "phi1": np.zeros((P1, n, n, n)), "theta1": np.zeros((P1, n, m, m)),
        "chi1": np.zeros((P1, n, n, m)), "chi2": np.zeros((P1, n, m, n)),
    }
    for kind, count, scale in (("x", n, sx), ("p", m, sp)):
        for i in range(count):
            hi, lo = bumped(kind, i, +1), bumped(kind, i, -1)
            if hi is None or lo is None:
                continue
            # differences taken directly in scaled units
            dx = (hi.x - lo.x) / (2 * bump)
            dphi = (hi.phi - lo.phi) / (2 * bump)
            dth = (hi.theta - lo.theta) / (2 * bump)
            if kind == "x":
                fd["phi"][:, :, i] = dx
                fd["phi1"][:, :, :, i] = dphi * sx[None, None, :]
                fd["chi2"][:, :, :, i] = dth * sp[None, None, :]
            else:
                fd["theta"][:, :, i] = dx
                fd["chi1"][:, :, :, i] = dphi * sx[None, None, :]
                fd["theta1"][:, :, :, i] = dth * sp[None, None, :]

    an = {
        "phi": ref.phi * sx, "theta": ref.theta * sp,
        "phi1": ref.phi1 * sx[:, None] * sx, "theta1": ref.theta1 * sp[:, None] * sp,
        "chi1": ref.chi1 * sx[:, None] * sp, "chi2": ref.chi2 * sp[:, None] * sx,
    }
    floor = max(float(np.max(np.abs(ref.x), initial=0.0)),
                float(np.max(np.abs(an["phi"]), initial=0.0)),
                float(np.max(np.abs(an["theta"]), initial=0.0)))
    errors = {k: (float("inf") if failures else _rel(an[k], fd[k], floor)) for k in an}
    return TransitionCheck(errors=errors, times=times, bump=bump, failures=failures)
