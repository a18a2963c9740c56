"""What a dynamical model must provide, plus finite-difference filling.

A model exposes the right-hand side ``f(t, x, p, u)`` of ``dx/dt``, an output
map ``c(t, x, p, u)`` and their first and second partial derivatives.  Index
conventions for the second derivatives (``i`` is the component of ``f`` or
``c``)::

    f_xx[i, a, b] = d2 f_i / dx_a dx_b
    f_xp[i, a, k] = d2 f_i / dx_a dp_k
    f_px[i, j, a] = d2 f_i / dp_j dx_a
    f_pp[i, j, k] = d2 f_i / dp_j dp_k

and likewise for ``c``.  The input ``u`` is exogenous: it does not depend on
the initial state or the parameters.
"""
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .errors import FiniteDifferenceError, ModelEvaluationError

FLOW_PARTIALS = ("f", "f_x", "f_p", "f_xx", "f_xp", "f_px", "f_pp")
OUTPUT_PARTIALS = ("c", "c_x", "c_p", "c_xx", "c_xp", "c_px", "c_pp")
_ORDER_COUNT = (1, 3, 7)

DEFAULT_FD_STEP = float(np.finfo(float).eps ** (1.0 / 3.0))


@dataclass(frozen=True)
class ModelDims:
    """State count ``n_states``, parameter count ``n_params``, output count ``n_outputs``."""

    n_states: int
    n_params: int
    n_outputs: int

    def __post_init__(self):
        if self.n_states < 1 or self.n_params < 0 or self.n_outputs < 1:
            raise ValueError(f"invalid model dimensions {self}")

    def shape(self, name):
        """Expected array shape of the derivative called ``name``."""
        n, m, s = self.n_states, self.n_params, self.n_outputs
        lead = n if name.startswith("f") else s
        tail = {
            "": (), "_x": (n,), "_p": (m,), "_xx": (n, n), "_xp": (n, m),
            "_px": (m, n), "_pp": (m, m),
        }[name[1:]]
        return (lead,) + tail


class FlowDerivatives(NamedTuple):
    f: np.ndarray
    f_x: Optional[np.ndarray] = None
    f_p: Optional[np.ndarray] = None
    f_xx: Optional[np.ndarray] = None
    f_xp: Optional[np.ndarray] = None
    f_px: Optional[np.ndarray] = None
    f_pp: Optional[np.ndarray] = None


class OutputDerivatives(NamedTuple):
    c: np.ndarray
    c_x: Optional[np.ndarray] = None
    c_p: Optional[np.ndarray] = None
    c_xx: Optional[np.ndarray] = None
    c_xp: Optional[np.ndarray] = None
    c_px: Optional[np.ndarray] = None
    c_pp: Optional[np.ndarray] = None


class DynamicsModel:
    """Base class for models.

    Subclasses set ``dims`` and override the partials they can supply
    analytically.  ``flow`` and ``output`` bundle the partials needed for a
    given propagation order; override them when several partials share work.

    Optional class attributes used elsewhere:

    ``state_floor``
        Lower bound below which the model clamps its states (reported by the
        integrator when reached).
    ``state_box``, ``param_box``
        ``[(lo, hi), ...]`` plausible ranges, used to draw verification points.
    ``input_box``
        ``(lo, hi)`` plausible input values for verification points.
    ``sampling_period``
        Sample spacing used when verification needs a synthetic record.
    ``param_names``, ``state_names``
        Labels for reports.
    """

    name = "model"
    dims: ModelDims
    state_floor = None
    state_box = None
    param_box = None
    input_box = (-1.0, 1.0)
    sampling_period = 0.1
    param_names = None
    state_names = None

    def f(self, t, x, p, u):
        raise NotImplementedError

    def f_x(self, t, x, p, u):
        raise NotImplementedError

    def f_p(self, t, x, p, u):
        raise NotImplementedError

    def f_xx(self, t, x, p, u):
        raise NotImplementedError

    def f_xp(self, t, x, p, u):
        raise NotImplementedError

    def f_px(self, t, x, p, u):
        raise NotImplementedError

    def f_pp(self, t, x, p, u):
        raise NotImplementedError

    def c(self, t, x, p, u):
        raise NotImplementedError

    def c_x(self, t, x, p, u):
        raise NotImplementedError

    def c_p(self, t, x, p, u):
        raise NotImplementedError

    def c_xx(self, t, x, p, u):
        raise NotImplementedError

    def c_xp(self, t, x, p, u):
        raise NotImplementedError

    def c_px(self, t, x, p, u):
        raise NotImplementedError

    def c_pp(self, t, x, p, u):
        raise NotImplementedError

    def flow(self, t, x, p, u, order=2):
        names = FLOW_PARTIALS[: _ORDER_COUNT[order]]
        return FlowDerivatives(*(getattr(self, k)(t, x, p, u) for k in names))

    def output(self, t, x, p, u, order=2):
        names = OUTPUT_PARTIALS[: _ORDER_COUNT[order]]
        return OutputDerivatives(*(getattr(self, k)(t, x, p, u) for k in names))

    def output_batch(self, t, X, p, U, order=2):
        """Output partials at many samples; every field gains a leading sample axis."""
        count = _ORDER_COUNT[order]
        if len(t) == 0:
            fields = [np.zeros((0,) + self.dims.shape(k)) for k in OUTPUT_PARTIALS[:count]]
        else:
            rows = [self.output(t[h], X[h], p, U[h], order) for h in range(len(t))]
            fields = [np.stack([np.asarray(r[i], dtype=float) for r in rows])
                      for i in range(count)]
        return OutputDerivatives(*fields)

    def native_kernel(self):
        """A compiled flow evaluator, or None to integrate through Python callbacks."""
        return None

    @classmethod
    def provides(cls, name):
        """True when ``name`` is overridden (analytically supplied) by the class."""
        return getattr(cls, name) is not getattr(DynamicsModel, name)


def check_derivatives(dims, derivs, kind="flow"):
    """Validate the shapes of a ``FlowDerivatives``/``OutputDerivatives`` bundle."""
    names = FLOW_PARTIALS if kind == "flow" else OUTPUT_PARTIALS
    for name, val in zip(names, derivs):
        if val is None:
            continue
        shape = np.shape(val)
        if shape != dims.shape(name):
            raise ModelEvaluationError(
                f"{name} has shape {shape}, expected {dims.shape(name)}")
    return derivs


class InputSignal:
    """Sampled exogenous input held constant between samples (zero-order hold)."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.times.ndim != 1 or self.values.shape != self.times.shape:
            raise ValueError("input times and values must be 1-D of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("input sample times must be strictly increasing")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("input values must be finite")

    @classmethod
    def constant(cls, value, t0, t1):
        return cls([t0, t1], [value, value])

    def value(self, t):
        return float(self.hold(np.atleast_1d(t))[0])

    def hold(self, t):
        """Held input value at each time in ``t``."""
        t = np.asarray(t, dtype=float)
        if len(self.times) == 0:
            raise ValueError("empty input signal")
        if t.size and (t.min() < self.times[0] or t.max() > self.times[-1]):
            raise ValueError(
                f"times [{t.min()}, {t.max()}] outside input range "
                f"[{self.times[0]}, {self.times[-1]}]")
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.values[idx]


class FiniteDifferenceModel(DynamicsModel):
    """Fill partials a model does not supply with central differences.

    Built by :func:`fd_fill_derivatives`.  First derivatives difference ``f``
    and ``c``; second derivatives difference the (analytic or FD) first
    derivatives.
    """

    def __init__(self, base, step=None, replace=(), typical_x=None, typical_p=None):
        if not (base.provides("f") and base.provides("c")):
            raise TypeError("model must provide at least f and c")
        self.base = base
        self.dims = base.dims
        self.name = f"fd({base.name})"
        self.state_floor = base.state_floor
        self.state_box = base.state_box
        self.param_box = base.param_box
        self.param_names = base.param_names
        self.state_names = base.state_names
        self.step = DEFAULT_FD_STEP if step is None else float(step)
        if self.step <= 0:
            raise ValueError("finite-difference step must be positive")
        n, m = self.dims.n_states, self.dims.n_params
        self.typical = {
            "x": np.ones(n) if typical_x is None else np.abs(np.asarray(typical_x, float)),
            "p": np.ones(m) if typical_p is None else np.abs(np.asarray(typical_p, float)),
        }
        if replace == "all":
            replace = FLOW_PARTIALS[1:] + OUTPUT_PARTIALS[1:]
        self.replace = frozenset(replace)

    def _use_base(self, name):
        return name not in self.replace and self.base.provides(name)

    def _diff(self, func, name, wrt, t, x, p, u):
        x = np.asarray(x, dtype=float)
        p = np.asarray(p, dtype=float)
        v = x if wrt == "x" else p
        cols = []
        for i in range(len(v)):
            h = self.step * max(self.typical[wrt][i], abs(v[i]))
            vp = v.copy()
            vm = v.copy()
            vp[i] += h
            vm[i] -= h
            if wrt == "x":
                hi = np.asarray(func(t, vp, p, u), dtype=float)
                lo = np.asarray(func(t, vm, p, u), dtype=float)
            else:
                hi = np.asarray(func(t, x, vp, u), dtype=float)
                lo = np.asarray(func(t, x, vm, u), dtype=float)
            if not (np.all(np.isfinite(hi)) and np.all(np.isfinite(lo))):
                raise FiniteDifferenceError(
                    f"non-finite value computing {name} while perturbing {wrt}[{i}]",
                    coordinate=(wrt, i))
            cols.append((hi - lo) / (vp[i] - vm[i]))
        shape = self.dims.shape(name)
        if not cols:
            return np.zeros(shape)
        return np.stack(cols, axis=-1).reshape(shape)

    def _partial(self, name, t, x, p, u):
        if self._use_base(name):
            return getattr(self.base, name)(t, x, p, u)
        head, wrt = name[0], name[2:]
        parent = head if len(wrt) == 1 else f"{head}_{wrt[0]}"
        return self._diff(getattr(self, parent), name, wrt[-1], t, x, p, u)

    def f(self, t, x, p, u):
        return self.base.f(t, x, p, u)

    def c(self, t, x, p, u):
        return self.base.c(t, x, p, u)

    def f_x(self, t, x, p, u):
        return self._partial("f_x", t, x, p, u)

    def f_p(self, t, x, p, u):
        return self._partial("f_p", t, x, p, u)

    def f_xx(self, t, x, p, u):
        return self._partial("f_xx", t, x, p, u)

    def f_xp(self, t, x, p, u):
        return self._partial("f_xp", t, x, p, u)

    def f_px(self, t, x, p, u):
        return self._partial("f_px", t, x, p, u)

    def f_pp(self, t, x, p, u):
        return self._partial("f_pp", t, x, p, u)

    def c_x(self, t, x, p, u):
        return self._partial("c_x", t, x, p, u)

    def c_p(self, t, x, p, u):
        return self._partial("c_p", t, x, p, u)

    def c_xx(self, t, x, p, u):
        return self._partial("c_xx", t, x, p, u)

    def c_xp(self, t, x, p, u):
        return self._partial("c_xp", t, x, p, u)

    def c_px(self, t, x, p, u):
        return self._partial("c_px", t, x, p, u)

    def c_pp(self, t, x, p, u):
        return self._partial("c_pp", t, x, p, u)


def fd_fill_derivatives(model, step=None, replace=(), typical_x=None, typical_p=None):
    """Wrap ``model`` so every partial it lacks is computed by central differences.

    Parameters
    ----------
    model : DynamicsModel
        Must provide at least ``f`` and ``c``.
    step : float, optional
        Relative step; coordinate ``v_i`` is perturbed by
        ``step * max(typical_i, |v_i|)``.  Defaults to ``eps ** (1/3)``.
    replace : iterable of str or "all"
        Partials to difference even though the model supplies them.
    typical_x, typical_p : array_like, optional
        Typical coordinate magnitudes (default 1) bounding the step from below.

    Raises
    ------
    FiniteDifferenceError
        When an evaluation inside a stencil is not finite; ``coordinate``
        names the perturbed coordinate.
    """
    return FiniteDifferenceModel(model, step=step, replace=replace,
                                 typical_x=typical_x, typical_p=typical_p)


_REGISTRY = {}


def register_model(name):
    """Class decorator registering a model factory under ``name`` for the CLI."""
    def deco(cls):
        _REGISTRY[name] = cls
        return cls
    return deco


def get_model(name, **options):
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown model {name!r}; known: {sorted(_REGISTRY)}") from None
    return cls(**options)


def registered_models():
    return sorted(_REGISTRY)
