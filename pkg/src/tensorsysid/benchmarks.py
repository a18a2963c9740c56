"""Silverbox and two-tank benchmark models with analytic derivatives, and
synthetic data generation for self-contained experiments."""
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import _backend
from .data import Dataset
from .model import DynamicsModel, FlowDerivatives, ModelDims, OutputDerivatives, register_model
from .sensitivity import IntegratorConfig, SensitivityOrder, integrate

SILVERBOX_SAMPLING_PERIOD = 2.0 ** 14 / 1e7
TWOTANK_SAMPLING_PERIOD = 5.0

# initial guesses and final estimates reported for the two benchmarks
SILVERBOX_INITIAL_GUESS = {"ydot0": 0.0, "p": (5.1025e-6, 2.15e-4, 0.968, 3.976)}
SILVERBOX_ESTIMATE = {"ydot0": 5.1112e-9, "p": (5.271e-6, 2.1491e-4, 0.9675, 3.975)}
TWOTANK_INITIAL_GUESS = (0.04, 0.02, 0.02, 0.04)
TWOTANK_ESTIMATE = (0.0418, 0.0235, 0.0221, 0.0590)


class _LinearOutput:
    """Mixin for models whose output is ``C x`` with constant ``C``."""

    C: np.ndarray

    def c(self, t, x, p, u):
        return self.C @ np.asarray(x, float)

    def c_x(self, t, x, p, u):
        return self.C.copy()

    def _zeros(self, name):
        return np.zeros(self.dims.shape(name))

    def c_p(self, t, x, p, u):
        return self._zeros("c_p")

    def c_xx(self, t, x, p, u):
        return self._zeros("c_xx")

    def c_xp(self, t, x, p, u):
        return self._zeros("c_xp")

    def c_px(self, t, x, p, u):
        return self._zeros("c_px")

    def c_pp(self, t, x, p, u):
        return self._zeros("c_pp")

    def output_batch(self, t, X, p, U, order=2):
        P = len(t)
        fields = [np.asarray(X, float).reshape(P, -1) @ self.C.T]
        if order >= 1:
            fields += [np.broadcast_to(self.C, (P,) + self.C.shape),
                       np.zeros((P,) + self.dims.shape("c_p"))]
        if order >= 2:
            fields += [np.zeros((P,) + self.dims.shape(k))
                       for k in ("c_xx", "c_xp", "c_px", "c_pp")]
        return OutputDerivatives(*fields)


@register_model("silverbox")
class SilverboxModel(_LinearOutput, DynamicsModel):
    """Mass, viscous damper and cubic spring driven by ``u``.

    States ``x = (y, dy/dt)``, parameters ``p = (m, d, a, b)``, output ``y``::

        dx1/dt = x2
        dx2/dt = u - (d x2 + a x1 + b x1**3) / m          (input_gain="unit")
        dx2/dt = (u - d x2 - a x1 - b x1**3) / m          (input_gain="inverse_mass")

    ``"unit"`` feeds the input unscaled into the acceleration; ``"inverse_mass"``
    is the force-balance form in which the input is a force.
    """

    name = "silverbox"
    dims = ModelDims(2, 4, 1)
    param_names = ("m", "d", "a", "b")
    state_names = ("y", "ydot")
    state_box = [(-0.25, 0.25), (-50.0, 50.0)]
    param_box = [(4.0e-6, 6.2e-6), (1.7e-4, 2.6e-4), (0.77, 1.17), (3.2, 4.8)]
    input_box = (-0.2, 0.2)
    sampling_period = SILVERBOX_SAMPLING_PERIOD

    def __init__(self, input_gain="unit"):
        if input_gain not in ("unit", "inverse_mass"):
            raise ValueError("input_gain must be 'unit' or 'inverse_mass'")
        self.input_gain = input_gain
        self.C = np.array([[1.0, 0.0]])

    def __repr__(self):
        return f"SilverboxModel(input_gain={self.input_gain!r})"

    def native_kernel(self):
        mod = _backend.native_module()
        if mod is None:
            return None
        return mod.NativeSilverbox(self.input_gain == "inverse_mass")

    def _terms(self, x, p, u):
        x1, x2 = float(x[0]), float(x[1])
        m, d, a, b = (float(v) for v in p)
        if m == 0.0:
            raise ZeroDivisionError("silverbox mass parameter is zero")
        q = d * x2 + a * x1 + b * x1 ** 3
        qm = q - u if self.input_gain == "inverse_mass" else q
        return x1, x2, m, d, a, b, q, qm

    def flow(self, t, x, p, u, order=2):
        x1, x2, m, d, a, b, q, qm = self._terms(x, p, u)
        im = 1.0 / m
        f2 = -qm * im if self.input_gain == "inverse_mass" else u - q * im
        f = np.array([x2, f2])
        if order < 1:
            return FlowDerivatives(f)
        k1 = a + 3.0 * b * x1 * x1
        fx = np.array([[0.0, 1.0], [-k1 * im, -d * im]])
        fp = np.zeros((2, 4))
        fp[1] = (qm * im * im, -x2 * im, -x1 * im, -x1 ** 3 * im)
        if order < 2:
            return FlowDerivatives(f, fx, fp)
        fxx = np.zeros((2, 2, 2))
        fxx[1, 0, 0] = -6.0 * b * x1 * im
        fxp = np.zeros((2, 2, 4))
        fxp[1, 0] = (k1 * im * im, 0.0, -im, -3.0 * x1 * x1 * im)
        fxp[1, 1] = (d * im * im, -im, 0.0, 0.0)
        fpx = fxp.transpose(0, 2, 1).copy()
        fpp = np.zeros((2, 4, 4))
        fpp[1, 0] = (-2.0 * qm * im ** 3, x2 * im * im, x1 * im * im, x1 ** 3 * im * im)
        fpp[1, :, 0] = fpp[1, 0]
        return FlowDerivatives(f, fx, fp, fxx, fxp, fpx, fpp)

    def f(self, t, x, p, u):
        return self.flow(t, x, p, u, 0).f

    def f_x(self, t, x, p, u):
        return self.flow(t, x, p, u, 1).f_x

    def f_p(self, t, x, p, u):
        return self.flow(t, x, p, u, 1).f_p

    def f_xx(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_xx

    def f_xp(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_xp

    def f_px(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_px

    def f_pp(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_pp


@register_model("twotank")
class TwoTankModel(_LinearOutput, DynamicsModel):
    """Two cascaded tanks; the output is the lower tank's level::

        dx1/dt = -p1 sqrt(x1) + p2 u
        dx2/dt = -p3 sqrt(x2) + p4 sqrt(x1)

    Levels are clamped below at ``clamp_eps`` before the square root and its
    derivatives are taken.
    """

    name = "twotank"
    dims = ModelDims(2, 4, 1)
    param_names = ("p1", "p2", "p3", "p4")
    state_names = ("x1", "x2")
    state_box = [(0.5, 8.0), (0.5, 8.0)]
    param_box = [(0.032, 0.048), (0.016, 0.024), (0.016, 0.024), (0.032, 0.048)]
    input_box = (2.0, 6.0)
    sampling_period = TWOTANK_SAMPLING_PERIOD

    def __init__(self, clamp_eps=1e-12):
        if not clamp_eps > 0:
            raise ValueError("clamp_eps must be positive")
        self.clamp_eps = float(clamp_eps)
        self.state_floor = self.clamp_eps
        self.C = np.array([[0.0, 1.0]])

    def __repr__(self):
        return f"TwoTankModel(clamp_eps={self.clamp_eps!r})"

    def native_kernel(self):
        mod = _backend.native_module()
        if mod is None:
            return None
        return mod.NativeTwoTank(self.clamp_eps)

    def flow(self, t, x, p, u, order=2):
        eps = self.clamp_eps
        x1, x2 = max(float(x[0]), eps), max(float(x[1]), eps)
        p1, p2, p3, p4 = (float(v) for v in p)
        s1, s2 = np.sqrt(x1), np.sqrt(x2)
        f = np.array([-p1 * s1 + p2 * u, -p3 * s2 + p4 * s1])
        if order < 1:
            return FlowDerivatives(f)
        d1, d2 = 0.5 / s1, 0.5 / s2
        fx = np.array([[-p1 * d1, 0.0], [p4 * d1, -p3 * d2]])
        fp = np.array([[-s1, u, 0.0, 0.0], [0.0, 0.0, -s2, s1]])
        if order < 2:
            return FlowDerivatives(f, fx, fp)
        dd1, dd2 = -0.25 / (x1 * s1), -0.25 / (x2 * s2)
        fxx = np.zeros((2, 2, 2))
        fxx[0, 0, 0] = -p1 * dd1
        fxx[1, 0, 0] = p4 * dd1
        fxx[1, 1, 1] = -p3 * dd2
        fxp = np.zeros((2, 2, 4))
        fxp[0, 0, 0] = -d1
        fxp[1, 1, 2] = -d2
        fxp[1, 0, 3] = d1
        fpx = fxp.transpose(0, 2, 1).copy()
        return FlowDerivatives(f, fx, fp, fxx, fxp, fpx, np.zeros((2, 4, 4)))

    def f(self, t, x, p, u):
        return self.flow(t, x, p, u, 0).f

    def f_x(self, t, x, p, u):
        return self.flow(t, x, p, u, 1).f_x

    def f_p(self, t, x, p, u):
        return self.flow(t, x, p, u, 1).f_p

    def f_xx(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_xx

    def f_xp(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_xp

    def f_px(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_px

    def f_pp(self, t, x, p, u):
        return self.flow(t, x, p, u, 2).f_pp


def silverbox_derivatives(t, x, p, u, input_gain="unit"):
    """All flow partials of the Silverbox model at one point."""
    return SilverboxModel(input_gain).flow(t, x, p, u, 2)


def twotank_derivatives(t, x, p, u, clamp_eps=1e-12):
    """All flow partials of the two-tank model at one point."""
    return TwoTankModel(clamp_eps).flow(t, x, p, u, 2)


# ---------------------------------------------------------------------------
# synthetic data

@dataclass
class InputSpec:
    """Excitation for a synthetic experiment.

    ``kind`` is one of

    * ``"constant"``: ``level`` for all samples,
    * ``"steps"``: piecewise constant, a new level drawn uniformly from
      ``[low, high]`` every ``hold`` samples,
    * ``"multisine"``: sum of ``n_tones`` sines up to ``max_freq`` Hz with random
      phases, scaled to peak ``amplitude`` around ``level``,
    * ``"array"``: explicit ``values``.
    """

    kind: str = "constant"
    level: float = 0.0
    low: float = 0.0
    high: float = 1.0
    hold: int = 1
    amplitude: float = 1.0
    n_tones: int = 10
    max_freq: float = 1.0
    values: Optional[Sequence[float]] = None

    def generate(self, times, rng):
        P1 = len(times)
        if self.kind == "constant":
            return np.full(P1, float(self.level))
        if self.kind == "steps":
            hold = max(int(self.hold), 1)
            levels = rng.uniform(self.low, self.high, size=-(-P1 // hold))
            return np.repeat(levels, hold)[:P1]
        if self.kind == "multisine":
            freqs = np.linspace(self.max_freq / self.n_tones, self.max_freq, self.n_tones)
            phases = rng.uniform(0, 2 * np.pi, size=self.n_tones)
            sig = np.sin(2 * np.pi * np.outer(times - times[0], freqs) + phases).sum(axis=1)
            peak = np.max(np.abs(sig)) if P1 else 1.0
            return self.level + self.amplitude * sig / (peak or 1.0)
        if self.kind == "array":
            vals = np.asarray(self.values, float)
            if vals.shape != (P1,):
                raise ValueError(f"input array has {vals.shape}, need ({P1},)")
            return vals
        raise ValueError(f"unknown input kind {self.kind!r}")


@dataclass
class SyntheticScenario:
    """Everything needed to regenerate a synthetic dataset bit-for-bit."""

    model: DynamicsModel
    x0: Sequence[float]
    p: Sequence[float]
    n_samples: int
    sampling_period: float
    input: InputSpec = field(default_factory=InputSpec)
    noise: float = 0.0
    seed: int = 0
    substeps: int = 32
    t0: float = 0.0


def generate_synthetic(scenario):
    """Simulate ``scenario`` and return its Dataset.

    The generator integrates with ``scenario.substeps`` (four times the
    default) and adds seeded Gaussian noise of standard deviation
    ``scenario.noise`` to the outputs.
    """
    sc = scenario
    rng = np.random.default_rng(sc.seed)
    times = sc.t0 + sc.sampling_period * np.arange(sc.n_samples)
    u = sc.input.generate(times, rng)
    ds = Dataset(times, u, np.zeros((sc.n_samples, sc.model.dims.n_outputs)),
                 sampling_period=sc.sampling_period, source="synthetic")
    traj = integrate(sc.model, sc.x0, sc.p, ds.input_signal(), times,
                     SensitivityOrder.STATE, IntegratorConfig(substeps=sc.substeps))
    y = sc.model.output_batch(times, traj.x, np.asarray(sc.p, float), u, 0).c
    if sc.noise > 0:
        y = y + rng.normal(0.0, sc.noise, size=y.shape)
    return Dataset(times, u, y, sampling_period=sc.sampling_period, source="synthetic")


def twotank_scenario(p=TWOTANK_ESTIMATE, x0=(0.3, 0.3), n_samples=501, noise=0.0,
                     seed=0, substeps=32):
    """Two-tank experiment on the benchmark's grid driven by random input steps."""
    return SyntheticScenario(
        model=TwoTankModel(), x0=x0, p=p, n_samples=n_samples,
        sampling_period=TWOTANK_SAMPLING_PERIOD,
        input=InputSpec(kind="steps", low=2.0, high=6.0, hold=50),
        noise=noise, seed=seed, substeps=substeps)


def silverbox_scenario(p=SILVERBOX_ESTIMATE["p"], ydot0=SILVERBOX_ESTIMATE["ydot0"],
                       y0=0.0, n_samples=400, noise=1e-3, seed=0, substeps=32,
                       input_gain="inverse_mass"):
    """Silverbox-like experiment: band-limited multisine force on the Silverbox grid."""
    return SyntheticScenario(
        model=SilverboxModel(input_gain), x0=(y0, ydot0), p=p, n_samples=n_samples,
        sampling_period=SILVERBOX_SAMPLING_PERIOD,
        input=InputSpec(kind="multisine", amplitude=0.15, n_tones=20, max_freq=120.0),
        noise=noise, seed=seed, substeps=substeps)
