"""Small models with closed-form behaviour, used for testing and examples."""
import numpy as np

from .model import DynamicsModel, ModelDims, register_model


class _IdentityOutput:
    """Output equals the full state."""

    def c(self, t, x, p, u):
        return np.array(x, dtype=float)

    def c_x(self, t, x, p, u):
        return np.eye(self.dims.n_states)

    def c_p(self, t, x, p, u):
        return np.zeros(self.dims.shape("c_p"))

    def c_xx(self, t, x, p, u):
        return np.zeros(self.dims.shape("c_xx"))

    def c_xp(self, t, x, p, u):
        return np.zeros(self.dims.shape("c_xp"))

    def c_px(self, t, x, p, u):
        return np.zeros(self.dims.shape("c_px"))

    def c_pp(self, t, x, p, u):
        return np.zeros(self.dims.shape("c_pp"))


@register_model("exponential")
class ExponentialModel(_IdentityOutput, DynamicsModel):
    """``dx/dt = p x``; output ``x``.

    Closed form: ``x = x0 e^{pt}``, ``phi = e^{pt}``, ``theta = x0 t e^{pt}``,
    ``chi1 = chi2 = t e^{pt}``, ``theta1 = x0 t^2 e^{pt}``, ``phi1 = 0``.
    """

    name = "exponential"
    dims = ModelDims(1, 1, 1)
    state_box = [(0.5, 3.0)]
    param_box = [(-0.5, 0.8)]

    def f(self, t, x, p, u):
        return np.array([p[0] * x[0]])

    def f_x(self, t, x, p, u):
        return np.array([[p[0]]], dtype=float)

    def f_p(self, t, x, p, u):
        return np.array([[x[0]]], dtype=float)

    def f_xx(self, t, x, p, u):
        return np.zeros((1, 1, 1))

    def f_xp(self, t, x, p, u):
        return np.ones((1, 1, 1))

    def f_px(self, t, x, p, u):
        return np.ones((1, 1, 1))

    def f_pp(self, t, x, p, u):
        return np.zeros((1, 1, 1))


@register_model("linear")
class LinearModel(_IdentityOutput, DynamicsModel):
    """``dx/dt = A x + B u`` with fixed matrices and no parameters."""

    name = "linear"

    def __init__(self, A=((0.0, 1.0), (-1.0, 0.0)), B=None):
        self.A = np.array(A, dtype=float)
        n = self.A.shape[0]
        self.B = np.zeros(n) if B is None else np.array(B, dtype=float).ravel()
        self.dims = ModelDims(n, 0, n)
        self.state_box = [(-1.0, 1.0)] * n
        self.param_box = []

    def f(self, t, x, p, u):
        return self.A @ np.asarray(x, float) + self.B * u

    def f_x(self, t, x, p, u):
        return self.A.copy()

    def f_p(self, t, x, p, u):
        return np.zeros((self.dims.n_states, 0))

    def f_xx(self, t, x, p, u):
        n = self.dims.n_states
        return np.zeros((n, n, n))

    def f_xp(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_xp"))

    def f_px(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_px"))

    def f_pp(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_pp"))


@register_model("drift")
class DriftModel(_IdentityOutput, DynamicsModel):
    """``dx/dt = p1 + p2 u``; the state is affine in ``(x0, p)`` so the cost is quadratic."""

    name = "drift"
    dims = ModelDims(1, 2, 1)
    state_box = [(-1.0, 1.0)]
    param_box = [(-1.0, 1.0), (-1.0, 1.0)]

    def f(self, t, x, p, u):
        return np.array([p[0] + p[1] * u])

    def f_x(self, t, x, p, u):
        return np.zeros((1, 1))

    def f_p(self, t, x, p, u):
        return np.array([[1.0, u]])

    def f_xx(self, t, x, p, u):
        return np.zeros((1, 1, 1))

    def f_xp(self, t, x, p, u):
        return np.zeros((1, 1, 2))

    def f_px(self, t, x, p, u):
        return np.zeros((1, 2, 1))

    def f_pp(self, t, x, p, u):
        return np.zeros((1, 2, 2))


@register_model("zero")
class ZeroModel(_IdentityOutput, DynamicsModel):
    """``dx/dt = 0``."""

    name = "zero"

    def __init__(self, n_states=2, n_params=0):
        self.dims = ModelDims(n_states, n_params, n_states)
        self.state_box = [(-1.0, 1.0)] * n_states
        self.param_box = [(-1.0, 1.0)] * n_params

    def f(self, t, x, p, u):
        return np.zeros(self.dims.n_states)

    def f_x(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_x"))

    def f_p(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_p"))

    def f_xx(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_xx"))

    def f_xp(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_xp"))

    def f_px(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_px"))

    def f_pp(self, t, x, p, u):
        return np.zeros(self.dims.shape("f_pp"))


@register_model("pendulum")
class PendulumModel(DynamicsModel):
    """Driven damped pendulum with a nonlinear, parameter-dependent output.

    ::

        dx1/dt = x2
        dx2/dt = -p1 sin(x1) - p2 x2 + p1 p2 u
        y1 = x1 + p3 x1 x2
        y2 = sin(x2) + p3**2 x1

    Every first and second partial of both ``f`` and ``c`` is nonzero
    somewhere, so all terms of the Hessian assembly are exercised.
    """

    name = "pendulum"
    dims = ModelDims(2, 3, 2)
    state_box = [(-1.0, 1.0), (-1.0, 1.0)]
    param_box = [(0.5, 2.0), (0.1, 0.6), (0.2, 1.0)]

    def f(self, t, x, p, u):
        return np.array([x[1], -p[0] * np.sin(x[0]) - p[1] * x[1] + p[0] * p[1] * u])

    def f_x(self, t, x, p, u):
        return np.array([[0.0, 1.0], [-p[0] * np.cos(x[0]), -p[1]]])

    def f_p(self, t, x, p, u):
        return np.array([[0.0, 0.0, 0.0],
                         [-np.sin(x[0]) + p[1] * u, -x[1] + p[0] * u, 0.0]])

    def f_xx(self, t, x, p, u):
        out = np.zeros((2, 2, 2))
        out[1, 0, 0] = p[0] * np.sin(x[0])
        return out

    def f_xp(self, t, x, p, u):
        out = np.zeros((2, 2, 3))
        out[1, 0, 0] = -np.cos(x[0])
        out[1, 1, 1] = -1.0
        return out

    def f_px(self, t, x, p, u):
        return self.f_xp(t, x, p, u).transpose(0, 2, 1).copy()

    def f_pp(self, t, x, p, u):
        out = np.zeros((2, 3, 3))
        out[1, 0, 1] = out[1, 1, 0] = u
        return out

    def c(self, t, x, p, u):
        return np.array([x[0] + p[2] * x[0] * x[1], np.sin(x[1]) + p[2] ** 2 * x[0]])

    def c_x(self, t, x, p, u):
        return np.array([[1.0 + p[2] * x[1], p[2] * x[0]], [p[2] ** 2, np.cos(x[1])]])

    def c_p(self, t, x, p, u):
        return np.array([[0.0, 0.0, x[0] * x[1]], [0.0, 0.0, 2.0 * p[2] * x[0]]])

    def c_xx(self, t, x, p, u):
        out = np.zeros((2, 2, 2))
        out[0, 0, 1] = out[0, 1, 0] = p[2]
        out[1, 1, 1] = -np.sin(x[1])
        return out

    def c_xp(self, t, x, p, u):
        out = np.zeros((2, 2, 3))
        out[0, 0, 2] = x[1]
        out[0, 1, 2] = x[0]
        out[1, 0, 2] = 2.0 * p[2]
        return out

    def c_px(self, t, x, p, u):
        return self.c_xp(t, x, p, u).transpose(0, 2, 1).copy()

    def c_pp(self, t, x, p, u):
        out = np.zeros((2, 3, 3))
        out[1, 2, 2] = 2.0 * x[0]
        return out
