import numpy as np
import pytest

from tensorsysid import (DynamicsModel, FiniteDifferenceError, InputSignal, ModelDims,
                         SilverboxModel, TwoTankModel, fd_fill_derivatives, get_model,
                         registered_models)
from tensorsysid.model import FLOW_PARTIALS, OUTPUT_PARTIALS
from tensorsysid.toy import LinearModel, PendulumModel
from tensorsysid.verify import sample_points


class OnlyFC(DynamicsModel):
    """Supplies f and c only; every partial must come from differences."""

    dims = ModelDims(2, 1, 1)
    name = "only-fc"

    def __init__(self, f, c):
        self._f, self._c = f, c

    def f(self, t, x, p, u):
        return np.asarray(self._f(x, p, u), float)

    def c(self, t, x, p, u):
        return np.asarray(self._c(x, p, u), float)


def test_model_dims_invariants():
    ModelDims(1, 0, 1)
    for bad in ((0, 1, 1), (1, -1, 1), (1, 1, 0)):
        with pytest.raises(ValueError):
            ModelDims(*bad)
    d = ModelDims(2, 3, 1)
    assert d.shape("f_xp") == (2, 2, 3) and d.shape("c_px") == (1, 3, 2)


def test_fd_linear_model():
    A = np.array([[0.3, -1.2], [2.0, 0.5]])
    m = fd_fill_derivatives(OnlyFC(lambda x, p, u: A @ x + p[0] * u, lambda x, p, u: x[:1]))
    x, p = np.array([0.7, -0.4]), np.array([1.5])
    assert np.max(np.abs(m.f_x(0, x, p, 2.0) - A)) < 1e-9
    assert np.max(np.abs(m.f_xx(0, x, p, 2.0))) < 1e-4
    assert np.allclose(m.f_p(0, x, p, 2.0), [[2.0], [2.0]], atol=1e-9)
    assert np.allclose(m.c_x(0, x, p, 2.0), [[1.0, 0.0]], atol=1e-12)


def test_fd_twotank_closed_form():
    fd = fd_fill_derivatives(TwoTankModel(), step=1e-5, replace="all")
    fx = fd.f_x(0, np.array([1.0, 2.0]), np.array([0.04, 0.02, 0.02, 0.04]), 3.0)
    assert abs(fx[0, 0] - (-0.02)) <= 1e-8


def test_fd_constant_model_all_zero():
    m = fd_fill_derivatives(OnlyFC(lambda x, p, u: [1.0, -2.0], lambda x, p, u: [3.0]))
    x, p = np.array([0.1, 0.2]), np.array([0.3])
    for name in FLOW_PARTIALS[1:] + OUTPUT_PARTIALS[1:]:
        assert not np.any(getattr(m, name)(0, x, p, 0.0)), name


def test_fd_reports_offending_coordinate():
    m = fd_fill_derivatives(OnlyFC(lambda x, p, u: [x[0], np.sqrt(x[1])], lambda x, p, u: [x[0]]))
    with pytest.raises(FiniteDifferenceError) as exc, np.errstate(invalid="ignore"):
        m.f_x(0, np.array([1.0, 1e-7]), np.array([0.0]), 0.0)
    assert exc.value.coordinate == ("x", 1)


def test_fd_step_must_be_positive():
    with pytest.raises(ValueError):
        fd_fill_derivatives(PendulumModel(), step=0.0)


def test_fd_keeps_supplied_partials():
    base = PendulumModel()
    fd = fd_fill_derivatives(base)
    x, p = np.array([0.1, 0.2]), np.array([1.0, 0.3, 0.5])
    assert np.array_equal(fd.f_xx(0, x, p, 0.4), base.f_xx(0, x, p, 0.4))


@pytest.mark.parametrize("model", [TwoTankModel(), SilverboxModel(),
                                   SilverboxModel("inverse_mass"), PendulumModel()],
                         ids=repr)
def test_fd_reproduces_analytic_partials_100_points(model):
    """Every analytic partial agrees with differences at 100 random points (1e-6 relative)."""
    n, m = model.dims.n_states, model.dims.n_params
    sx = np.max(np.abs(np.asarray(model.state_box, float)), axis=1)
    sp = np.max(np.abs(np.asarray(model.param_box, float)), axis=1)
    first = ("f_x", "f_p", "c_x", "c_p")
    fd1 = fd_fill_derivatives(model, replace=first, typical_x=sx, typical_p=sp)
    fd2 = fd_fill_derivatives(model, replace=[k for k in FLOW_PARTIALS[3:] + OUTPUT_PARTIALS[3:]],
                              typical_x=sx, typical_p=sp)
    for x, p, u in sample_points(model, 100, seed=11):
        for name in FLOW_PARTIALS[1:] + OUTPUT_PARTIALS[1:]:
            fd = fd1 if name in first else fd2
            a, b = getattr(model, name)(0, x, p, u), getattr(fd, name)(0, x, p, u)
            # compare in scaled coordinates
            for ax, wrt in enumerate(name[2:], start=1):
                s = (sx if wrt == "x" else sp).reshape([-1 if i == ax else 1
                                                        for i in range(a.ndim)])
                a, b = a * s, b * s
            ref = max(np.max(np.abs(a), initial=0), np.max(np.abs(b), initial=0))
            err = np.max(np.abs(a - b), initial=0) / ref if ref else 0.0
            assert err <= 1e-6, (name, err)


@pytest.mark.parametrize("model", [TwoTankModel(), SilverboxModel(), PendulumModel()], ids=repr)
def test_mixed_partials_consistent(model):
    for x, p, u in sample_points(model, 10, seed=2):
        assert np.array_equal(model.f_xp(0, x, p, u), model.f_px(0, x, p, u).transpose(0, 2, 1))
        assert np.array_equal(model.c_xp(0, x, p, u), model.c_px(0, x, p, u).transpose(0, 2, 1))


def test_input_signal_zero_order_hold():
    sig = InputSignal([0.0, 1.0, 2.0], [5.0, -1.0, 3.0])
    assert sig.value(0.0) == 5.0
    assert sig.value(0.999) == 5.0
    assert sig.value(1.0) == -1.0
    assert sig.value(2.0) == 3.0
    assert np.array_equal(sig.hold([0.5, 1.5]), [5.0, -1.0])
    with pytest.raises(ValueError):
        sig.value(2.5)
    with pytest.raises(ValueError):
        InputSignal([0.0, 0.0], [1.0, 2.0])


def test_registry():
    assert {"silverbox", "twotank"} <= set(registered_models())
    assert isinstance(get_model("silverbox", input_gain="inverse_mass"), SilverboxModel)
    with pytest.raises(KeyError):
        get_model("no-such-model")


def test_linear_model_shapes():
    m = LinearModel()
    assert m.f_p(0, np.zeros(2), np.zeros(0), 0).shape == (2, 0)
