import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tensorsysid import (DecisionVector, OptimizerConfig, SensitivityOrder, fd_baseline_solve,
                         integrate, newton_solve, regularize_hessian, run_sweep)
from tensorsysid.optimizer import (FitEvaluator, Objective, SweepRun, _drive,
                                   perturbed_guesses, sweep_table)
from tensorsysid.toy import DriftModel, ExponentialModel, PendulumModel

from conftest import make_dataset

finite = st.floats(-1e6, 1e6, allow_nan=False)


@settings(max_examples=50, deadline=None)
@given(st.lists(finite, min_size=1, max_size=4), st.lists(finite, min_size=1, max_size=4),
       st.data())
def test_decision_vector_round_trip(x0, p, data):
    fx = data.draw(st.lists(st.booleans(), min_size=len(x0), max_size=len(x0)))
    fp = data.draw(st.lists(st.booleans(), min_size=len(p), max_size=len(p)))
    dv = DecisionVector(x0, p, fx, fp)
    assert len(dv) == sum(fx) + sum(fp)
    x, q = dv.unpack(dv.values)
    assert np.array_equal(x, x0) and np.array_equal(q, p)
    new = dv.values + 1.0
    back = dv.with_values(new)
    assert np.array_equal(back.values, new)
    # fixed entries untouched
    assert np.array_equal(back.x0[~dv.free_x0], dv.x0[~dv.free_x0])
    assert np.array_equal(back.p[~dv.free_p], dv.p[~dv.free_p])


def test_decision_vector_defaults_and_errors():
    dv = DecisionVector([1.0, 2.0], [3.0])
    assert dv.values.tolist() == [3.0]
    assert dv.labels() == ["p0"]
    with pytest.raises(ValueError):
        DecisionVector([1.0], [2.0], [True, False])
    with pytest.raises(ValueError):
        dv.unpack([1.0, 2.0])


@pytest.mark.parametrize("kw", [{"rel_tol": 0}, {"abs_tol": -1}, {"grad_tol": 0},
                                {"armijo_c": 1.0}, {"backtrack_factor": 0.0},
                                {"max_iter": -1}, {"damping_init": 0}, {"min_step": 0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        OptimizerConfig(**kw)


def test_with_tolerance_sets_both():
    cfg = OptimizerConfig().with_tolerance(1e-10)
    assert cfg.rel_tol == cfg.abs_tol == 1e-10


def test_regularize_examples():
    H = np.array([[2.0, 0.0], [0.0, 3.0]])
    Hr, mu = regularize_hessian(H, 1e-3)
    assert mu == 0.0 and np.array_equal(Hr, H)
    Hr, mu = regularize_hessian([[-1.0, 0.0], [0.0, 1.0]], 1.0)
    assert mu == 2.0
    assert np.all(np.linalg.eigvalsh(Hr) > 0)
    assert regularize_hessian(np.zeros((3, 3)), 1e-3)[1] == 1e-3
    with pytest.raises(OverflowError):
        regularize_hessian([[-1e308]], 1e-3)


def test_regularize_symmetrises():
    Hr, _ = regularize_hessian([[2.0, 1.0], [0.0, 2.0]], 1e-3)
    assert np.array_equal(Hr, Hr.T) and Hr[0, 1] == 0.5


def _drift_problem():
    model = DriftModel()
    t = np.linspace(0.0, 4.0, 21)
    u = np.sin(t)
    truth = DecisionVector([0.3], [0.8, -0.5], [True])
    traj = integrate(model, truth.x0, truth.p, make_dataset(t, np.zeros((21, 1)), u)
                     .input_signal(), t, SensitivityOrder.STATE)
    return model, make_dataset(t, traj.x.copy(), u), truth


def test_quadratic_problem_one_newton_step():
    model, ds, truth = _drift_problem()
    # FD Hessian rounding grows with J / h**2, so start within 10% of the truth
    guess = truth.with_values([0.33, 0.84, -0.47])
    rep = newton_solve(model, ds, guess)
    assert rep.converged and rep.iterations == 1
    assert np.allclose(rep.estimate.values, truth.values, rtol=1e-10, atol=1e-12)
    fd = fd_baseline_solve(model, ds, guess)
    assert fd.converged
    assert np.allclose(fd.estimate.values, truth.values, rtol=0, atol=1e-6)
    # same driver: the first iterate agrees up to derivative accuracy
    a1, f1 = rep.history[1].values, fd.history[1].values
    assert np.max(np.abs(a1 - f1) / np.maximum(1.0, np.abs(a1))) <= 1e-8


def _exponential_problem():
    model = ExponentialModel()
    t = np.linspace(0.0, 2.0, 11)
    y = 1.5 * np.exp(0.4 * t)
    return model, make_dataset(t, y[:, None]), DecisionVector([1.5], [0.4], [True])


def test_monotone_decrease_and_fast_convergence():
    model, ds, truth = _exponential_problem()
    rep = newton_solve(model, ds, truth.with_values([1.2, 0.1]))
    assert rep.converged
    J = [r.J for r in rep.history]
    assert all(b < a for a, b in zip(J, J[1:]))
    err = [np.max(np.abs(r.values - truth.values)) for r in rep.history]
    tail = [e for e in err if e > 1e-6]
    # superlinear: the error ratio shrinks towards the solution
    ratios = [b / a for a, b in zip(tail, tail[1:])]
    assert ratios and ratios[-1] < 0.1
    assert np.allclose(rep.estimate.values, truth.values, rtol=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.6, 2.5), st.floats(-0.4, 0.7))
def test_damped_step_is_descent(x0, p):
    model, ds, _ = _exponential_problem()
    obj = Objective(model, ds, DecisionVector([x0], [p], [True]))
    J, g, H = obj.analytic(np.array([x0, p]))
    s = np.array([abs(x0), abs(p) or 1.0])
    Hr, _ = regularize_hessian(H * np.outer(s, s), 1e-3)
    step = np.linalg.solve(Hr, -g * s)
    assert (g * s) @ step <= 0


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergent_guess_aborts():
    model, ds, truth = _exponential_problem()
    rep = newton_solve(model, ds, truth.with_values([1.0, 1e3]))
    assert rep.status == "aborted" and not rep.initiated and rep.iterations == 0
    assert rep.estimate.values.tolist() == [1.0, 1e3]


class _FlatObjective:
    """Reports a descent gradient but the cost never decreases."""

    clamp_hits = 0

    def cost(self, values):
        return 1.0 + 1e-3 * float(np.sum(values ** 2))

    def derivs(self, values):
        return 1.0, -np.ones_like(values), np.eye(len(values))


def test_line_search_failure():
    obj = _FlatObjective()
    rep = _drive(obj, obj.derivs, DecisionVector([], [1.0, 1.0]), OptimizerConfig(), "analytic")
    assert rep.status == "line_search_failed" and not rep.initiated


def test_max_iter():
    model, ds, truth = _exponential_problem()
    rep = newton_solve(model, ds, truth.with_values([1.2, 0.1]), OptimizerConfig(max_iter=1))
    assert rep.status == "max_iter" and rep.iterations == 1 and rep.initiated
    rep0 = newton_solve(model, ds, truth.with_values([1.2, 0.1]), OptimizerConfig(max_iter=0))
    assert rep0.status == "max_iter" and rep0.iterations == 0


def test_report_serialises(pendulum_data):
    model, ds = pendulum_data
    guess = DecisionVector([0.4, -0.2], [1.1, 0.3, 0.5], [True, False])
    rep = newton_solve(model, ds, guess, OptimizerConfig(max_iter=3))
    d = rep.to_dict(model)
    text = json.dumps(d, sort_keys=True)
    assert "wall_time" not in text
    assert set(d["estimates"]) == set(guess.labels(model))


def test_perturbed_guesses_deterministic_and_bounded():
    tpl = DecisionVector([2.0], [1.0, -3.0], [True])
    a = perturbed_guesses(tpl, 0.2, 50, seed=4)
    b = perturbed_guesses(tpl, 0.2, 50, seed=4)
    assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
    ratio = np.array([g.values / tpl.values for g in a])
    assert np.all((ratio >= 0.8) & (ratio <= 1.2))
    assert not np.array_equal(a[0].values, perturbed_guesses(tpl, 0.2, 1, seed=5)[0].values)


def test_sweep_single_unperturbed():
    model, ds, truth = _exponential_problem()
    runs, table = run_sweep(model, ds, truth, tolerances=(1e-12,), count=1, fraction=0.0,
                            solvers=("analytic",), evaluator=FitEvaluator(model, ds))
    assert len(runs) == 1 and np.allclose(runs[0].estimate, truth.values, rtol=1e-8)
    assert runs[0].converged and runs[0].gof == pytest.approx(1.0)
    assert table[0]["converged_rate"] == 1.0


def test_sweep_table_handles_missing_fits():
    runs = [SweepRun("fd", 1e-10, i, False, False, "aborted", 0, None, None, [1.0])
            for i in range(3)]
    runs.append(SweepRun("fd", 1e-10, 3, True, True, "converged", 2, 0.1, 0.7, [1.0]))
    (row,) = sweep_table(runs)
    assert row["initiated_rate"] == 0.25 and row["converged_rate"] == 0.25
    assert row["best_gof"] == 0.7
    (row,) = sweep_table(runs[:3])
    assert row["best_gof"] is None


def test_sweep_parallel_matches_serial():
    model, ds, truth = _exponential_problem()
    kw = dict(tolerances=(1e-10,), count=3, fraction=0.2, seed=1, solvers=("analytic",))
    serial, _ = run_sweep(model, ds, truth, **kw)
    par, _ = run_sweep(model, ds, truth, workers=2, **kw)
    assert serial == par


def test_pendulum_round_trip(pendulum_data):
    model, ds = pendulum_data
    truth = DecisionVector([0.3, 0.0], [1.2, 0.35, 0.5])
    t = ds.times
    traj = integrate(model, truth.x0, truth.p, ds.input_signal(), t, SensitivityOrder.STATE)
    exact = make_dataset(t, model.output_batch(t, traj.x, truth.p, ds.inputs, 0).c, ds.inputs)
    rep = newton_solve(model, exact, truth.with_values(truth.values * [1.1, 0.9, 1.15]))
    assert rep.converged
    assert np.allclose(rep.estimate.values, truth.values, rtol=1e-7)
