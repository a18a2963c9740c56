"""Acceptance criteria, one test per criterion.

Each test prints ``PASS criterion N`` or ``FAIL criterion N`` with the
measured numbers; the lines are repeated in the pytest terminal summary.
Criterion 6 needs the measured benchmark records and is skipped unless
``TENSORSYSID_SILVERBOX_CSV`` and ``TENSORSYSID_TWOTANK_DATA`` point at them.
"""
import os
import time
from pathlib import Path

import numpy as np
import pytest
import yaml

from tensorsysid import (DecisionVector, IntegratorConfig, MutatedModel, OptimizerConfig,
                         SensitivityOrder, SilverboxModel, TwoTankModel, fd_transition_check,
                         generate_synthetic, integrate, mutation_targets, newton_solve,
                         run_all_checks, twotank_scenario)
from tensorsysid.benchmarks import TWOTANK_ESTIMATE
from tensorsysid.cli import Run
from tensorsysid.optimizer import FitEvaluator, perturbed_guesses, run_sweep
from tensorsysid.toy import DriftModel, ExponentialModel, LinearModel

from conftest import ACCEPTANCE, make_dataset, record_criterion

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BENCHMARKS = [TwoTankModel(), SilverboxModel("unit"), SilverboxModel("inverse_mass")]


def test_criterion_1_cost_derivatives():
    start = time.perf_counter()
    worst = {"cost.gradient": 0.0, "cost.hessian": 0.0, "cost.hessian_symmetry": 0.0}
    ok = True
    for model in BENCHMARKS:
        rep = run_all_checks(model, seed=0, n_points=10,
                             checks=("gradient", "hessian", "symmetry"))
        for name in worst:
            r = rep.result(name)
            worst[name] = max(worst[name], r.max_error)
            ok &= r.passed
    elapsed = time.perf_counter() - start
    ok &= elapsed < 30
    g, h, s = worst.values()
    assert record_criterion(1, ok, f"grad {g:.1e} <= 1e-6, hess {h:.1e} <= 1e-5, "
                            f"sym {s:.1e} <= 1e-9, {elapsed:.1f} s < 30 s")


def test_criterion_2_transition_tensors():
    start = time.perf_counter()
    # scalar exponential: closed forms and the FD oracle
    x0, p = 1.7, 0.35
    t = np.linspace(0.0, 2.0, 11)
    tr = integrate(ExponentialModel(), [x0], [p], 0.0, t, SensitivityOrder.SECOND,
                   IntegratorConfig(substeps=64))
    e = np.exp(p * t)
    closed = {"phi": e, "theta": x0 * t * e, "theta1": x0 * t ** 2 * e, "chi1": t * e,
              "chi2": t * e, "phi1": 0 * t}
    closed_err = max(float(np.max(np.abs(tr.block(k).ravel() - v) / np.maximum(1.0, np.abs(v))))
                     for k, v in closed.items())
    first, second = [], []
    sig = make_dataset(t, np.zeros((len(t), 1))).input_signal()
    res = fd_transition_check(ExponentialModel(), [x0], [p], sig)
    first.append(res.max_error(["phi", "theta"]))
    second.append(res.max_error(["phi1", "theta1", "chi1", "chi2"]))
    sc = twotank_scenario(n_samples=21)
    ds = generate_synthetic(sc)
    res = fd_transition_check(TwoTankModel(), sc.x0, sc.p, ds.input_signal())
    first.append(res.max_error(["phi", "theta"]))
    second.append(res.max_error(["phi1", "theta1", "chi1", "chi2"]))
    elapsed = time.perf_counter() - start
    ok = closed_err <= 1e-6 and max(first) <= 1e-6 and max(second) <= 1e-5 and elapsed < 30
    assert record_criterion(2, ok, f"exponential closed form {closed_err:.1e}, FD first "
                            f"{max(first):.1e} <= 1e-6, second {max(second):.1e} <= 1e-5, "
                            f"{elapsed:.1f} s < 30 s")


def test_criterion_3_linear_oracle():
    tr = integrate(LinearModel([[0.0, 1.0], [-1.0, 0.0]]), [1.0, 0.0], [], 0.0,
                   [0.0, np.pi / 2], SensitivityOrder.FIRST, IntegratorConfig(substeps=256))
    err = float(np.max(np.abs(tr.phi[-1] - np.array([[0.0, 1.0], [-1.0, 0.0]]))))
    assert record_criterion(3, err <= 1e-8, f"|Phi(pi/2) - [[0,1],[-1,0]]| = {err:.1e} <= 1e-8")


@pytest.mark.slow
def test_criterion_4_twotank_round_trip():
    sc = twotank_scenario(p=TWOTANK_ESTIMATE)
    ds = generate_synthetic(sc)
    truth = DecisionVector(sc.x0, sc.p)
    worst_err, worst_time, failed = 0.0, 0.0, 0
    for seed in range(20):
        guess = perturbed_guesses(truth, 0.2, 1, seed)[0]
        start = time.perf_counter()
        rep = newton_solve(sc.model, ds, guess)
        elapsed = time.perf_counter() - start
        err = float(np.max(np.abs(rep.estimate.p / truth.p - 1)))
        worst_err, worst_time = max(worst_err, err), max(worst_time, elapsed)
        failed += not (rep.converged and err <= 1e-4 and elapsed < 60)
    assert record_criterion(4, failed == 0, f"20 seeds, worst relative error {worst_err:.1e} "
                            f"<= 1e-4, slowest run {worst_time:.2f} s < 60 s")


def test_criterion_5_newton_behaviour():
    t = np.linspace(0.0, 2.0, 11)
    ds = make_dataset(t, (1.5 * np.exp(0.4 * t))[:, None])
    truth = DecisionVector([1.5], [0.4], [True])
    rep = newton_solve(ExponentialModel(), ds, truth.with_values([1.2, 0.1]))
    J = [r.J for r in rep.history]
    decreasing = all(b < a for a, b in zip(J, J[1:]))
    err = [float(np.max(np.abs(r.values - truth.values))) for r in rep.history]
    tail = [e for e in err if e > 1e-6]
    ratios = [b / a for a, b in zip(tail, tail[1:])]
    superlinear = len(ratios) >= 2 and ratios[-1] < ratios[-2] and ratios[-1] < 0.1

    tq = np.linspace(0.0, 4.0, 21)
    model = DriftModel()
    dtruth = DecisionVector([0.3], [0.8, -0.5], [True])
    u = np.sin(tq)
    y = integrate(model, dtruth.x0, dtruth.p, make_dataset(tq, np.zeros((21, 1)), u)
                  .input_signal(), tq, SensitivityOrder.STATE).x
    quad = newton_solve(model, make_dataset(tq, y.copy(), u), dtruth.with_values([1.0, 0.1, 0.2]),
                        OptimizerConfig(grad_tol=1e-12))
    ok = rep.converged and decreasing and superlinear and quad.converged and quad.iterations == 1
    assert record_criterion(5, ok, f"J strictly decreasing={decreasing}, terminal error ratios "
                            f"{', '.join(f'{r:.1e}' for r in ratios[-2:])}; quadratic cost "
                            f"converged in {quad.iterations} iteration(s)")


def _dataset_run(config, env):
    cfg = yaml.safe_load((CONFIGS / config).read_text())
    cfg["data"]["path"] = os.environ[env]
    from tensorsysid.cli import RunConfig
    run = Run(RunConfig.model_validate(cfg), CONFIGS)
    run.load_data()
    rep = newton_solve(run.model, run.train, run.decision(), run.optimizer, run.integrator)
    ds = run.validation if run.validation is not None else run.train
    return rep, run.evaluator(ds, run.validation is not None)(rep.estimate)


@pytest.mark.dataset
def test_criterion_6_measured_data():
    if not (os.environ.get("TENSORSYSID_SILVERBOX_CSV")
            and os.environ.get("TENSORSYSID_TWOTANK_DATA")):
        ACCEPTANCE[6] = ("SKIP criterion 6: set TENSORSYSID_SILVERBOX_CSV and "
                         "TENSORSYSID_TWOTANK_DATA to the measured records")
        pytest.skip("benchmark data files not supplied")
    _, sb_gof = _dataset_run("silverbox.yaml", "TENSORSYSID_SILVERBOX_CSV")
    _, tt_gof = _dataset_run("twotank.yaml", "TENSORSYSID_TWOTANK_DATA")
    ok = sb_gof >= 0.958 and abs(100 * tt_gof - 79.1) <= 0.5
    assert record_criterion(6, ok, f"Silverbox validation GOF {100 * sb_gof:.3f}% >= 95.8%, "
                            f"two-tank GOF {100 * tt_gof:.3f}% within 79.1 +- 0.5")


@pytest.mark.slow
def test_criterion_7_robustness_sweep():
    from tensorsysid.cli import load_config
    run = Run(load_config(CONFIGS / "silverbox_surrogate.yaml"), CONFIGS)
    run.load_data()
    guess = run.decision()
    decades = np.log10(np.max(np.abs(guess.values)) / np.min(np.abs(guess.values)))
    s = run.cfg.sweep
    _, table = run_sweep(run.model, run.train, guess, tolerances=s.tolerances, count=s.count,
                         fraction=s.fraction, seed=run.cfg.seed, solvers=s.solvers,
                         cfg=run.optimizer, integrator=run.integrator,
                         evaluator=FitEvaluator(run.model, run.train))
    cell = {(r["solver"], r["tolerance"]): r for r in table}
    rate = {k: v["converged_rate"] for k, v in cell.items()}
    ok = decades >= 6 and rate[("analytic", 1e-14)] > rate[("fd", 1e-14)]
    for tol in s.tolerances:
        a, f = cell[("analytic", tol)]["best_gof"], cell[("fd", tol)]["best_gof"]
        ok &= a is not None and (f is None or a >= f)
    rows = "; ".join(
        f"{tol:.0e}: analytic {100 * rate[('analytic', tol)]:.0f}% / fd "
        f"{100 * rate[('fd', tol)]:.0f}%" for tol in s.tolerances)
    best = cell[("analytic", 1e-14)]["best_gof"]
    assert record_criterion(7, ok, f"surrogate spans {decades:.1f} decades, K={s.count}; "
                            f"initiated+converged {rows}; analytic best GOF {100 * best:.2f}%")


@pytest.mark.slow
def test_criterion_8_mutation_sensitivity():
    caught, total, missed = 0, 0, []
    for model in BENCHMARKS:
        for partial, index in mutation_targets(model):
            total += 1
            rep = run_all_checks(MutatedModel(model, partial, index), seed=0,
                                 stop_on_failure=True)
            if rep.passed:
                missed.append(f"{model!r}.{partial}{list(index)}")
            else:
                caught += 1
    assert record_criterion(8, not missed and total > 0,
                            f"{caught}/{total} single-entry sign flips caught"
                            + (f"; missed {missed}" if missed else ""))
