"""Damped Newton identification of initial states and parameters.

``newton_solve`` uses the analytic gradient and Hessian propagated with the
transition tensors.  ``fd_baseline_solve`` runs the same driver with both
derived from central differences of the cost, which is the comparison
target for robustness experiments.
"""
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import numpy as np

from .cost import cost_report, evaluate_cost, gof
from .errors import FiniteDifferenceError, IntegrationError, ModelEvaluationError
from .model import DEFAULT_FD_STEP
from .sensitivity import (ClampWarning, IntegratorConfig, SensitivityOrder, decision_scale,
                          integrate)

_NUMERICAL_FAILURES = (IntegrationError, FiniteDifferenceError, ModelEvaluationError,
                       FloatingPointError, ZeroDivisionError, np.linalg.LinAlgError)


@dataclass
class DecisionVector:
    """Initial state and parameters, with masks saying which entries are estimated."""

    x0: np.ndarray
    p: np.ndarray
    free_x0: np.ndarray = None
    free_p: np.ndarray = None

    def __post_init__(self):
        self.x0 = np.array(self.x0, dtype=float).ravel()
        self.p = np.array(self.p, dtype=float).ravel()
        self.free_x0 = (np.zeros(len(self.x0), bool) if self.free_x0 is None
                        else np.array(self.free_x0, dtype=bool).ravel())
        self.free_p = (np.ones(len(self.p), bool) if self.free_p is None
                       else np.array(self.free_p, dtype=bool).ravel())
        if self.free_x0.shape != self.x0.shape or self.free_p.shape != self.p.shape:
            raise ValueError("mask lengths must match x0 and p")

    @property
    def free_index(self):
        """Positions of the free coordinates within ``concat(x0, p)``."""
        return np.concatenate([np.flatnonzero(self.free_x0),
                               len(self.x0) + np.flatnonzero(self.free_p)])

    @property
    def values(self):
        return np.concatenate([self.x0, self.p])[self.free_index]

    def __len__(self):
        return int(self.free_x0.sum() + self.free_p.sum())

    def unpack(self, values):
        """Full ``(x0, p)`` with the free coordinates replaced by ``values``."""
        values = np.asarray(values, dtype=float)
        if values.shape != (len(self),):
            raise ValueError(f"expected {len(self)} free values, got {values.shape}")
        full = np.concatenate([self.x0, self.p])
        full[self.free_index] = values
        return full[: len(self.x0)], full[len(self.x0):]

    def with_values(self, values):
        x0, p = self.unpack(values)
        return DecisionVector(x0, p, self.free_x0.copy(), self.free_p.copy())

    def labels(self, model=None):
        xn = getattr(model, "state_names", None) or [f"x{i}" for i in range(len(self.x0))]
        pn = getattr(model, "param_names", None) or [f"p{i}" for i in range(len(self.p))]
        names = [f"{n}(t0)" for n in xn] + list(pn)
        return [names[i] for i in self.free_index]


@dataclass
class OptimizerConfig:
    rel_tol: float = 1e-12
    abs_tol: float = 1e-14
    grad_tol: float = 1e-10
    max_iter: int = 100
    armijo_c: float = 1e-4
    backtrack_factor: float = 0.5
    min_step: float = 1e-12
    damping_init: float = 1e-3

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol", "grad_tol", "min_step", "damping_init"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if int(self.max_iter) < 0:
            raise ValueError("max_iter must be >= 0")
        self.max_iter = int(self.max_iter)

    def with_tolerance(self, tol):
        return replace(self, rel_tol=tol, abs_tol=tol)


@dataclass
class IterationRecord:
    iteration: int
    J: float
    grad_norm: float
    step_length: float
    damping: float
    values: np.ndarray


@dataclass
class RunReport:
    """Outcome of one solve.

    ``status`` is ``"converged"``, ``"max_iter"``, ``"line_search_failed"`` or
    ``"aborted"``; ``reason`` says which test fired.  ``initiated`` is False
    when not a single step could be taken.
    """

    solver: str
    status: str
    reason: str
    initiated: bool
    iterations: int
    J: float
    estimate: DecisionVector
    initial: DecisionVector
    history: List[IterationRecord] = field(default_factory=list)
    wall_time: float = 0.0
    message: str = ""
    clamp_hits: int = 0

    @property
    def converged(self):
        return self.status == "converged"

    def to_dict(self, model=None):
        labels = self.estimate.labels(model)
        return {
            "solver": self.solver,
            "status": self.status,
            "reason": self.reason,
            "initiated": self.initiated,
            "iterations": self.iterations,
            "J": _num(self.J),
            "estimates": dict(zip(labels, self.estimate.values.tolist())),
            "initial_guess": dict(zip(labels, self.initial.values.tolist())),
            "x0": self.estimate.x0.tolist(),
            "p": self.estimate.p.tolist(),
            "history": [
                {"iteration": r.iteration, "J": _num(r.J), "grad_norm": _num(r.grad_norm),
                 "step_length": r.step_length, "damping": r.damping}
                for r in self.history
            ],
            "message": self.message,
            "clamp_hits": self.clamp_hits,
        }


def _num(v):
    v = float(v)
    return v if np.isfinite(v) else None


def regularize_hessian(H, damping_init):
    """Shift ``H`` by the smallest ``mu`` in ``{0, damping_init * 2**k}`` that
    makes it positive definite.

    ``H`` is symmetrised first.  Returns ``(H + mu I, mu)``.

    Raises
    ------
    OverflowError
        If ``mu`` overflows before a Cholesky factorisation succeeds.
    """
    H = np.asarray(H, dtype=float)
    H = 0.5 * H + 0.5 * H.T
    eye = np.eye(len(H))
    mu = 0.0
    while True:
        trial = H + mu * eye
        try:
            np.linalg.cholesky(trial)
            return trial, mu
        except np.linalg.LinAlgError:
            pass
        mu = damping_init if mu == 0.0 else 2.0 * mu
        if not np.isfinite(mu):
            raise OverflowError("Hessian damping overflowed")


class Objective:
    """Cost of a dataset as a function of the free decision values."""

    def __init__(self, model, dataset, template, integrator=None, backend=None):
        self.model = model
        self.dataset = dataset
        self.template = template
        self.integrator = integrator or IntegratorConfig()
        self.backend = backend
        self.input = dataset.input_signal() if len(dataset) else 0.0
        self.index = template.free_index
        self.clamp_hits = 0

    def trajectory(self, values, order):
        """Integrate at ``values``; clamp hits are counted instead of warned about."""
        x0, p = self.template.unpack(values)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ClampWarning)
            traj = integrate(self.model, x0, p, self.input, self.dataset.times, order,
                             self.integrator, self.backend)
        return traj, p

    def cost(self, values):
        traj, p = self.trajectory(values, SensitivityOrder.STATE)
        return evaluate_cost(traj, self.model, p, self.dataset)[0]

    def analytic(self, values):
        """``(J, gradient, Hessian)`` over the free coordinates."""
        traj, p = self.trajectory(values, SensitivityOrder.SECOND)
        self.clamp_hits = traj.clamp_hits
        rep = cost_report(traj, self.model, p, self.dataset)
        idx = self.index
        return rep.J, rep.gradient[idx], rep.hessian[np.ix_(idx, idx)]

    def finite_difference(self, values):
        """``(J, gradient, Hessian)`` from central differences of the cost.

        Steps are ``eps**(1/3) * max(1, |d_i|)`` for the gradient and
        ``eps**(1/4) * max(1, |d_i|)`` for the Hessian.
        """
        d = np.asarray(values, dtype=float)
        k = len(d)

        def J(v, coord):
            try:
                val = self.cost(v)
            except _NUMERICAL_FAILURES as exc:
                raise FiniteDifferenceError(
                    f"cost evaluation failed perturbing coordinate {coord}: {exc}",
                    coordinate=("d", coord)) from exc
            if not np.isfinite(val):
                raise FiniteDifferenceError(
                    f"non-finite cost perturbing coordinate {coord}", coordinate=("d", coord))
            return val

        J0 = J(d, None)
        self.clamp_hits = self.trajectory(d, SensitivityOrder.STATE)[0].clamp_hits
        base = np.maximum(1.0, np.abs(d))
        hg = DEFAULT_FD_STEP * base
        hh = np.finfo(float).eps ** 0.25 * base
        g = np.empty(k)
        for i in range(k):
            e = np.zeros(k)
            e[i] = hg[i]
            g[i] = (J(d + e, i) - J(d - e, i)) / (2 * hg[i])
        H = np.empty((k, k))
        for i in range(k):
            ei = np.zeros(k)
            ei[i] = hh[i]
            H[i, i] = (J(d + ei, i) - 2 * J0 + J(d - ei, i)) / hh[i] ** 2
            for j in range(i):
                ej = np.zeros(k)
                ej[j] = hh[j]
                H[i, j] = H[j, i] = (J(d + ei + ej, i) - J(d + ei - ej, i)
                                     - J(d - ei + ej, i) + J(d - ei - ej, i)) / (4 * hh[i] * hh[j])
        return J0, g, H


def _cost_converged(J_prev, J_new, cfg):
    change = abs(J_prev - J_new)
    return change <= cfg.abs_tol or change / max(J_new, 1e-300) <= cfg.rel_tol


def _drive(objective, derivatives, initial, cfg, solver):
    start = time.perf_counter()
    d = initial.values.copy()
    s = decision_scale(d)
    history = []

    def report(status, reason, J, message=""):
        if objective.clamp_hits and not message:
            message = (f"states reached the clamp floor in {objective.clamp_hits} "
                       "evaluations at the final point")
        return RunReport(
            solver=solver, status=status, reason=reason,
            initiated=bool(len(history) > 1 or status == "converged"),
            iterations=len(history) - 1 if history else 0, J=J,
            estimate=initial.with_values(d), initial=initial, history=history,
            wall_time=time.perf_counter() - start, message=message,
            clamp_hits=objective.clamp_hits)

    try:
        J, g, H = derivatives(d)
        if not (np.isfinite(J) and np.all(np.isfinite(g)) and np.all(np.isfinite(H))):
            raise FloatingPointError("non-finite cost derivatives")
    except _NUMERICAL_FAILURES as exc:
        return report("aborted", "initial evaluation failed", float("nan"), str(exc))
    history.append(IterationRecord(0, J, float(np.max(np.abs(g * s), initial=0.0)),
                                   0.0, 0.0, d.copy()))

    for _ in range(cfg.max_iter):
        gz = g * s
        if np.max(np.abs(gz), initial=0.0) <= cfg.grad_tol:
            return report("converged", "grad_tol", J)
        try:
            Hr, mu = regularize_hessian(H * np.outer(s, s), cfg.damping_init)
            step = np.linalg.solve(Hr, -gz)
        except (OverflowError, np.linalg.LinAlgError) as exc:
            return report("aborted", "Hessian regularisation failed", J, str(exc))
        slope = float(gz @ step)

        alpha = 1.0
        while True:
            trial = d + alpha * s * step
            try:
                J_trial = objective.cost(trial)
            except _NUMERICAL_FAILURES:
                J_trial = float("inf")
            if np.isfinite(J_trial) and J_trial <= J + cfg.armijo_c * alpha * slope:
                break
            if alpha == 1.0 and np.isfinite(J_trial) and _cost_converged(J, J_trial, cfg):
                # full Newton step no longer changes the cost measurably
                return report("converged", "cost_tol", J)
            alpha *= cfg.backtrack_factor
            if alpha < cfg.min_step:
                return report("line_search_failed", "step below min_step", J)

        try:
            J_new, g_new, H_new = derivatives(trial)
            if not (np.all(np.isfinite(g_new)) and np.all(np.isfinite(H_new))):
                raise FloatingPointError("non-finite cost derivatives")
        except _NUMERICAL_FAILURES as exc:
            return report("aborted", "derivative evaluation failed", J, str(exc))
        J_prev = J
        d, J, g, H = trial, J_new, g_new, H_new
        history.append(IterationRecord(len(history), J, float(np.max(np.abs(g * s), initial=0.0)),
                                       alpha, mu, d.copy()))
        if _cost_converged(J_prev, J, cfg):
            return report("converged", "cost_tol", J)
    if np.max(np.abs(g * s), initial=0.0) <= cfg.grad_tol:
        return report("converged", "grad_tol", J)
    return report("max_iter", "iteration limit reached", J)


def newton_solve(model, dataset, initial_guess, cfg=None, integrator=None, backend=None):
    """Minimise the output-error cost with analytic derivatives.

    Each iteration solves ``H~ s = -g`` in coordinates scaled by the initial
    guess magnitudes, with ``H~`` the damped Hessian, and backtracks on the
    Armijo condition.  Divergence at the initial guess yields an ``"aborted"``
    report rather than an exception.
    """
    cfg = cfg or OptimizerConfig()
    obj = Objective(model, dataset, initial_guess, integrator, backend)
    return _drive(obj, obj.analytic, initial_guess, cfg, "analytic")


def fd_baseline_solve(model, dataset, initial_guess, cfg=None, integrator=None, backend=None):
    """Same driver as :func:`newton_solve`, derivatives from finite differences of the cost."""
    cfg = cfg or OptimizerConfig()
    obj = Objective(model, dataset, initial_guess, integrator, backend)
    return _drive(obj, obj.finite_difference, initial_guess, cfg, "fd")


SOLVERS = {"analytic": newton_solve, "fd": fd_baseline_solve}


# ---------------------------------------------------------------------------
# perturbation sweeps

def perturbed_guesses(template, fraction, count, seed):
    """``count`` copies of ``template`` with each free value scaled by ``1 + U(-fraction, fraction)``."""
    rng = np.random.default_rng(seed)
    base = template.values
    return [template.with_values(base * (1.0 + rng.uniform(-fraction, fraction, size=len(base))))
            for _ in range(count)]


@dataclass
class FitEvaluator:
    """Goodness of fit of an estimate on ``dataset``.

    ``x0`` overrides the estimated initial state entries where not NaN;
    ``x0_from_observation`` maps state index -> output index to take the
    initial state from the dataset's first observation.
    """

    model: object
    dataset: object
    x0: Optional[np.ndarray] = None
    x0_from_observation: Optional[dict] = None
    integrator: Optional[IntegratorConfig] = None
    backend: Optional[str] = None

    def initial_state(self, estimate):
        x0 = estimate.x0.copy()
        if self.x0 is not None:
            fixed = np.asarray(self.x0, float)
            x0 = np.where(np.isnan(fixed), x0, fixed)
        for si, oi in (self.x0_from_observation or {}).items():
            x0[int(si)] = self.dataset.outputs[0, int(oi)]
        return x0

    def simulate(self, estimate):
        traj = integrate(self.model, self.initial_state(estimate), estimate.p,
                         self.dataset.input_signal(), self.dataset.times,
                         SensitivityOrder.STATE, self.integrator, self.backend)
        return self.model.output_batch(self.dataset.times, traj.x, estimate.p,
                                       self.dataset.inputs, 0).c

    def __call__(self, estimate):
        return gof(self.dataset.outputs, self.simulate(estimate))


@dataclass
class SweepRun:
    solver: str
    tolerance: float
    index: int
    initiated: bool
    converged: bool
    status: str
    iterations: int
    J: Optional[float]
    gof: Optional[float]
    estimate: List[float]


def _sweep_task(args):
    solver, tol, index, model, dataset, guess, cfg, integrator, evaluator, backend = args
    rep = SOLVERS[solver](model, dataset, guess, cfg.with_tolerance(tol), integrator, backend)
    fit = None
    if rep.initiated and evaluator is not None:
        try:
            fit = evaluator(rep.estimate)
        except _NUMERICAL_FAILURES + (ValueError,):
            fit = None
        if fit is not None and not np.isfinite(fit):
            fit = None
    return SweepRun(solver, tol, index, rep.initiated, rep.converged, rep.status,
                    rep.iterations, _num(rep.J), fit, rep.estimate.values.tolist())


def run_sweep(model, dataset, template, tolerances=(1e-14, 1e-12, 1e-10), count=100,
              fraction=0.2, seed=0, solvers=("analytic", "fd"), cfg=None, integrator=None,
              evaluator=None, workers=1, backend=None):
    """Run every solver from ``count`` perturbed guesses at every tolerance.

    Guesses are drawn once from ``seed`` and shared by all cells.  Returns
    ``(runs, table)``; ``table`` has one row per (solver, tolerance) with
    initiation and convergence rates and the best goodness of fit.
    """
    cfg = cfg or OptimizerConfig()
    guesses = [template] if fraction == 0 and count == 1 else \
        perturbed_guesses(template, fraction, count, seed)
    tasks = [(s, tol, i, model, dataset, g, cfg, integrator, evaluator, backend)
             for s in solvers for tol in tolerances for i, g in enumerate(guesses)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            runs = list(pool.map(_sweep_task, tasks))
    else:
        runs = [_sweep_task(t) for t in tasks]
    return runs, sweep_table(runs)


def sweep_table(runs):
    rows = []
    cells = {}
    for r in runs:
        cells.setdefault((r.solver, r.tolerance), []).append(r)
    for (solver, tol), rs in cells.items():
        n = len(rs)
        fits = [r.gof for r in rs if r.gof is not None]
        rows.append({
            "solver": solver,
            "tolerance": tol,
            "runs": n,
            "initiated_rate": sum(r.initiated for r in rs) / n,
            "converged_rate": sum(r.initiated and r.converged for r in rs) / n,
            "best_gof": max(fits) if fits else None,
        })
    return rows


def sweep_payload(runs, table, seed):
    return {"seed": seed, "table": table, "runs": [asdict(r) for r in runs]}
