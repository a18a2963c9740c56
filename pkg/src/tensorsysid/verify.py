"""Derivative verification harness.

Every analytic quantity the identification relies on is compared with a
finite-difference oracle at seeded random points drawn from the model's
declared boxes:

* model partials against central differences of the next-lower derivative,
* transition matrices and tensors against re-integrated trajectories,
* the cost gradient against differences of the cost,
* the cost Hessian against differences of the analytic gradient,
* symmetry of the Hessian and of the second-order tensors.

Errors are relative and measured in scaled coordinates (each differentiated
axis multiplied by its coordinate's typical magnitude), so parameters of very
different size are compared on equal footing.
"""
from dataclasses import asdict, dataclass, field
from typing import List

import numpy as np

from .benchmarks import InputSpec, SyntheticScenario, generate_synthetic
from .cost import cost_report, evaluate_cost
from .data import Dataset
from .model import FLOW_PARTIALS, OUTPUT_PARTIALS, DynamicsModel, fd_fill_derivatives
from .sensitivity import SensitivityOrder, decision_scale, fd_transition_check, integrate

DEFAULT_TOLERANCES = {"first": 1e-6, "second": 1e-5, "symmetry": 1e-9}
CHECKS = ("partials", "transition", "gradient", "hessian", "symmetry")

_FIRST = ("f_x", "f_p", "c_x", "c_p")
_SECOND = ("f_xx", "f_xp", "f_px", "f_pp", "c_xx", "c_xp", "c_px", "c_pp")


@dataclass
class CheckResult:
    name: str
    max_error: float
    tolerance: float
    passed: bool
    points: int
    detail: str = ""


@dataclass
class CheckReport:
    model: str
    seed: int
    tolerances: dict
    results: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    @property
    def failures(self):
        return [r for r in self.results if not r.passed]

    def result(self, name):
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def add(self, name, errors, tol, detail=""):
        err = max(errors) if errors else 0.0
        err = float(err) if np.isfinite(err) else float("inf")
        self.results.append(CheckResult(name, err, tol, bool(err <= tol), len(errors), detail))

    def to_dict(self):
        out = asdict(self)
        out["passed"] = self.passed
        for r in out["results"]:
            if not np.isfinite(r["max_error"]):
                r["max_error"] = None
        return out


def relative_error(a, b):
    """``max|a - b| / max(max|a|, max|b|)``; 0 when both are zero."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    diff = float(np.max(np.abs(a - b), initial=0.0))
    ref = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)))
    if not np.isfinite(diff):
        return float("inf")
    return diff / ref if ref > 0 else diff


def symmetry_error(T, axes):
    """Relative asymmetry of ``T`` under the axis permutation ``axes``."""
    T = np.asarray(T, float)
    return relative_error(T, np.transpose(T, axes))


class MutatedModel(DynamicsModel):
    """``base`` with one entry of one analytic partial multiplied by ``factor``.

    Used to confirm the checks catch corrupted derivatives.  The native kernel
    is disabled so the mutation reaches every integration.
    """

    def __init__(self, base, partial, index, factor=-1.0):
        if partial not in FLOW_PARTIALS + OUTPUT_PARTIALS:
            raise ValueError(f"unknown partial {partial!r}")
        self.base = base
        self.partial = partial
        self.index = tuple(index)
        self.factor = float(factor)
        for attr in ("dims", "state_floor", "state_box", "param_box", "input_box",
                     "sampling_period", "param_names", "state_names"):
            setattr(self, attr, getattr(base, attr))
        self.name = f"mutated({base.name}.{partial}{list(self.index)})"

    def _mutate(self, value, batch=False):
        value = np.array(value, dtype=float)
        if batch:
            value[(slice(None),) + self.index] *= self.factor
        else:
            value[self.index] *= self.factor
        return value

    def flow(self, t, x, p, u, order=2):
        d = self.base.flow(t, x, p, u, order)
        if self.partial in d._fields and getattr(d, self.partial) is not None:
            d = d._replace(**{self.partial: self._mutate(getattr(d, self.partial))})
        return d

    def output(self, t, x, p, u, order=2):
        d = self.base.output(t, x, p, u, order)
        if self.partial in d._fields and getattr(d, self.partial) is not None:
            d = d._replace(**{self.partial: self._mutate(getattr(d, self.partial))})
        return d

    def output_batch(self, t, X, p, U, order=2):
        d = self.base.output_batch(t, X, p, U, order)
        if self.partial in d._fields and getattr(d, self.partial) is not None:
            d = d._replace(**{self.partial: self._mutate(getattr(d, self.partial), batch=True)})
        return d


def _forward(name):
    def method(self, t, x, p, u):
        value = getattr(self.base, name)(t, x, p, u)
        return self._mutate(value) if name == self.partial else value
    method.__name__ = name
    return method


for _name in FLOW_PARTIALS + OUTPUT_PARTIALS:
    setattr(MutatedModel, _name, _forward(_name))


def perturb_partial(model, partial, index, factor=-1.0):
    """Shorthand for :class:`MutatedModel`."""
    return MutatedModel(model, partial, index, factor)


def mutation_targets(model, n_points=10, seed=0, partials=_SECOND):
    """``(partial, index)`` pairs whose analytic value is nonzero at some sample point.

    Entries that vanish everywhere cannot be corrupted by a sign flip, so they
    are left out.
    """
    points = sample_points(model, n_points, seed)
    targets = []
    for name in partials:
        seen = None
        for x, p, u in points:
            nz = np.asarray(getattr(model, name)(0.0, x, p, u)) != 0
            seen = nz if seen is None else seen | nz
        targets.extend((name, tuple(int(i) for i in idx)) for idx in np.argwhere(seen))
    return targets


def _box(box, size, name):
    if box is None:
        return np.tile([-1.0, 1.0], (size, 1))
    box = np.asarray(box, float).reshape(size, 2)
    if np.any(box[:, 0] > box[:, 1]):
        raise ValueError(f"{name} box has lo > hi")
    return box


def sample_points(model, count, seed):
    """``count`` seeded ``(x, p, u)`` triples drawn uniformly from the model boxes."""
    rng = np.random.default_rng(seed)
    n, m = model.dims.n_states, model.dims.n_params
    xb = _box(model.state_box, n, "state")
    pb = _box(model.param_box, m, "parameter")
    ub = model.input_box
    pts = []
    for _ in range(count):
        x = rng.uniform(xb[:, 0], xb[:, 1])
        p = rng.uniform(pb[:, 0], pb[:, 1]) if m else np.zeros(0)
        u = float(rng.uniform(ub[0], ub[1]))
        pts.append((x, p, u))
    return pts


def _typical(box, size):
    b = _box(box, size, "")
    t = np.max(np.abs(b), axis=1)
    return np.where(t > 0, t, 1.0)


def _scaled_partial(value, name, sx, sp):
    """Multiply each differentiated axis of a partial by its typical magnitude."""
    v = np.asarray(value, float)
    for ax, wrt in enumerate(name[2:], start=1):
        s = sx if wrt == "x" else sp
        shape = [1] * v.ndim
        shape[ax] = len(s)
        v = v * s.reshape(shape)
    return v


def _default_dataset(model, seed, horizon):
    """Short synthetic record at the model's box centre, excited within its input box."""
    n, m = model.dims.n_states, model.dims.n_params
    x0 = _box(model.state_box, n, "state").mean(axis=1)
    p = _box(model.param_box, m, "parameter").mean(axis=1) if m else np.zeros(0)
    lo, hi = model.input_box
    sc = SyntheticScenario(model=model, x0=x0, p=p, n_samples=horizon,
                           sampling_period=model.sampling_period,
                           input=InputSpec(kind="steps", low=lo, high=hi, hold=5), seed=seed)
    return generate_synthetic(sc)


def _check_partials(report, model, points, tol):
    n, m = model.dims.n_states, model.dims.n_params
    sx = _typical(model.state_box, n)
    sp = _typical(model.param_box, m) if m else np.zeros(0)
    # first derivatives from f and c; second from the analytic first derivatives
    fd1 = fd_fill_derivatives(model, replace=_FIRST, typical_x=sx, typical_p=sp)
    fd2 = fd_fill_derivatives(model, replace=_SECOND, typical_x=sx, typical_p=sp)
    for names, fd, key in ((_FIRST, fd1, "first"), (_SECOND, fd2, "second")):
        for name in names:
            errs = []
            detail = ""
            for x, p, u in points:
                pair, msg = _safe(lambda: (getattr(model, name)(0.0, x, p, u),
                                           getattr(fd, name)(0.0, x, p, u)))
                if pair is None:
                    errs.append(float("inf"))
                    detail = msg
                    continue
                errs.append(relative_error(_scaled_partial(pair[0], name, sx, sp),
                                           _scaled_partial(pair[1], name, sx, sp)))
            report.add(f"partial.{name}", errs, tol[key], detail)


def _safe(fn, *args):
    try:
        return fn(*args), ""
    except Exception as exc:  # recorded, not raised
        return None, f"{type(exc).__name__}: {exc}"


def _cost_at(model, ds, d, n):
    traj = integrate(model, d[:n], d[n:], ds.input_signal(), ds.times, SensitivityOrder.STATE)
    return evaluate_cost(traj, model, d[n:], ds)[0]


def _grad_hess_at(model, ds, d, n, order=SensitivityOrder.SECOND):
    traj = integrate(model, d[:n], d[n:], ds.input_signal(), ds.times, order)
    rep = cost_report(traj, model, d[n:], ds)
    return rep.gradient, (rep.hessian if order == SensitivityOrder.SECOND else None)


def _check_cost(report, model, ds, points, tol, step, which):
    n = model.dims.n_states
    g_err, h_err, s_err = [], [], []
    detail = ""
    for x, p, _ in points:
        d = np.concatenate([x, p])
        s = decision_scale(d)
        k = len(d)
        res, msg = _safe(_grad_hess_at, model, ds, d, n)
        if res is None:
            g_err.append(float("inf"))
            h_err.append(float("inf"))
            s_err.append(float("inf"))
            detail = msg
            continue
        g, H = res
        Hs = H * np.outer(s, s)
        if "gradient" in which:
            fd = np.empty(k)
            ok = True
            for i in range(k):
                e = np.zeros(k)
                e[i] = step * s[i]
                hi, msg_hi = _safe(_cost_at, model, ds, d + e, n)
                lo, msg_lo = _safe(_cost_at, model, ds, d - e, n)
                if hi is None or lo is None:
                    ok = False
                    detail = msg_hi or msg_lo
                    break
                fd[i] = (hi - lo) / (2 * step)
            g_err.append(relative_error(g * s, fd) if ok else float("inf"))
        if "hessian" in which:
            fdH = np.empty((k, k))
            ok = True
            for i in range(k):
                e = np.zeros(k)
                e[i] = step * s[i]
                hi, msg_hi = _safe(_grad_hess_at, model, ds, d + e, n, SensitivityOrder.FIRST)
                lo, msg_lo = _safe(_grad_hess_at, model, ds, d - e, n, SensitivityOrder.FIRST)
                if hi is None or lo is None:
                    ok = False
                    detail = msg_hi or msg_lo
                    break
                fdH[:, i] = (hi[0] - lo[0]) * s / (2 * step)
            h_err.append(relative_error(Hs, fdH) if ok else float("inf"))
        if "symmetry" in which:
            s_err.append(symmetry_error(Hs, (1, 0)))
    if "gradient" in which:
        report.add("cost.gradient", g_err, tol["first"], detail)
    if "hessian" in which:
        report.add("cost.hessian", h_err, tol["second"], detail)
    if "symmetry" in which:
        report.add("cost.hessian_symmetry", s_err, tol["symmetry"], detail)


def _check_tensor_symmetry(report, model, ds, points, tol):
    errs = {"phi1": [], "theta1": [], "chi_duality": []}
    detail = ""
    for x, p, _ in points:
        traj, msg = _safe(integrate, model, x, p, ds.input_signal(), ds.times,
                          SensitivityOrder.SECOND)
        if traj is None:
            for v in errs.values():
                v.append(float("inf"))
            detail = msg
            continue
        sx, sp = decision_scale(x), decision_scale(p)
        phi1 = traj.phi1 * sx[:, None] * sx
        th1 = traj.theta1 * sp[:, None] * sp
        chi1 = traj.chi1 * sx[:, None] * sp
        chi2 = traj.chi2 * sp[:, None] * sx
        errs["phi1"].append(symmetry_error(phi1, (0, 1, 3, 2)))
        errs["theta1"].append(symmetry_error(th1, (0, 1, 3, 2)))
        errs["chi_duality"].append(relative_error(chi2, np.transpose(chi1, (0, 1, 3, 2))))
    for k, v in errs.items():
        report.add(f"symmetry.{k}", v, tol["symmetry"], detail)


def _check_transition(report, model, ds, points, tol, bump):
    first, second = [], []
    detail = ""
    for x, p, _ in points:
        res, msg = _safe(fd_transition_check, model, x, p, ds.input_signal(), None, bump)
        if res is None or res.failures:
            first.append(float("inf"))
            second.append(float("inf"))
            detail = msg or str(next(iter(res.failures.values())))
            continue
        first.append(res.max_error(["phi", "theta"]))
        second.append(res.max_error(["phi1", "theta1", "chi1", "chi2"]))
    report.add("transition.first_order", first, tol["first"], detail)
    report.add("transition.second_order", second, tol["second"], detail)


def run_all_checks(model, data=None, seed=0, tolerances=None, n_points=10, horizon=20,
                   checks=CHECKS, fd_step=1e-6, bump=1e-5, stop_on_failure=False):
    """Run the verification suite and return a :class:`CheckReport`.

    Parameters
    ----------
    model : DynamicsModel
        Model with analytic derivatives.
    data : Dataset or SyntheticScenario, optional
        Inputs (and observations) to integrate over; only the first
        ``horizon`` samples are used.  Defaults to a short synthetic record.
    seed : int
        Seeds the evaluation points and the default record.
    tolerances : dict, optional
        Overrides for ``"first"``, ``"second"`` and ``"symmetry"``.
    n_points : int
        Number of random evaluation points (at least 10 recommended).
    checks : sequence of str
        Subset of ``CHECKS`` to run.
    fd_step, bump : float
        Relative steps of the cost and trajectory difference oracles.
    stop_on_failure : bool
        Skip the remaining check groups once one has failed.

    Failures and exceptions are recorded in the report, never raised.
    """
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(tolerances or {})
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks {sorted(unknown)}")
    if isinstance(data, SyntheticScenario):
        data = generate_synthetic(data)
    if data is None:
        data = _default_dataset(model, seed, horizon)
    elif not isinstance(data, Dataset):
        raise TypeError("data must be a Dataset or SyntheticScenario")
    ds = data.subset(np.arange(min(horizon, len(data))))
    points = sample_points(model, n_points, seed)
    report = CheckReport(model=getattr(model, "name", type(model).__name__), seed=seed,
                         tolerances=tol)

    groups = [
        ("partials", lambda: _check_partials(report, model, points, tol)),
        ("transition", lambda: _check_transition(report, model, ds, points, tol, bump)),
        ("symmetry", lambda: _check_tensor_symmetry(report, model, ds, points, tol)),
    ]
    cost_checks = [c for c in ("gradient", "hessian", "symmetry") if c in checks]
    if "gradient" in checks or "hessian" in checks:
        groups.append(("cost", lambda: _check_cost(report, model, ds, points, tol,
                                                   fd_step, cost_checks)))
    elif "symmetry" in checks:
        groups.append(("cost", lambda: _check_cost(report, model, ds, points, tol,
                                                   fd_step, ["symmetry"])))
    for name, run in groups:
        if name != "cost" and name not in checks:
            continue
        run()
        if stop_on_failure and not report.passed:
            break
    return report
