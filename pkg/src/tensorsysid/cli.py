"""Command-line entry point: ``tensorsysid {simulate,check,identify,validate,sweep}``.

Every command reads a YAML run configuration (see ``configs/``), validates it
completely before any numerical work, and writes either a JSON report or a
CSV trajectory.  Exit codes: 0 success, 1 verification checks failed,
2 configuration error, 3 numerical abort, 4 data error.
"""
import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import __version__
from .benchmarks import InputSpec, SyntheticScenario, generate_synthetic
from .data import DataFormat, load_dataset, write_columns
from .errors import ConfigError, DataError, TensorSysIdError
from .model import get_model, registered_models
from .optimizer import (SOLVERS, DecisionVector, FitEvaluator, OptimizerConfig, run_sweep,
                        sweep_payload)
from .sensitivity import IntegratorConfig
from .verify import run_all_checks

log = logging.getLogger("tensorsysid")

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_DATA = 0, 1, 2, 3, 4

Column = Union[int, str]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    name: str
    options: Dict[str, Any] = Field(default_factory=dict)


class FormatSection(_Section):
    delimiter: Optional[str] = None
    skip_header: int = Field(0, ge=0)
    time_column: Optional[Column] = None
    input_column: Column = 0
    output_columns: List[Column] = Field(default_factory=lambda: [1], min_length=1)
    sampling_period: Optional[float] = Field(None, gt=0)
    t0: float = 0.0
    comment: str = "#"


class InputSection(_Section):
    kind: Literal["constant", "steps", "multisine", "array"] = "constant"
    level: float = 0.0
    low: float = 0.0
    high: float = 1.0
    hold: int = Field(1, ge=1)
    amplitude: float = 1.0
    n_tones: int = Field(10, ge=1)
    max_freq: float = Field(1.0, gt=0)
    values: Optional[List[float]] = None


class SyntheticSection(_Section):
    x0: List[float]
    p: List[float]
    n_samples: int = Field(ge=1)
    sampling_period: Optional[float] = Field(None, gt=0)
    input: InputSection = Field(default_factory=InputSection)
    noise: float = Field(0.0, ge=0)
    seed: int = 0
    substeps: int = Field(32, ge=1)


class DataSection(_Section):
    path: Optional[str] = None
    format: FormatSection = Field(default_factory=FormatSection)
    synthetic: Optional[SyntheticSection] = None
    train_rows: Optional[Tuple[int, int]] = None
    validation_rows: Optional[Tuple[int, int]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.path is None) == (self.synthetic is None):
            raise ValueError("give exactly one of data.path or data.synthetic")
        for rows in (self.train_rows, self.validation_rows):
            if rows is not None and not 1 <= rows[0] <= rows[1]:
                raise ValueError(f"row range {rows} must satisfy 1 <= first <= last")
        return self


class DecisionSection(_Section):
    x0: List[float]
    p: List[float]
    free_x0: Optional[List[bool]] = None
    free_p: Optional[List[bool]] = None
    x0_from_data: Dict[int, int] = Field(default_factory=dict)


class ValidationSection(_Section):
    x0: Optional[List[Optional[float]]] = None
    x0_from_data: Dict[int, int] = Field(default_factory=dict)


class EstimatesSection(_Section):
    x0: List[float]
    p: List[float]


class IntegratorSection(_Section):
    substeps: int = Field(8, ge=1)
    clamp_eps: float = Field(1e-12, gt=0)


class OptimizerSection(_Section):
    rel_tol: float = Field(1e-12, gt=0)
    abs_tol: float = Field(1e-14, gt=0)
    grad_tol: float = Field(1e-10, gt=0)
    max_iter: int = Field(100, ge=0)
    armijo_c: float = Field(1e-4, gt=0, lt=1)
    backtrack_factor: float = Field(0.5, gt=0, lt=1)
    min_step: float = Field(1e-12, gt=0)
    damping_init: float = Field(1e-3, gt=0)


class SweepSection(_Section):
    fraction: float = Field(0.2, ge=0, lt=1)
    count: int = Field(100, ge=1)
    tolerances: List[float] = Field(default_factory=lambda: [1e-14, 1e-12, 1e-10], min_length=1)
    solvers: List[Literal["analytic", "fd"]] = Field(default_factory=lambda: ["analytic", "fd"],
                                                     min_length=1)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _positive(self):
        if any(not t > 0 for t in self.tolerances):
            raise ValueError("sweep tolerances must be positive")
        return self


class CheckTolerances(_Section):
    first: float = Field(1e-6, gt=0)
    second: float = Field(1e-5, gt=0)
    symmetry: float = Field(1e-9, gt=0)


class CheckSection(_Section):
    n_points: int = Field(10, ge=1)
    horizon: int = Field(20, ge=2)
    tolerances: CheckTolerances = Field(default_factory=CheckTolerances)


class RunConfig(_Section):
    """Top-level configuration; unknown keys anywhere are rejected."""

    model: ModelSection
    data: DataSection
    decision: Optional[DecisionSection] = None
    validation: ValidationSection = Field(default_factory=ValidationSection)
    estimates: Optional[EstimatesSection] = None
    integrator: IntegratorSection = Field(default_factory=IntegratorSection)
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    solver: Literal["analytic", "fd"] = "analytic"
    sweep: SweepSection = Field(default_factory=SweepSection)
    check: CheckSection = Field(default_factory=CheckSection)
    seed: int = 0
    output: Optional[str] = None


def load_config(path):
    """Parse and validate a YAML config file; raises ConfigError."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


class Run:
    """A validated config resolved into model, data and decision objects."""

    def __init__(self, cfg, base_dir=Path(".")):
        self.cfg = cfg
        self.base_dir = Path(base_dir)
        self.model = self._model()
        dims = self.model.dims
        self.integrator = IntegratorConfig(cfg.integrator.substeps, cfg.integrator.clamp_eps)
        self.optimizer = OptimizerConfig(**cfg.optimizer.model_dump())
        d = cfg.decision
        if d is not None:
            self._check_len("decision.x0", d.x0, dims.n_states)
            self._check_len("decision.p", d.p, dims.n_params)
            if d.free_x0 is not None:
                self._check_len("decision.free_x0", d.free_x0, dims.n_states)
            if d.free_p is not None:
                self._check_len("decision.free_p", d.free_p, dims.n_params)
            self._check_map("decision.x0_from_data", d.x0_from_data)
        if cfg.estimates is not None:
            self._check_len("estimates.x0", cfg.estimates.x0, dims.n_states)
            self._check_len("estimates.p", cfg.estimates.p, dims.n_params)
        if cfg.validation.x0 is not None:
            self._check_len("validation.x0", cfg.validation.x0, dims.n_states)
        self._check_map("validation.x0_from_data", cfg.validation.x0_from_data)
        syn = cfg.data.synthetic
        if syn is not None:
            self._check_len("data.synthetic.x0", syn.x0, dims.n_states)
            self._check_len("data.synthetic.p", syn.p, dims.n_params)
        elif len(cfg.data.format.output_columns) != dims.n_outputs:
            raise ConfigError(f"data.format.output_columns has "
                              f"{len(cfg.data.format.output_columns)} entries, model has "
                              f"{dims.n_outputs} outputs")
        self.train = self.validation = None

    def _model(self):
        name = self.cfg.model.name
        if name not in registered_models():
            raise ConfigError(f"unknown model {name!r}; known: {sorted(registered_models())}")
        opts = dict(self.cfg.model.options)
        if name == "twotank":
            opts.setdefault("clamp_eps", self.cfg.integrator.clamp_eps)
        try:
            return get_model(name, **opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"model {name!r}: {exc}") from exc

    def _check_len(self, what, values, expected):
        if len(values) != expected:
            raise ConfigError(f"{what} has {len(values)} entries, model needs {expected}")

    def _check_map(self, what, mapping):
        for si, oi in mapping.items():
            if not (0 <= si < self.model.dims.n_states and 0 <= oi < self.model.dims.n_outputs):
                raise ConfigError(f"{what}: entry {si}: {oi} out of range")

    def load_data(self):
        """Read or generate the data and cut the training/validation windows."""
        data = self.cfg.data
        if data.synthetic is not None:
            s = data.synthetic
            try:
                spec = InputSpec(**s.input.model_dump())
                sc = SyntheticScenario(
                    model=self.model, x0=s.x0, p=s.p, n_samples=s.n_samples,
                    sampling_period=s.sampling_period or self.model.sampling_period,
                    input=spec, noise=s.noise, seed=s.seed, substeps=s.substeps)
                full = generate_synthetic(sc)
            except ValueError as exc:
                raise ConfigError(f"data.synthetic: {exc}") from exc
        else:
            path = Path(data.path)
            if not path.is_absolute():
                path = self.base_dir / path
            full = load_dataset(path, DataFormat(**data.format.model_dump()))
        self.train = full.slice_rows(*data.train_rows) if data.train_rows else full
        self.validation = (full.slice_rows(*data.validation_rows)
                           if data.validation_rows else None)
        return self

    def decision(self):
        d = self.cfg.decision
        if d is None:
            raise ConfigError("this command needs a 'decision' section")
        x0 = np.array(d.x0, float)
        for si, oi in d.x0_from_data.items():
            x0[si] = self.train.outputs[0, oi]
        return DecisionVector(x0, d.p, d.free_x0, d.free_p)

    def estimates(self, override=None):
        if override is not None:
            return DecisionVector(override["x0"], override["p"])
        if self.cfg.estimates is not None:
            return DecisionVector(self.cfg.estimates.x0, self.cfg.estimates.p)
        return self.decision()

    def evaluator(self, dataset, for_validation):
        if for_validation:
            v = self.cfg.validation
            x0 = None if v.x0 is None else np.array(
                [np.nan if e is None else e for e in v.x0], float)
            return FitEvaluator(self.model, dataset, x0=x0, x0_from_observation=v.x0_from_data,
                                integrator=self.integrator)
        return FitEvaluator(self.model, dataset, integrator=self.integrator)


def _write_json(payload, out):
    text = json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)
        log.info("wrote %s", out)


def _gof_or_none(evaluator, estimate):
    try:
        return evaluator(estimate)
    except (ArithmeticError, TensorSysIdError, ValueError) as exc:
        log.warning("goodness of fit unavailable: %s", exc)
        return None


def cmd_simulate(run, args):
    est = run.estimates(_read_estimates(args.estimates))
    ds = run.train
    ev = run.evaluator(ds, for_validation=False)
    y = ev.simulate(est)
    cols = [ds.times, ds.inputs]
    header = ["t", "u"]
    for g in range(ds.n_outputs):
        cols += [y[:, g], ds.outputs[:, g], ds.outputs[:, g] - y[:, g]]
        header += [f"y_sim{g}", f"y_obs{g}", f"residual{g}"]
    out = args.out or run.cfg.output
    write_columns(sys.stdout if out is None else out, cols, header)
    if out is not None:
        log.info("wrote %s", out)
    return EXIT_OK


def cmd_check(run, args):
    c = run.cfg.check
    rep = run_all_checks(run.model, run.train, seed=run.cfg.seed,
                         tolerances=c.tolerances.model_dump(), n_points=c.n_points,
                         horizon=c.horizon)
    for r in rep.results:
        log.info("%-28s %-4s err=%.3e tol=%.0e", r.name, "ok" if r.passed else "FAIL",
                 r.max_error, r.tolerance)
    _write_json({"command": "check", **rep.to_dict()}, args.out or run.cfg.output)
    return EXIT_OK if rep.passed else EXIT_CHECKS


def cmd_identify(run, args):
    guess = run.decision()
    solver = args.solver or run.cfg.solver
    start = time.perf_counter()
    rep = SOLVERS[solver](run.model, run.train, guess, run.optimizer, run.integrator)
    log.info("%s: %s (%s) after %d iterations, J=%.6e, %.2f s", solver, rep.status,
             rep.reason, rep.iterations, rep.J, time.perf_counter() - start)
    payload = {"command": "identify", "model": run.model.name, **rep.to_dict(run.model)}
    payload["training_gof"] = (_gof_or_none(run.evaluator(run.train, False), rep.estimate)
                               if rep.initiated else None)
    _write_json(payload, args.out or run.cfg.output)
    return EXIT_NUMERICAL if rep.status == "aborted" else EXIT_OK


def cmd_validate(run, args):
    est = run.estimates(_read_estimates(args.estimates))
    if run.validation is not None:
        ds, ev = run.validation, run.evaluator(run.validation, True)
    else:
        ds, ev = run.train, run.evaluator(run.train, False)
    try:
        fit = ev(est)
    except ValueError as exc:
        raise DataError(f"validation data: {exc}") from exc
    log.info("validation GOF = %.6f%%", 100 * fit)
    _write_json({"command": "validate", "model": run.model.name, "gof": fit,
                 "samples": len(ds), "x0": ev.initial_state(est).tolist(),
                 "p": est.p.tolist()}, args.out or run.cfg.output)
    return EXIT_OK


def cmd_sweep(run, args):
    s = run.cfg.sweep
    guess = run.decision()
    if run.validation is not None:
        ev = run.evaluator(run.validation, True)
    else:
        ev = run.evaluator(run.train, False)
    solvers = [args.solver] if args.solver else s.solvers
    runs, table = run_sweep(run.model, run.train, guess, tolerances=s.tolerances,
                            count=s.count, fraction=s.fraction, seed=run.cfg.seed,
                            solvers=solvers, cfg=run.optimizer, integrator=run.integrator,
                            evaluator=ev, workers=s.workers)
    for row in table:
        best = "-" if row["best_gof"] is None else f"{100 * row['best_gof']:.4f}%"
        log.info("%-8s tol=%.0e initiated=%5.1f%% converged=%5.1f%% best GOF=%s",
                 row["solver"], row["tolerance"], 100 * row["initiated_rate"],
                 100 * row["converged_rate"], best)
    payload = {"command": "sweep", "model": run.model.name, "fraction": s.fraction,
               "count": s.count, **sweep_payload(runs, table, run.cfg.seed)}
    _write_json(payload, args.out or run.cfg.output)
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "check": cmd_check, "identify": cmd_identify,
            "validate": cmd_validate, "sweep": cmd_sweep}


def _read_estimates(path):
    if path is None:
        return None
    try:
        data = json.loads(Path(path).read_text())
        return {"x0": data["x0"], "p": data["p"]}
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read estimates from {path}: {exc}") from exc


def build_parser():
    parser = argparse.ArgumentParser(
        prog="tensorsysid",
        description="Grey-box identification with analytic transition-tensor derivatives.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "simulate": "simulate the model and write t, u, outputs and residuals as CSV",
        "check": "run the derivative verification suite",
        "identify": "estimate the free initial states and parameters",
        "validate": "goodness of fit of estimates on the validation data",
        "sweep": "robustness comparison over perturbed initial guesses",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output file (default: stdout)")
        p.add_argument("--solver", choices=sorted(SOLVERS), default=None,
                       help="override the configured solver")
        p.add_argument("--estimates", default=None,
                       help="identify report whose x0/p replace the configured estimates")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.model_copy(update={"seed": args.seed})
        run = Run(cfg, Path(args.config).resolve().parent)
        run.load_data()
        if args.command in ("identify", "sweep"):
            run.decision()
        return COMMANDS[args.command](run, args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except DataError as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (ArithmeticError, TensorSysIdError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL
    except BrokenPipeError:
        # stdout closed early by a downstream consumer such as `head`
        sys.stderr.close()
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
