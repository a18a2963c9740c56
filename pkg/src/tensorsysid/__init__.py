"""Grey-box system identification with analytic transition-tensor derivatives.

The state ODE is integrated together with its first-order (``phi``,
``theta``) and second-order (``phi1``, ``theta1``, ``chi1``, ``chi2``)
sensitivities, from which the exact gradient and Hessian of the
output-error cost follow.  A damped Newton method minimises the cost; a
finite-difference variant of the same driver serves as the baseline.

Hot loops run in a compiled extension when it is available, otherwise in
NumPy; set ``TENSORSYSID_BACKEND=python`` to force the fallback.
"""
__version__ = "0.1.0"

from ._backend import NATIVE_AVAILABLE, get_kernels
from .benchmarks import (SilverboxModel, SyntheticScenario, InputSpec, TwoTankModel,
                         generate_synthetic, silverbox_derivatives, silverbox_scenario,
                         twotank_derivatives, twotank_scenario)
from .cost import CostReport, cost_report, evaluate_cost, gof, gradient, hessian
from .data import DataFormat, Dataset, load_dataset
from .errors import (ConfigError, DataError, DimensionError, FiniteDifferenceError,
                     IntegrationError, ModelEvaluationError, TensorSysIdError)
from .model import (DynamicsModel, InputSignal, ModelDims, fd_fill_derivatives, get_model,
                    register_model, registered_models)
from .optimizer import (DecisionVector, FitEvaluator, OptimizerConfig, RunReport,
                        fd_baseline_solve, newton_solve, regularize_hessian, run_sweep)
from .sensitivity import (AugmentedState, IntegratorConfig, SensitivityOrder, Trajectory,
                          augmented_rhs, fd_transition_check, init_augmented, integrate)
from .tensor import contract_first, contract_last2, mat_mul
from .verify import CheckReport, MutatedModel, mutation_targets, run_all_checks
from . import toy  # noqa: F401  registers the small test models

__all__ = [
    "NATIVE_AVAILABLE", "get_kernels",
    "SilverboxModel", "TwoTankModel", "SyntheticScenario", "InputSpec", "generate_synthetic",
    "silverbox_derivatives", "twotank_derivatives", "silverbox_scenario", "twotank_scenario",
    "CostReport", "cost_report", "evaluate_cost", "gof", "gradient", "hessian",
    "DataFormat", "Dataset", "load_dataset",
    "ConfigError", "DataError", "DimensionError", "FiniteDifferenceError",
    "IntegrationError", "ModelEvaluationError", "TensorSysIdError",
    "DynamicsModel", "InputSignal", "ModelDims", "fd_fill_derivatives", "get_model",
    "register_model", "registered_models",
    "DecisionVector", "FitEvaluator", "OptimizerConfig", "RunReport", "fd_baseline_solve",
    "newton_solve", "regularize_hessian", "run_sweep",
    "AugmentedState", "IntegratorConfig", "SensitivityOrder", "Trajectory", "augmented_rhs",
    "fd_transition_check", "init_augmented", "integrate",
    "contract_first", "contract_last2", "mat_mul",
    "CheckReport", "MutatedModel", "mutation_targets", "run_all_checks",
]
