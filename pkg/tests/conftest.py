import numpy as np
import pytest

from tensorsysid import NATIVE_AVAILABLE, Dataset, generate_synthetic
from tensorsysid.benchmarks import InputSpec, SyntheticScenario
from tensorsysid.toy import PendulumModel

BACKENDS = ["python"] + (["native"] if NATIVE_AVAILABLE else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def pendulum_data():
    """Short noisy pendulum record with a nonlinear, parameter-dependent output."""
    model = PendulumModel()
    sc = SyntheticScenario(model=model, x0=(0.4, -0.2), p=(1.3, 0.3, 0.6), n_samples=25,
                           sampling_period=0.1,
                           input=InputSpec(kind="steps", low=-1, high=1, hold=4),
                           noise=0.05, seed=3)
    return model, generate_synthetic(sc)


def make_dataset(times, outputs, inputs=None):
    times = np.asarray(times, float)
    inputs = np.zeros(len(times)) if inputs is None else inputs
    return Dataset(times, inputs, outputs)


# acceptance verdicts, filled by test_acceptance.py and echoed in the terminal summary
ACCEPTANCE = {}


def record_criterion(number, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[number])
