import json

import numpy as np
import pytest

from tensorsysid import (MutatedModel, SilverboxModel, TwoTankModel, mutation_targets,
                         run_all_checks, twotank_scenario)
from tensorsysid.verify import CHECKS, relative_error, sample_points, symmetry_error
from tensorsysid.toy import ExponentialModel, LinearModel, PendulumModel


@pytest.mark.parametrize("model", [TwoTankModel(), SilverboxModel("inverse_mass"),
                                   SilverboxModel("unit"), PendulumModel(), ExponentialModel()],
                         ids=repr)
def test_analytic_models_pass(model):
    rep = run_all_checks(model, seed=0)
    assert rep.passed, [(r.name, r.max_error, r.detail) for r in rep.failures]
    names = {r.name for r in rep.results}
    assert {"partial.f_xx", "transition.second_order", "cost.gradient", "cost.hessian",
            "cost.hessian_symmetry", "symmetry.chi_duality"} <= names
    assert all(r.points == 10 for r in rep.results if r.name.startswith("partial."))


def test_linear_model_tensors_vanish():
    model = LinearModel([[0.0, 1.0], [-1.0, 0.0]])
    rep = run_all_checks(model, seed=1)
    assert rep.passed
    assert rep.result("transition.second_order").max_error <= 1e-6


def test_scenario_input_accepted():
    rep = run_all_checks(TwoTankModel(), twotank_scenario(n_samples=30), seed=2,
                         checks=("transition",))
    assert rep.passed and {r.name for r in rep.results} == {"transition.first_order",
                                                            "transition.second_order"}
    with pytest.raises(ValueError):
        run_all_checks(TwoTankModel(), checks=("bogus",))
    with pytest.raises(TypeError):
        run_all_checks(TwoTankModel(), data=[1, 2, 3])


@pytest.mark.parametrize("target", [("f_xx", (0, 0, 0)), ("f_xp", (1, 0, 3)),
                                    ("f_px", (1, 2, 1))])
def test_sign_flip_caught_everywhere(target):
    # the corruption shows up in the partial check and, independently, downstream
    bad = MutatedModel(TwoTankModel(), *target)
    rep = run_all_checks(bad, seed=0)
    assert not rep.result(f"partial.{target[0]}").passed
    assert not rep.result("transition.second_order").passed
    assert not rep.result("cost.hessian").passed
    assert rep.result("transition.first_order").passed
    assert rep.result("cost.gradient").passed


def test_mutated_first_partial_fails_gradient():
    bad = MutatedModel(SilverboxModel("inverse_mass"), "f_p", (1, 0))
    rep = run_all_checks(bad, seed=0, checks=("gradient",))
    assert not rep.result("cost.gradient").passed


def test_mutation_targets_skip_structural_zeros():
    targets = mutation_targets(TwoTankModel())
    assert all(name != "f_pp" for name, _ in targets)
    assert ("f_xx", (0, 0, 0)) in targets and ("f_xx", (0, 1, 1)) not in targets
    with pytest.raises(ValueError):
        MutatedModel(TwoTankModel(), "g_xx", (0, 0, 0))


def test_deterministic_report():
    kw = dict(n_points=10, horizon=10, checks=("partials", "gradient", "symmetry"))
    a = run_all_checks(PendulumModel(), seed=7, **kw)
    b = run_all_checks(PendulumModel(), seed=7, **kw)
    assert json.dumps(a.to_dict(), sort_keys=True) == json.dumps(b.to_dict(), sort_keys=True)
    c = run_all_checks(PendulumModel(), seed=8, **kw)
    assert a.to_dict() != c.to_dict()


def test_sample_points_in_boxes():
    model = SilverboxModel()
    pts = sample_points(model, 50, seed=3)
    assert len(pts) == 50
    for x, p, u in pts:
        assert all(lo <= v <= hi for v, (lo, hi) in zip(x, model.state_box))
        assert all(lo <= v <= hi for v, (lo, hi) in zip(p, model.param_box))
        assert model.input_box[0] <= u <= model.input_box[1]


def test_error_metrics():
    assert relative_error(np.zeros(3), np.zeros(3)) == 0.0
    assert relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.2])) == pytest.approx(0.2 / 2.2)
    T = np.arange(8.0).reshape(2, 2, 2)
    assert symmetry_error(T + T.transpose(0, 2, 1), (0, 2, 1)) == 0.0
    assert symmetry_error(T, (0, 2, 1)) > 0


def test_report_serialisable_with_failures():
    rep = run_all_checks(MutatedModel(TwoTankModel(), "f_xx", (1, 1, 1)), seed=0,
                         stop_on_failure=True)
    assert not rep.passed
    assert {r.name.split(".")[0] for r in rep.results} == {"partial"}
    d = json.loads(json.dumps(rep.to_dict()))
    assert d["passed"] is False and d["seed"] == 0
    assert set(CHECKS) == {"partials", "transition", "gradient", "hessian", "symmetry"}
