import numpy as np
import pytest

from cheegerlab.cli import RunConfig, run
from cheegerlab.errors import UnknownScenario
from cheegerlab.scenarios import SCENARIOS, load_scenario

from conftest import scenario


@pytest.mark.parametrize("name", SCENARIOS)
def test_every_scenario_loads(name):
    sc = load_scenario(name)
    assert sc.name == name and sc.action.total.dim >= 1 and sc.notes


def test_unknown_scenario():
    with pytest.raises(UnknownScenario):
        load_scenario("klein_bottle")


def test_hypothesis_flags():
    flags = {n: scenario(n).hypothesis for n in SCENARIOS}
    assert flags["torus_submersion"] is False
    assert all(flags[n] for n in ("hopf_berger", "cylinder_pair", "sphere_pair"))


def test_controls_are_declared():
    assert scenario("broken_groupoid").control == "axioms"
    assert scenario("broken_invariance").control == "transverse_invariance"
    assert all(scenario(n).control is None for n in ("hopf_berger", "cylinder_pair", "sphere_pair",
                                                     "torus_submersion"))


@pytest.mark.parametrize("name", ["hopf_berger", "cylinder_pair", "torus_submersion", "sphere_pair"])
def test_validator_verdicts_agree_across_stencil_orders(name):
    verdicts = []
    for order in (2, 4):
        status, rep = run(RunConfig("validate", name, [0.5, 10.0], n_samples=8, seed=3, fd_order=order))
        verdicts.append((status, rep["verdict"]))
    assert verdicts[0] == verdicts[1] == (0, "pass")


def test_sampled_points_avoid_chart_edges(rng):
    for name in ("hopf_berger", "cylinder_pair", "sphere_pair"):
        P = scenario(name).action.total
        for x in P.sample_ambient(rng, 64):
            c = P.chart(P.preferred_chart_of(x))
            assert float(c.depth(x)) > 0.1
