import numpy as np
import pytest

from cheegerlab.errors import ConstraintViolation, SamplerFailure
from cheegerlab.groupoids import (
    _map_jac,
    build_action_groupoid,
    build_pair_groupoid,
    build_submersion_groupoid,
    check_groupoid_axioms,
    orbit_tangent_basis,
    unit_arrow_frame,
    vertical_generators,
)
from cheegerlab.cheeger import action_vector
from cheegerlab.smoothcalc import DerivativeScheme, SmoothMap, kernel_basis
from cheegerlab.spaces import circle_atlas, point_atlas, sphere_atlas

from conftest import scenario

GOOD = ["hopf_berger", "cylinder_pair", "torus_submersion", "sphere_pair"]


def test_pair_groupoid_of_sphere_axioms():
    rep = check_groupoid_axioms(build_pair_groupoid(sphere_atlas(2)), 128, seed=2)
    assert rep.passed and max(rep.residuals.values()) < 1e-10


def test_pair_groupoid_conventions(rng):
    S1 = circle_atlas()
    G = build_pair_groupoid(S1)
    assert G.arrows.dim == 2
    p, q = S1.sample_ambient(rng, 2)
    w = np.concatenate([p, q])
    assert np.allclose(G.t.ambient(w), p) and np.allclose(G.s.ambient(w), q)
    assert np.allclose(G.inv.ambient(w), np.concatenate([q, p]))
    assert np.allclose(G.unit.ambient(p), np.concatenate([p, p]))


def test_pair_groupoid_multiplication(rng):
    S2 = sphere_atlas(2)
    G = build_pair_groupoid(S2)
    for _ in range(16):
        p3, p2, p1 = S2.sample_ambient(rng, 3)
        out = G.mul(np.concatenate([p3, p2]), np.concatenate([p2, p1]))
        assert np.max(np.abs(out - np.concatenate([p3, p1]))) < 1e-12


@pytest.mark.parametrize("name", GOOD)
def test_scenario_groupoids_pass(name):
    rep = check_groupoid_axioms(scenario(name).groupoid, 128, seed=5)
    assert rep.passed, rep.worst


@pytest.mark.parametrize("name", ["hopf_berger", "cylinder_pair", "sphere_pair", "torus_submersion"])
def test_action_groupoids_pass(name):
    rep = check_groupoid_axioms(build_action_groupoid(scenario(name).action), 64, seed=5)
    assert rep.passed and max(rep.residuals.values()) < 1e-10


def test_broken_fixture_fails():
    rep = check_groupoid_axioms(scenario("broken_groupoid").groupoid, 64, seed=5)
    assert not rep.passed
    assert max(rep.residuals["assoc"], rep.residuals["unit_left"], rep.residuals["unit_right"],
               rep.residuals["target_mul"]) > 1e-2


@pytest.mark.parametrize("name", GOOD)
def test_inverse_is_involutive(name, rng):
    G = scenario(name).groupoid
    g = G.sample_arrows(rng, 32)
    assert np.max(np.abs(G.inv.ambient(G.inv.ambient(g)) - g)) < 1e-10


@pytest.mark.parametrize("name", GOOD)
def test_source_fibers_are_regular(name, rng):
    G = scenario(name).groupoid
    dims = set()
    for x in G.sample_arrows(rng, 16):
        p = G.arrows.point(x)
        J = _map_jac(G.s, p, DerivativeScheme())
        dims.add(kernel_basis(J).shape[1])
    assert len(dims) == 1


def test_torus_submersion_groupoid(rng):
    sc = scenario("torus_submersion")
    G = sc.groupoid
    assert G.arrows.dim == 3
    x = G.objects.sample_ambient(rng, 1)[0]
    for _ in range(16):
        g = G.arrows_from(rng, x)
        assert np.max(np.abs(G.s.ambient(g) - x)) < 1e-12
        assert np.max(np.abs(G.t.ambient(g)[0:2] - x[0:2])) < 1e-10


def test_submersion_groupoid_over_point_is_pair_groupoid(rng):
    S1 = circle_atlas()
    T2 = build_pair_groupoid(S1).arrows
    f = SmoothMap(S1, point_atlas(), lambda x: np.zeros(np.shape(x)[:-1] + (0,)), "c")
    G = build_submersion_groupoid(f, T2, lambda z: np.asarray(z, float),
                                  lambda p, q: np.concatenate(np.broadcast_arrays(p, q), -1),
                                  lambda r, x: S1.sample_ambient(r, 1)[0])
    P = build_pair_groupoid(S1)
    w = T2.sample_ambient(rng, 8)
    for a, b in ((G.s, P.s), (G.t, P.t), (G.inv, P.inv)):
        assert np.allclose(a.ambient(w), b.ambient(w))
    assert check_groupoid_axioms(G, 64).passed


def test_submersion_groupoid_rejects_bad_chart():
    S1 = circle_atlas()
    T2 = build_pair_groupoid(S1).arrows
    f = SmoothMap(S1, S1, lambda x: x, "id")
    with pytest.raises(ConstraintViolation):
        build_submersion_groupoid(f, T2, lambda z: np.asarray(z, float),
                                  lambda p, q: np.concatenate([p, q], -1), lambda r, x: x)


def test_sampler_failure_is_reported():
    G = build_pair_groupoid(circle_atlas())
    G.arrows_from = lambda rng, x: np.array([1.0, 0.0, -1.0, 0.0])
    with pytest.raises(SamplerFailure):
        check_groupoid_axioms(G, 8)


def test_hopf_action_groupoid_is_full_product():
    A = scenario("hopf_berger").action
    assert A.fp.dim == 4 and A.fp.dim == A.groupoid.arrows.dim + A.total.dim


def _same_hopf_fiber(x, q):
    # q = e^{iθ}x  ⇔  hopf(q) = hopf(x)
    from cheegerlab.scenarios import hopf_map
    return np.max(np.abs(hopf_map(q) - hopf_map(x)))


ORBIT_DEFECT = {
    "hopf_berger": _same_hopf_fiber,
    "cylinder_pair": lambda x, q: np.max(np.abs(q[2:] - x[2:])),
    "torus_submersion": lambda x, q: np.max(np.abs(q[0:2] - x[0:2])),
    "sphere_pair": lambda x, q: abs(np.linalg.norm(q) - 1.0),
}


@pytest.mark.parametrize("name", GOOD)
def test_orbits_are_t_of_s_fibers(name, rng):
    A = scenario(name).action
    for x in A.total.sample_ambient(rng, 4):
        for _ in range(8):
            z = A.arrows_from(rng, x)
            assert np.max(np.abs(A.sbar.ambient(z) - x)) < 1e-12
            assert ORBIT_DEFECT[name](x, A.tbar.ambient(z)) < 1e-10


def test_orbit_dimensions():
    dims = {n: len(orbit_tangent_basis(scenario(n).action, scenario(n).action.total.sample(
        np.random.default_rng(0), 1)[0])) for n in GOOD}
    assert dims == {"hopf_berger": 1, "cylinder_pair": 1, "torus_submersion": 1, "sphere_pair": 2}


def test_torus_orbit_keeps_x(rng):
    A = scenario("torus_submersion").action
    x = A.total.sample_ambient(rng, 1)[0]
    for _ in range(16):
        q = A.tbar.ambient(A.arrows_from(rng, x))
        assert np.max(np.abs(q[0:2] - x[0:2])) < 1e-10


@pytest.mark.parametrize("name", GOOD)
def test_vertical_generators_lie_in_kernel(name, rng):
    A = scenario(name).action
    for p in A.total.sample(rng, 4):
        fr = unit_arrow_frame(A, p)
        V = vertical_generators(A, fr)
        assert np.max(np.abs(fr.J_tbar @ V), initial=0.0) < 1e-8


def test_hopf_action_vector_unit_length(rng):
    sc = scenario("hopf_berger")
    A = sc.action
    for p in A.total.sample(rng, 4):
        fr = unit_arrow_frame(A, p)
        X = action_vector(A, fr.K[:, 0], p, frame=fr).components
        x = A.total.ambient(p)
        fiber = A.total.vector_from_ambient(p, np.array([-x[1], x[0], -x[3], x[2]])).components
        G = sc.etaP.matrix(p)
        assert abs(np.sqrt(X @ G @ X) - 1.0) < 1e-6
        assert abs(abs(X @ G @ fiber) - 1.0) < 1e-6


def test_cylinder_action_vector_along_circle(rng):
    A = scenario("cylinder_pair").action
    p = A.total.sample(rng, 1)[0]
    fr = unit_arrow_frame(A, p)
    X = action_vector(A, fr.K[:, 0], p, frame=fr).components
    assert abs(abs(X[0]) - 1.0) < 1e-8 and np.max(np.abs(X[1:])) < 1e-8


def test_action_vector_of_zero(rng):
    A = scenario("cylinder_pair").action
    p = A.total.sample(rng, 1)[0]
    assert np.allclose(action_vector(A, np.zeros(1), p).components, 0.0)
