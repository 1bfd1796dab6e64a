import numpy as np
import pytest

from cheegerlab.cheeger import (
    DeformationConfig,
    cheeger_tensor,
    collapse_sweep,
    deformed_metric,
    fast_metric,
    general_metric,
    hat_metric,
    horizontal_lift_h,
    lift_identity_residual,
    orthonormal_split,
    recover_x,
    shape_tensor,
)
from cheegerlab.errors import HypothesisViolated, PathMismatch
from cheegerlab.groupoids import unit_arrow_frame, vertical_generators
from cheegerlab.smoothcalc import kernel_basis

from conftest import scenario

HYP = ["hopf_berger", "cylinder_pair", "sphere_pair"]


@pytest.mark.parametrize("name,expected", [("hopf_berger", np.eye(1)), ("cylinder_pair", np.eye(1)),
                                           ("sphere_pair", np.eye(2))])
def test_shape_tensor_values(name, expected, rng):
    sc = scenario(name)
    for p in sc.action.total.sample(rng, 4):
        sh = shape_tensor(sc.action, sc.Q, sc.etaP, p)
        assert np.max(np.abs(sh.matrix - expected)) < 1e-5


@pytest.mark.parametrize("name", HYP + ["torus_submersion"])
def test_shape_tensor_defining_identity(name, rng):
    sc = scenario(name)
    for p in sc.action.total.sample(rng, 4):
        sh = shape_tensor(sc.action, sc.Q, sc.etaP, p)
        assert np.max(np.abs(sh.Qk @ sh.matrix - sh.gram)) < 1e-8


@pytest.mark.parametrize("name", HYP)
def test_shape_tensor_is_well_defined(name, rng):
    sc = scenario(name)
    A = sc.action
    p = A.total.sample(rng, 1)[0]
    fr = unit_arrow_frame(A, p)
    sh = shape_tensor(A, sc.Q, sc.etaP, p, frame=fr)
    x = rng.normal(size=fr.K.shape[1])
    null = kernel_basis(fr.Xs) if fr.Xs.size else np.zeros((len(x), 0))
    x2 = x + null @ rng.normal(size=null.shape[1])
    x_rec = recover_x(fr, fr.Xs @ x2)
    assert np.max(np.abs(fr.Xs @ (sh.matrix @ x_rec) - fr.Xs @ (sh.matrix @ x))) < 1e-8


@pytest.mark.parametrize("name", HYP)
def test_cheeger_tensor_small_eps_limit(name, rng):
    sc = scenario(name)
    p = sc.action.total.sample(rng, 1)[0]
    for eps in (1e-3, 1e-5):
        ch = cheeger_tensor(sc.action, sc.Q, sc.etaP, DeformationConfig(eps), p)
        sh = shape_tensor(sc.action, sc.Q, sc.etaP, p)
        assert np.linalg.norm(ch.matrix - np.eye(len(ch.matrix)), 2) <= eps * np.linalg.norm(sh.matrix, 2) + 1e-8


def test_hopf_cheeger_eigenvalues(rng):
    sc = scenario("hopf_berger")
    p = sc.action.total.sample(rng, 1)[0]
    ch = cheeger_tensor(sc.action, sc.Q, sc.etaP, DeformationConfig(1.0), p)
    ev = np.sort(np.linalg.eigvals(ch.matrix).real)
    assert np.allclose(ev, [0.5, 1.0, 1.0], atol=1e-8)


@pytest.mark.parametrize("name", ["hopf_berger", "cylinder_pair"])
def test_cheeger_tensor_fixes_normal_vectors(name, rng):
    sc = scenario(name)
    A = sc.action
    p = A.total.sample(rng, 1)[0]
    fr = unit_arrow_frame(A, p)
    _, Nb = orthonormal_split(fr, sc.etaP.matrix(p))
    ch = cheeger_tensor(A, sc.Q, sc.etaP, DeformationConfig(3.0), p, fr)
    assert np.max(np.abs(ch.matrix @ Nb - Nb)) < 1e-8


@pytest.mark.parametrize("name", ["hopf_berger", "cylinder_pair"])
def test_normal_lift_is_trivial(name, rng):
    sc = scenario(name)
    A = sc.action
    p = A.total.sample(rng, 1)[0]
    fr = unit_arrow_frame(A, p)
    _, Nb = orthonormal_split(fr, sc.etaP.matrix(p))
    h = horizontal_lift_h(A, sc.Q, sc.etaP, DeformationConfig(2.0), p, Nb[:, 0], fr).components
    dG = A.groupoid.arrows.dim
    assert np.max(np.abs(h[:dG])) < 1e-12 and np.allclose(h[dG:], Nb[:, 0])
    # D t̄(0, ξ) = ξ
    u = fr.lift_to_fp(h)
    assert np.max(np.abs(fr.J_tbar @ u - Nb[:, 0])) < 1e-8


def test_hopf_vertical_lift_is_horizontal(rng):
    sc = scenario("hopf_berger")
    A = sc.action
    p = A.total.sample(rng, 1)[0]
    fr = unit_arrow_frame(A, p)
    X = fr.Xs[:, 0]
    cfg = DeformationConfig(1.0)
    h = horizontal_lift_h(A, sc.Q, sc.etaP, cfg, p, X, fr).components
    assert np.allclose(h[:1], -fr.K[:, 0], atol=1e-8) and np.allclose(h[1:], X)
    u = fr.lift_to_fp(h)
    G = hat_metric(A, sc.Q, sc.etaP, 1.0).matrix(fr.z)
    V = vertical_generators(A, fr)
    assert np.max(np.abs(V.T @ G @ u)) < 1e-7


def test_hopf_lift_identity(rng):
    sc = scenario("hopf_berger")
    A = sc.action
    for p in A.total.sample(rng, 6):
        X = rng.normal(size=3)
        r = lift_identity_residual(A, sc.Q, sc.etaP, DeformationConfig(float(rng.uniform(0.1, 10))), p, X)
        assert r["tangency"] < 1e-7 and r["deviation"] < 1e-7


@pytest.mark.parametrize("eps", [0.1, 1.0, 10.0, 100.0])
def test_hopf_berger_metric(eps, rng):
    sc = scenario("hopf_berger")
    A = sc.action
    for p in A.total.sample(rng, 3):
        fr = unit_arrow_frame(A, p)
        Ob, Nb = orthonormal_split(fr, sc.etaP.matrix(p))
        for g in (fast_metric(A, sc.Q, sc.etaP, eps), general_metric(A, sc.Q, sc.etaP, eps)):
            G = g.matrix(p)
            assert abs(Ob[:, 0] @ G @ Ob[:, 0] - 1.0 / (1.0 + eps)) < 1e-7
            assert np.allclose(Nb.T @ G @ Nb, np.eye(2), atol=1e-8)


@pytest.mark.parametrize("eps", [0.5, 4.0])
def test_cylinder_closed_forms(eps, rng):
    # fast formula gives 1/(1+ε) dx² + g; the pushforward through t̄ gives (1/ε) dx² + g
    sc = scenario("cylinder_pair")
    A = sc.action
    p = A.total.sample(rng, 1)[0]
    Gp = sc.etaP.matrix(p)
    F = fast_metric(A, sc.Q, sc.etaP, eps).matrix(p)
    N = general_metric(A, sc.Q, sc.etaP, eps).matrix(p)
    assert abs(F[0, 0] - 1.0 / (1.0 + eps)) < 1e-8 and abs(N[0, 0] - 1.0 / eps) < 1e-8
    assert np.allclose(F[1:, 1:], Gp[1:, 1:], atol=1e-10) and np.allclose(N[1:, 1:], Gp[1:, 1:], atol=1e-10)


@pytest.mark.parametrize("eps", [0.5, 2.0, 10.0])
def test_torus_general_path_closed_form(eps, rng):
    sc = scenario("torus_submersion")
    A = sc.action
    p = A.total.sample(rng, 1)[0]
    G = general_metric(A, sc.Q, sc.etaP, eps).matrix(p)
    assert np.allclose(G, np.diag([1.0 + 1.0 / eps, 1.0 / eps]), atol=1e-8)


def test_fast_path_requires_hypothesis():
    sc = scenario("torus_submersion")
    with pytest.raises(HypothesisViolated):
        deformed_metric(sc.action, sc.Q, sc.etaP, DeformationConfig(1.0, path="fast"))


def test_both_path_flags_disagreement(rng):
    sc = scenario("cylinder_pair")
    g = deformed_metric(sc.action, sc.Q, sc.etaP, DeformationConfig(1.0, path="both"))
    with pytest.raises(PathMismatch):
        g.matrix(sc.action.total.sample(rng, 1)[0])


def test_both_path_agrees_on_hopf(rng):
    sc = scenario("hopf_berger")
    g = deformed_metric(sc.action, sc.Q, sc.etaP, DeformationConfig(1.0, path="both"))
    g.matrix(sc.action.total.sample(rng, 1)[0])


def test_config_validation():
    with pytest.raises(ValueError):
        DeformationConfig(0.0)
    with pytest.raises(ValueError):
        DeformationConfig(1.0, path="sideways")


@pytest.mark.parametrize("name", HYP + ["torus_submersion"])
def test_collapse_is_monotone(name, rng):
    sc = scenario(name)
    pts = sc.action.total.sample(rng, 3)
    rows = collapse_sweep(sc.action, sc.Q, sc.etaP, [0.1, 0.5, 1, 4, 10, 100], pts)
    for i in range(3):
        seq = [r["orbit_norms"] for r in rows if r["point"] == i]
        for a, b in zip(seq, seq[1:]):
            assert all(y <= x + 1e-10 for x, y in zip(a, b))


def test_collapse_sweep_hopf_closed_form(rng):
    sc = scenario("hopf_berger")
    rows = collapse_sweep(sc.action, sc.Q, sc.etaP, [0.1, 1, 10, 100], sc.action.total.sample(rng, 2))
    for r in rows:
        assert abs(r["orbit_norms"][0] ** 2 - 1 / (1 + r["epsilon"])) < 1e-7


def test_collapse_sweep_torus_stretch(rng):
    sc = scenario("torus_submersion")
    rows = collapse_sweep(sc.action, sc.Q, sc.etaP, [0.1, 1, 10, 100], sc.action.total.sample(rng, 2))
    for r in rows:
        assert abs(r["normal_norms"][0] ** 2 - (1 + 1 / r["epsilon"])) < 1e-6


def test_collapse_sweep_rejects_unsorted_grid(rng):
    sc = scenario("hopf_berger")
    with pytest.raises(ValueError):
        collapse_sweep(sc.action, sc.Q, sc.etaP, [1.0, 0.5], sc.action.total.sample(rng, 1))
