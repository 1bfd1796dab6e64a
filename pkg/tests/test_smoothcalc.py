import numpy as np
import pytest
from hypothesis import given, strategies as st

from cheegerlab.errors import RankInstability, StencilEscape
from cheegerlab.smoothcalc import (
    DerivativeScheme,
    SmoothMap,
    TangentVector,
    fd_gradient,
    fd_hessian,
    jacobian,
    kernel_basis,
    lie_bracket,
    product_atlas,
    second_partials,
)
from cheegerlab.spaces import (
    circle_atlas,
    euclidean_atlas,
    lift_matrix,
    push_matrix,
    sphere_atlas,
    torus_atlas,
)
from cheegerlab.scenarios import hopf_map

angles = st.floats(-3.0, 3.0)


@pytest.mark.parametrize("atlas", [circle_atlas(), sphere_atlas(2), sphere_atlas(3), torus_atlas(2),
                                   product_atlas(circle_atlas(), sphere_atlas(2))])
def test_chart_transitions_round_trip(atlas):
    assert atlas.check_transitions(64, seed=3) < 1e-12


@pytest.mark.parametrize("atlas", [circle_atlas(), sphere_atlas(2), sphere_atlas(3)])
def test_lift_push_match_finite_differences(atlas, rng):
    for p in atlas.sample(rng, 8):
        c = atlas.chart(p.chart)
        L = lift_matrix(c, p.coords)
        Lfd = np.swapaxes(fd_gradient(c.to_ambient, np.asarray(p.coords), 1e-4), -1, -2)
        assert np.allclose(L, Lfd, atol=1e-9)
        P = push_matrix(c, c.to_ambient(p.coords), atlas.ambient_dim)
        assert np.allclose(P @ L, np.eye(atlas.dim), atol=1e-12)


def test_jacobian_identity_on_circle():
    S1 = circle_atlas()
    f = SmoothMap(S1, S1, lambda x: x, "id")
    p = S1.point(np.array([np.cos(0.4), np.sin(0.4)]))
    assert np.allclose(jacobian(f, p, target_chart=p.chart), [[1.0]], atol=1e-12)


def test_jacobian_linear_projection_on_torus():
    T2, S1 = torus_atlas(2), circle_atlas()
    f = SmoothMap(T2, S1, lambda x: x[..., 0:2], "pr1")
    x = np.array([np.cos(0.3), np.sin(0.3), np.cos(0.7), np.sin(0.7)])
    p = T2.point(x)
    assert np.allclose(jacobian(f, p), [[1.0, 0.0]], atol=1e-12)


def test_hopf_jacobian_agrees_across_schemes(rng):
    S3, S2 = sphere_atlas(3), sphere_atlas(2)
    f = SmoothMap(S3, S2, hopf_map, "hopf")
    for p in S3.sample(rng, 5):
        J4 = jacobian(f, p, DerivativeScheme(4, 1e-3))
        ref = jacobian(f, p, DerivativeScheme(4, 5e-4))
        assert np.max(np.abs(J4 - ref)) < 1e-8


def test_step_halving_changes_little(rng):
    S3, S2 = sphere_atlas(3), sphere_atlas(2)
    f = SmoothMap(S3, S2, hopf_map, "hopf")
    for p in S3.sample(rng, 5):
        a = jacobian(f, p, DerivativeScheme(4, 1e-3))
        b = jacobian(f, p, DerivativeScheme(4, 5e-4))
        assert np.max(np.abs(a - b)) < 1e-8


@given(angles, angles, angles)
def test_composition_jacobian_is_product(a, b, c):
    S3, S2 = sphere_atlas(3), sphere_atlas(2)
    x = np.array([np.cos(a) * np.cos(b), np.cos(a) * np.sin(b), np.sin(a) * np.cos(c), np.sin(a) * np.sin(c)])
    rot = lambda y: np.stack([y[..., 1], y[..., 2], y[..., 3], y[..., 0]], axis=-1)
    R = SmoothMap(S3, S3, rot, "rot")
    H = SmoothMap(S3, S2, hopf_map, "hopf")
    p = S3.point(x)
    q = R(p)
    J = jacobian(R.then(H), p, target_chart=H(q).chart)
    prod = jacobian(H, q, target_chart=H(q).chart) @ jacobian(R, p, target_chart=q.chart)
    assert np.max(np.abs(J - prod)) < 1e-7


def test_second_partials_constant_and_polynomial():
    p = np.array([0.3, -0.2])
    assert np.allclose(second_partials(lambda U: np.ones(U.shape[:-1]), p), 0.0, atol=1e-10)
    H = second_partials(lambda U: U[..., 0] * U[..., 1], p)
    assert abs(H[0, 1] - 1.0) < 1e-8 and abs(H[0, 0]) < 1e-8


def test_round_metric_second_derivative_closed_form():
    # g_11 = 4/(1+r²)² in stereographic coordinates; ∂²_x g_11 at (a, 0)
    a = 0.3
    f = lambda U: 4.0 / (1.0 + np.sum(U**2, axis=-1)) ** 2
    H = second_partials(f, np.array([a, 0.0]))
    s = 1.0 + a * a
    exact = -16.0 / s**3 + 96.0 * a * a / s**4
    assert abs(H[0, 0] - exact) < 1e-6


def test_fd_hessian_is_symmetric():
    f = lambda U: np.sin(U[..., 0]) * np.exp(U[..., 1]) + U[..., 2] ** 3
    H = fd_hessian(f, np.array([0.2, 0.1, -0.4]), 1e-3)
    assert np.allclose(H, H.T, atol=1e-12)


def test_bracket_of_coordinate_fields_vanishes():
    R2 = euclidean_atlas(2)
    p = R2.point(np.array([0.2, 0.5]))
    ex = lambda U: np.broadcast_to([1.0, 0.0], U.shape)
    ey = lambda U: np.broadcast_to([0.0, 1.0], U.shape)
    assert np.allclose(lie_bracket(ex, ey, p).components, 0.0, atol=1e-12)


def test_textbook_bracket():
    R2 = euclidean_atlas(2)
    p = R2.point(np.array([0.7, -0.3]))
    X = lambda U: np.broadcast_to([1.0, 0.0], U.shape)
    Y = lambda U: np.stack([np.zeros(U.shape[:-1]), U[..., 0]], axis=-1)
    assert np.allclose(lie_bracket(X, Y, p).components, [0.0, 1.0], atol=1e-10)


def _poly_field(c):
    def F(U):
        x, y, z = U[..., 0], U[..., 1], U[..., 2]
        return np.stack([c[0] * x * y + c[1] * z, c[2] * y * y + c[3] * x, c[4] * x * z + c[5]], axis=-1)
    return F


@given(st.lists(st.floats(-1, 1), min_size=18, max_size=18))
def test_bracket_antisymmetry_and_jacobi(c):
    R3 = euclidean_atlas(3)
    X, Y, Z = _poly_field(c[0:6]), _poly_field(c[6:12]), _poly_field(c[12:18])
    p = R3.point(np.array([0.3, -0.2, 0.5]))
    s = DerivativeScheme(4, 1e-3)
    xy = lie_bracket(X, Y, p, s).components
    yx = lie_bracket(Y, X, p, s).components
    assert np.allclose(xy, -yx, atol=1e-14)

    def br(A, B):
        return lambda U: np.stack([lie_bracket(A, B, R3.point(u), s).components for u in U.reshape(-1, 3)]).reshape(U.shape)

    jac = sum(lie_bracket(A, br(B, C), p, s).components for A, B, C in ((X, Y, Z), (Y, Z, X), (Z, X, Y)))
    assert np.max(np.abs(jac)) < 1e-6


def test_hopf_horizontal_frame_bracket_is_twice_fiber(rng):
    # left-invariant quaternionic frame: e1 = i x, e2 = j x, e3 = k x; [e2, e3] = 2 e1 (up to sign)
    S3 = sphere_atlas(3)
    p = S3.sample(rng, 1)[0]
    c = S3.chart(p.chart)

    def frame(k):
        def F(U):
            x = c.to_ambient(U)
            a, b, cc, d = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
            v = [np.stack([-b, a, -d, cc], -1), np.stack([-cc, d, a, -b], -1), np.stack([-d, -cc, b, a], -1)][k]
            return c.push(x, v)
        return F

    br = lie_bracket(frame(1), frame(2), p, DerivativeScheme(4, 1e-4)).components
    e1 = frame(0)(np.asarray(p.coords)[None])[0]
    G = np.swapaxes(lift_matrix(c, p.coords), -1, -2) @ lift_matrix(c, p.coords)
    assert abs(np.sqrt(br @ G @ br) - 2.0) < 1e-6
    assert abs(abs(br @ G @ e1) - 2.0) < 1e-6


def test_stencil_escape_raised():
    S1 = circle_atlas()
    f = SmoothMap(S1, S1, lambda x: x, "id")
    with pytest.raises(StencilEscape):
        f.coords("a", np.array([3.2]), "a")


def test_kernel_basis_and_rank_instability():
    K = kernel_basis(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))
    assert K.shape == (3, 1) and abs(abs(K[2, 0]) - 1.0) < 1e-12
    with pytest.raises(RankInstability):
        kernel_basis(np.diag([1.0, 1e-8]))


def test_vector_transition_between_charts(rng):
    S2 = sphere_atlas(2)
    for p in S2.sample(rng, 6):
        v = TangentVector(p, rng.normal(size=2))
        other = "S" if p.chart == "N" else "N"
        w = S2.vector_to_chart(v, other)
        assert np.allclose(S2.vector_to_ambient(v), S2.vector_to_ambient(w), atol=1e-10)
