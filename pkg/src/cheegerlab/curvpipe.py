"""Submersion geometry and the curvature decomposition of η_ε.

For t̄: (𝒢×_M P, η̂_ε) → (P, η_ε) O'Neill gives

    K_{η_ε}(a, b) = K_{η̂_ε}(ã, b̃) + 3‖A_ã b̃‖²

on horizontal lifts, and the Gauss equation for 𝒢×_M P ⊂ (𝒢×P, (1/ε)Q ⊕ η^P)
splits K_{η̂_ε} into the product curvature plus second fundamental form
terms.  With ι(ã) = (a_𝒢, a_P) and σ_a = −a_𝒢/ε the product curvature is
ε³ K_Q(σ_a, σ_b) + K_{η^P}(a_P, b_P).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cheeger import (
    DeformationConfig,
    cheeger_tensor,
    general_metric,
    hat_metric,
    horizontal_lift_h,
    recover_x,
    shape_tensor,
)
from .errors import HypothesisViolated
from .groupoids import ActionSpec, _map_jac, unit_arrow_frame
from .riemann import (
    MetricField,
    block_metric,
    christoffel,
    riemann_tensor,
    sectional_from_tensor,
)
from .smoothcalc import (
    DerivativeScheme,
    ManifoldPoint,
    SmoothMap,
    TangentVector,
    fd_gradient,
    kernel_basis,
    outer_gradient,
    outer_hessian,
)


def _vec(v):
    return np.asarray(v.components if isinstance(v, TangentVector) else v, dtype=float)


def vertical_projector(J: np.ndarray, G: np.ndarray) -> np.ndarray:
    """G-orthogonal projector onto ker J."""
    K = kernel_basis(J)
    if K.shape[1] == 0:
        return np.zeros((G.shape[0], G.shape[0]))
    return K @ np.linalg.solve(K.T @ G @ K, K.T @ G)


def vh_split(f: SmoothMap, g_total: MetricField, z: ManifoldPoint, v,
             scheme: DerivativeScheme = DerivativeScheme()):
    """(vertical, horizontal) parts of v at z."""
    J = _map_jac(f, z, scheme)
    Pv = vertical_projector(J, g_total.matrix(z))
    vv = _vec(v)
    ver = Pv @ vv
    return TangentVector(z, ver), TangentVector(z, vv - ver)


def horizontal_lift(f: SmoothMap, g_total: MetricField, z: ManifoldPoint, b,
                    scheme: DerivativeScheme = DerivativeScheme(), base_chart=None) -> np.ndarray:
    """Horizontal vector at z mapping to the base vector b (in ``base_chart``)."""
    bc = base_chart if base_chart is not None else f(z).chart
    J = _map_jac(f, z, scheme, target_chart=bc)
    G = g_total.matrix(z)
    GiJt = np.linalg.solve(G, J.T)
    return GiJt @ np.linalg.solve(J @ GiJt, _vec(b))


def basic_field(f: SmoothMap, g_total: MetricField, zchart, bchart, b, scheme: DerivativeScheme):
    """Batch vector field u ↦ horizontal lift of the constant base field b."""
    b = np.asarray(b, dtype=float)

    def X(U):
        U = np.asarray(U, dtype=float)
        J = np.swapaxes(fd_gradient(lambda V: f.coords(zchart, V, bchart), U, scheme.step,
                                    scheme.stencil_order), -1, -2)
        G = g_total.batch(zchart, U)
        GiJt = np.linalg.solve(G, np.swapaxes(J, -1, -2))
        coef = np.linalg.solve(J @ GiJt, np.broadcast_to(b, J.shape[:-2] + b.shape)[..., None])
        return (GiJt @ coef)[..., 0]

    return X


def _field_bracket(X, Y, u, scheme):
    dX = outer_gradient(X, u, scheme)        # (j, k) = ∂_j X^k
    dY = outer_gradient(Y, u, scheme)
    Xp, Yp = X(u[None])[0], Y(u[None])[0]
    return Xp @ dY - Yp @ dX


def a_tensor(f: SmoothMap, g_total: MetricField, z: ManifoldPoint, X, Y,
             scheme: DerivativeScheme = DerivativeScheme()) -> TangentVector:
    """A_X Y = ½ [X̃, Ỹ]^v with basic horizontal extensions X̃, Ỹ."""
    bc = f(z).chart
    J = _map_jac(f, z, scheme, target_chart=bc)
    Xt = basic_field(f, g_total, z.chart, bc, J @ _vec(X), scheme)
    Yt = basic_field(f, g_total, z.chart, bc, J @ _vec(Y), scheme)
    br = _field_bracket(Xt, Yt, np.asarray(z.coords, float), scheme)
    Pv = vertical_projector(J, g_total.matrix(z))
    return TangentVector(z, 0.5 * Pv @ br)


def bracket_vertical(f: SmoothMap, g_total: MetricField, z: ManifoldPoint, X, Y,
                     scheme: DerivativeScheme = DerivativeScheme()) -> TangentVector:
    bc = f(z).chart
    J = _map_jac(f, z, scheme, target_chart=bc)
    Xt = basic_field(f, g_total, z.chart, bc, J @ _vec(X), scheme)
    Yt = basic_field(f, g_total, z.chart, bc, J @ _vec(Y), scheme)
    br = _field_bracket(Xt, Yt, np.asarray(z.coords, float), scheme)
    return TangentVector(z, vertical_projector(J, g_total.matrix(z)) @ br)


def a_tensor_covariant(f: SmoothMap, g_total: MetricField, z: ManifoldPoint, X, Y,
                       scheme: DerivativeScheme = DerivativeScheme()) -> TangentVector:
    """A_X Y = V(∇_X Ỹ): an independent route through the Levi-Civita connection."""
    bc = f(z).chart
    J = _map_jac(f, z, scheme, target_chart=bc)
    Yt = basic_field(f, g_total, z.chart, bc, J @ _vec(Y), scheme)
    u = np.asarray(z.coords, float)
    dY = outer_gradient(Yt, u, scheme)
    Gam = christoffel(g_total, z, scheme)
    x = _vec(X)
    y = Yt(u[None])[0]
    nab = x @ dY + np.einsum("kij,i,j->k", Gam, x, y)
    return TangentVector(z, vertical_projector(J, g_total.matrix(z)) @ nab)


def second_fundamental_form(embed: SmoothMap, g_ambient: MetricField, z: ManifoldPoint, X, Y,
                            scheme: DerivativeScheme = DerivativeScheme(), ambient_chart=None) -> TangentVector:
    """Normal part of ∂²ι[X, Y] + Γ(DιX, DιY) at ι(z)."""
    w = embed(z, ambient_chart)
    u = np.asarray(z.coords, float)
    fn = lambda V: embed.coords(z.chart, V, w.chart)
    J = np.swapaxes(fd_gradient(fn, u, scheme.step, scheme.stencil_order), -1, -2)
    H = outer_hessian(fn, u, scheme)                       # (i, j, k)
    x, y = _vec(X), _vec(Y)
    Gam = christoffel(g_ambient, w, scheme)
    a = np.einsum("ijk,i,j->k", H, x, y) + np.einsum("kij,i,j->k", Gam, J @ x, J @ y)
    G = g_ambient.matrix(w)
    tang = J @ np.linalg.solve(J.T @ G @ J, J.T @ G @ a)
    return TangentVector(w, a - tang)


@dataclass
class ONeillReport:
    K_base: float
    K_total: float
    a_term: float
    residual: float


def oneill_check(f: SmoothMap, g_total: MetricField, g_base: MetricField, z: ManifoldPoint, x, y,
                 scheme: DerivativeScheme = DerivativeScheme()) -> ONeillReport:
    """K_base(x, y) vs K_total(x̃, ỹ) + 3‖A_x̃ ỹ‖² for base vectors x, y at f(z)."""
    b = f(z)
    xl = horizontal_lift(f, g_total, z, x, scheme, b.chart)
    yl = horizontal_lift(f, g_total, z, y, scheme, b.chart)
    gb, Rb = riemann_tensor(g_base, b, scheme)
    Kb = sectional_from_tensor(gb, Rb, _vec(x), _vec(y))
    gt, Rt = riemann_tensor(g_total, z, scheme)
    Kt = sectional_from_tensor(gt, Rt, xl, yl)
    A = _vec(a_tensor(f, g_total, z, xl, yl, scheme))
    at = 3.0 * float(A @ gt @ A)
    return ONeillReport(Kb, Kt, at, abs(Kb - (Kt + at)))


@dataclass
class CurvatureReport:
    point: list
    plane: tuple
    epsilon: float
    terms: dict
    lhs_direct: float
    rhs_sum: float
    residual: float
    rhs_displayed_sign: float
    residual_displayed_sign: float
    sign_verdict: str
    diagnostics: dict = field(default_factory=dict)


SIGN_TOL = 1e-3


def theoremB_decomposition(A: ActionSpec, Q: MetricField, etaP: MetricField, cfg: DeformationConfig,
                           p: ManifoldPoint, v, w) -> CurvatureReport:
    """Term-by-term curvature decomposition of η_ε at (Ch⁻¹v, Ch⁻¹w)."""
    if not A.hypothesis_normal_in_fiber:
        raise HypothesisViolated(f"decomposition assumes normal spaces inside α-fibers ({A.name})")
    eps, scheme = cfg.epsilon, cfg.scheme
    v, w = _vec(v), _vec(w)
    fr = unit_arrow_frame(A, p, scheme)
    ch = cheeger_tensor(A, Q, etaP, cfg, p, fr)
    a, b = ch.inverse @ v, ch.inverse @ w

    # direct oracle
    eta = general_metric(A, Q, etaP, eps, scheme)
    ge, Re = riemann_tensor(eta, p, scheme)
    lhs = sectional_from_tensor(ge, Re, a, b)

    # horizontal lifts for t̄ at the unit arrow
    hat = hat_metric(A, Q, etaP, eps, scheme)
    z = fr.z
    al = horizontal_lift(A.tbar, hat, z, a, scheme, p.chart)
    bl = horizontal_lift(A.tbar, hat, z, b, scheme, p.chart)
    Ai = _vec(a_tensor(A.tbar, hat, z, al, bl, scheme))
    gh = hat.matrix(z)
    a_term = 3.0 * float(Ai @ gh @ Ai)

    # product curvature of (𝒢×P, (1/ε)Q ⊕ η^P) split by factor
    dG = A.groupoid.arrows.dim
    ia, ib = fr.J_iota @ al, fr.J_iota @ bl
    sa, sb = -ia[:dG] / eps, -ib[:dG] / eps
    pa, pb = ia[dG:], ib[dG:]
    gP, RP = riemann_tensor(etaP, p, scheme)
    K_P = _safe_K(gP, RP, pa, pb)
    if dG:
        gQ, RQ = riemann_tensor(Q, fr.g0, scheme)
        K_Q = _safe_K(gQ, RQ, sa, sb)
    else:
        K_Q = 0.0
    eps3 = eps_cubed_term(K_Q, eps)

    # Gauss terms for 𝒢×_M P ⊂ 𝒢×P
    amb = block_metric(A.ambient_product, [Q.scaled(1.0 / eps), etaP], f"Q/{eps:g}⊕η^P")
    IIaa = _vec(second_fundamental_form(A.iota, amb, z, al, al, scheme, fr.prod_chart))
    IIbb = _vec(second_fundamental_form(A.iota, amb, z, bl, bl, scheme, fr.prod_chart))
    IIab = _vec(second_fundamental_form(A.iota, amb, z, al, bl, scheme, fr.prod_chart))
    gA = amb.matrix(A.ambient_product.point(A.iota.ambient(A.fp.ambient(z)), fr.prod_chart))
    diag = float(IIaa @ gA @ IIbb)
    mixed = float(IIab @ gA @ IIab)

    base = K_P + eps3 + a_term
    rhs_std = base + diag - mixed
    rhs_displayed = base - diag + mixed
    r_std, r_disp = abs(lhs - rhs_std), abs(lhs - rhs_displayed)
    if r_std < SIGN_TOL and r_disp < SIGN_TOL:
        verdict = "both"
    elif r_std <= r_disp:
        verdict = "standard"
    else:
        verdict = "displayed"

    # how far the displayed lift (−εSh x, v) is from the true lift of Ch⁻¹v
    hv = _vec(horizontal_lift_h(A, Q, etaP, cfg, p, v, fr))
    hw = _vec(horizontal_lift_h(A, Q, etaP, cfg, p, w, fr))
    dev = max(float(np.linalg.norm(ia - hv)), float(np.linalg.norm(ib - hw)))
    sh = shape_tensor(A, Q, etaP, p, scheme, fr)
    return CurvatureReport(
        point=[float(c) for c in np.asarray(p.coords)],
        plane=(v.tolist(), w.tolist()),
        epsilon=eps,
        terms={
            "K_etaP": K_P,
            "eps3_KQ": eps3,
            "KQ": K_Q,
            "a_term": a_term,
            "gauss_diag": diag,
            "gauss_mixed": mixed,
        },
        lhs_direct=lhs,
        rhs_sum=rhs_std if verdict != "displayed" else rhs_displayed,
        residual=min(r_std, r_disp),
        rhs_displayed_sign=rhs_displayed,
        residual_displayed_sign=r_disp,
        sign_verdict=verdict,
        diagnostics={"residual_standard_sign": r_std, "lift_deviation": dev,
                     "shape_tensor": sh.matrix.tolist()},
    )


def _safe_K(g, R, u, v) -> float:
    """Unnormalized K, zero when the pair is dependent (a degenerate factor plane)."""
    u, v = np.asarray(u, float), np.asarray(v, float)
    return float(np.einsum("lijk,i,j,k->l", R, u, v, v) @ g @ u)


def eps_cubed_term(KQ_at_sigma: float, eps: float) -> float:
    return eps**3 * KQ_at_sigma
