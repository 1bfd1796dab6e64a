"""Cheeger deformations along groupoid actions.

Given an action of (𝒢, Q) on (P, η^P), the fibered product 𝒢×_M P carries
η̂_ε = (1/ε)Q ⊕ η^P restricted from 𝒢×P, and η_ε is the metric making
t̄ = μ a Riemannian submersion.  Two ways to evaluate η_ε are provided:

* general path: push η̂_ε forward through t̄ at the unit arrow z = (1_{α(p)}, p),
  η_ε⁻¹ = Dt̄ η̂_ε⁻¹ Dt̄ᵀ.  Valid for every action.
* fast path: η_ε(X, Y) = η^P(Ch_ε X, Y) with the Cheeger tensor built from
  the shape tensor.  In cometric form η_ε⁻¹ = (η^P)⁻¹ + ε X* Q_k⁻¹ X*ᵀ.

The two agree when every kernel vector x of Ds at the unit arrow also has
Dt x = 0 (isotropy directions only, as for group actions).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import HypothesisViolated, NonInvertible, NotTangent, PathMismatch, RankInstability, SingularMetric
from .groupoids import ActionSpec, UnitArrowFrame, unit_arrow_frame
from .riemann import MetricField, pushforward_metric
from .smoothcalc import DerivativeScheme, ManifoldPoint, TangentVector, fd_gradient

PATH_TOL = 1e-7


@dataclass(frozen=True)
class DeformationConfig:
    epsilon: float
    scheme: DerivativeScheme = DerivativeScheme()
    path: str = "general"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.path not in ("fast", "general", "both"):
            raise ValueError("path must be fast, general or both")


@dataclass
class ShapeTensor:
    base: ManifoldPoint
    kernel_basis: list
    matrix: np.ndarray
    Qk: np.ndarray
    gram: np.ndarray


@dataclass
class CheegerTensor:
    base: ManifoldPoint
    matrix: np.ndarray
    inverse: np.ndarray


def _jac(fn, U, scheme):
    return np.swapaxes(fd_gradient(fn, U, scheme.step, scheme.stencil_order), -1, -2)


def action_vector(A: ActionSpec, x, p: ManifoldPoint, scheme: DerivativeScheme = DerivativeScheme(),
                  frame: UnitArrowFrame | None = None) -> TangentVector:
    """X*(p) = −D t̄(x, 0) at (1_{α(p)}, p); ``x`` in the frame's 𝒢 chart."""
    fr = frame or unit_arrow_frame(A, p, scheme)
    x = np.asarray(x, dtype=float)
    if not np.any(x):
        return TangentVector(p, np.zeros(A.total.dim))
    K = fr.K
    off = x - K @ (K.T @ x)
    if np.linalg.norm(off) > 1e-8 * max(1.0, np.linalg.norm(x)):
        raise RankInstability("vector is not in ker Ds at the unit arrow", residual=float(np.linalg.norm(off)))
    u = fr.lift_to_fp(np.concatenate([x, np.zeros(A.total.dim)]))
    return TangentVector(p, -fr.J_tbar @ u)


def shape_tensor(A: ActionSpec, Q: MetricField, etaP: MetricField, p: ManifoldPoint,
                 scheme: DerivativeScheme = DerivativeScheme(),
                 frame: UnitArrowFrame | None = None) -> ShapeTensor:
    """Sh = Q_k⁻¹ · Gram(η^P on the action vectors), in the kernel basis."""
    fr = frame or unit_arrow_frame(A, p, scheme)
    Qg = Q.matrix(fr.g0)
    Gp = etaP.matrix(p)
    Qk = fr.K.T @ Qg @ fr.K
    gram = fr.Xs.T @ Gp @ fr.Xs
    try:
        Sh = np.linalg.solve(Qk, gram)
    except np.linalg.LinAlgError as exc:
        raise SingularMetric("Q is singular on ker Ds") from exc
    kb = [TangentVector(fr.g0, fr.K[:, j].copy()) for j in range(fr.K.shape[1])]
    return ShapeTensor(p, kb, Sh, Qk, gram)


def orbit_projector(fr: UnitArrowFrame, Gp: np.ndarray) -> np.ndarray:
    """η^P-orthogonal projector onto T_p L_p."""
    B = fr.orbit_matrix
    if B.shape[1] == 0:
        return np.zeros((Gp.shape[0], Gp.shape[0]))
    return B @ np.linalg.solve(B.T @ Gp @ B, B.T @ Gp)


def recover_x(fr: UnitArrowFrame, X_top) -> np.ndarray:
    """Least-squares x with X*(x) = X^⊤; residual above 1e-8 is an error."""
    X_top = np.asarray(X_top, dtype=float)
    if fr.Xs.shape[1] == 0:
        return np.zeros(0)
    x, *_ = np.linalg.lstsq(fr.Xs, X_top, rcond=None)
    res = float(np.linalg.norm(fr.Xs @ x - X_top))
    if res > 1e-8 * max(1.0, float(np.linalg.norm(X_top))):
        raise RankInstability("orbit component is not spanned by action vectors", residual=res)
    return x


def cheeger_tensor(A: ActionSpec, Q: MetricField, etaP: MetricField, cfg: DeformationConfig,
                   p: ManifoldPoint, frame: UnitArrowFrame | None = None) -> CheegerTensor:
    """Ch⁻¹(X*(x) + ξ) = ((I + εSh)x)* + ξ; Ch is its inverse."""
    fr = frame or unit_arrow_frame(A, p, cfg.scheme)
    sh = shape_tensor(A, Q, etaP, p, cfg.scheme, fr)
    Gp = etaP.matrix(p)
    n = A.total.dim
    Pi = orbit_projector(fr, Gp)
    cols = []
    for e in np.eye(n):
        top = Pi @ e
        x = recover_x(fr, top)
        cols.append(fr.Xs @ ((np.eye(len(x)) + cfg.epsilon * sh.matrix) @ x) + (e - top))
    inv = np.array(cols).T
    if abs(np.linalg.det(inv)) < 1e-14:
        raise NonInvertible("Cheeger tensor is singular", point=repr(p))
    return CheegerTensor(p, np.linalg.inv(inv), inv)


def horizontal_lift_h(A: ActionSpec, Q: MetricField, etaP: MetricField, cfg: DeformationConfig,
                      p: ManifoldPoint, X, frame: UnitArrowFrame | None = None) -> TangentVector:
    """h(p)(X) = (−εSh(p)(x), X) at (1_{α(p)}, p), as a vector of 𝒢×P.

    The base point is ι(z) in the product chart of the frame.  The result
    need not be tangent to 𝒢×_M P; see ``lift_identity_residual``.
    """
    fr = frame or unit_arrow_frame(A, p, cfg.scheme)
    X = np.asarray(X.components if isinstance(X, TangentVector) else X, dtype=float)
    sh = shape_tensor(A, Q, etaP, p, cfg.scheme, fr)
    Gp = etaP.matrix(p)
    x = recover_x(fr, orbit_projector(fr, Gp) @ X)
    gpart = -cfg.epsilon * fr.K @ (sh.matrix @ x) if len(x) else np.zeros(A.groupoid.arrows.dim)
    zamb = A.iota.ambient(A.fp.ambient(fr.z))
    base = ManifoldPoint(fr.prod_chart, A.ambient_product.chart(fr.prod_chart).from_ambient(zamb))
    return TangentVector(base, np.concatenate([gpart, X]))


def hat_block(Q: MetricField, etaP: MetricField, eps: float, gchart, Gc, pchart, Pc) -> np.ndarray:
    """blockdiag(Q/ε, η^P) at a batch of product points."""
    Qm = Q.batch(gchart, Gc) / eps
    Pm = etaP.batch(pchart, Pc)
    dG, dP = Qm.shape[-1], Pm.shape[-1]
    out = np.zeros(Qm.shape[:-2] + (dG + dP, dG + dP))
    out[..., :dG, :dG] = Qm
    out[..., dG:, dG:] = Pm
    return out


def hat_metric(A: ActionSpec, Q: MetricField, etaP: MetricField, eps: float,
               scheme: DerivativeScheme = DerivativeScheme()) -> MetricField:
    """η̂_ε on 𝒢×_M P: ι*((1/ε)Q ⊕ η^P)."""
    G, P = A.groupoid.arrows, A.total
    nG = G.ambient_dim

    def fn(cf, Zc):
        Zc = np.asarray(Zc, dtype=float)
        W = A.join(A.fp.chart(cf).to_ambient(Zc))
        w0 = W.reshape(-1, W.shape[-1])[0]
        cg = G.preferred_chart_of(w0[:nG])
        cp = P.preferred_chart_of(w0[nG:])
        J = _jac(lambda V: A.iota.coords(cf, V, (cg, cp)), Zc, scheme)
        Gc = G.chart(cg).from_ambient(W[..., :nG])
        Pc = P.chart(cp).from_ambient(W[..., nG:])
        blk = hat_block(Q, etaP, eps, cg, Gc, cp, Pc)
        return np.swapaxes(J, -1, -2) @ blk @ J

    return MetricField(A.fp, fn, f"η̂_{eps:g}", derived=True)


def _batched_action_data(A: ActionSpec, Q: MetricField, cid, U, scheme, cutoff=1e-8):
    """Kernel bases, action vectors and Q_k at unit arrows over a batch."""
    G, P, M = A.groupoid.arrows, A.total, A.groupoid.objects
    nG = G.ambient_dim
    U = np.asarray(U, dtype=float)
    lead = U.shape[:-1]
    X = P.chart(cid).to_ambient(U)
    Z = A.unit_arrow(X)
    z0 = Z.reshape(-1, Z.shape[-1])[0]
    cf = A.fp.preferred_chart_of(z0)
    Zc = A.fp.chart(cf).from_ambient(Z)
    g0 = A.join(Z)[..., :nG]
    cg = G.preferred_chart_of(g0.reshape(-1, nG)[0])
    Gc = G.chart(cg).from_ambient(g0)
    dG = G.dim
    if M.dim:
        m0 = A.groupoid.s.ambient(g0.reshape(-1, nG)[0])
        cm = M.preferred_chart_of(m0)
        Js = _jac(lambda V: A.groupoid.s.coords(cg, V, cm), Gc, scheme)
        _, sv, vt = np.linalg.svd(Js)
        near = sv[(sv > cutoff / 10) & (sv < cutoff * 10)]
        if near.size:
            raise RankInstability("singular values cluster at the rank cutoff", residual=float(near[0]))
        rank = int(np.sum(sv.reshape(-1, sv.shape[-1])[0] > cutoff))
        K = np.swapaxes(vt[..., rank:, :], -1, -2)
    else:
        K = np.broadcast_to(np.eye(dG), lead + (dG, dG))
    prod = (cg, cid)
    Ji = _jac(lambda V: A.iota.coords(cf, V, prod), Zc, scheme)
    Jt = _jac(lambda V: A.tbar.coords(cf, V, cid), Zc, scheme)
    rhs = np.concatenate([K, np.zeros(lead + (P.dim, K.shape[-1]))], axis=-2)
    u = np.linalg.pinv(Ji) @ rhs
    res = np.max(np.abs(Ji @ u - rhs), initial=0.0)
    if res > 1e-7:
        raise NotTangent("kernel directions are not tangent to the fibered product", residual=float(res))
    Xs = -Jt @ u
    Qk = np.swapaxes(K, -1, -2) @ Q.batch(cg, Gc) @ K
    return Xs, Qk


def fast_metric(A: ActionSpec, Q: MetricField, etaP: MetricField, eps: float,
                scheme: DerivativeScheme = DerivativeScheme()) -> MetricField:
    """η_ε(X, Y) = η^P(Ch_ε X, Y), evaluated as Chᵀ η^P."""

    def fn(cid, U):
        Gp = etaP.batch(cid, U)
        Xs, Qk = _batched_action_data(A, Q, cid, U, scheme)
        n = Gp.shape[-1]
        Chinv = np.eye(n) + eps * Xs @ np.linalg.solve(Qk, np.swapaxes(Xs, -1, -2)) @ Gp
        Ch = np.linalg.inv(Chinv)
        return np.swapaxes(Ch, -1, -2) @ Gp

    return MetricField(A.total, fn, f"η_{eps:g}(fast)", derived=True)


def general_metric(A: ActionSpec, Q: MetricField, etaP: MetricField, eps: float,
                   scheme: DerivativeScheme = DerivativeScheme()) -> MetricField:
    """η_ε by pushing η̂_ε forward through t̄ at the unit arrows."""
    return pushforward_metric(A.tbar, hat_metric(A, Q, etaP, eps, scheme), A.unit_arrow, scheme,
                              name=f"η_{eps:g}")


def source_base_metric(A: ActionSpec, eta0: MetricField, etaP: MetricField, eps: float,
                       scheme: DerivativeScheme = DerivativeScheme()) -> MetricField:
    """η^P + (1/ε)α*η⁽⁰⁾, the metric on P that makes s̄ a Riemannian submersion for η̂_ε."""
    M = A.alpha.target

    def fn(cid, U):
        U = np.asarray(U, dtype=float)
        out = etaP.batch(cid, U)
        if M.dim == 0:
            return out
        X = A.total.chart(cid).to_ambient(U)
        mc = M.preferred_chart_of(A.alpha.ambient(X).reshape(-1, M.ambient_dim)[0])
        J = _jac(lambda V: A.alpha.coords(cid, V, mc), U, scheme)
        Mc = M.chart(mc).from_ambient(A.alpha.ambient(X))
        return out + np.swapaxes(J, -1, -2) @ eta0.batch(mc, Mc) @ J / eps

    return MetricField(A.total, fn, f"η^P+α*η0/{eps:g}", derived=True)


def deformed_metric(A: ActionSpec, Q: MetricField, etaP: MetricField, cfg: DeformationConfig) -> MetricField:
    if cfg.path in ("fast", "both") and not A.hypothesis_normal_in_fiber:
        raise HypothesisViolated(f"fast path needs normal spaces inside α-fibers ({A.name})")
    if cfg.path == "fast":
        return fast_metric(A, Q, etaP, cfg.epsilon, cfg.scheme)
    gen = general_metric(A, Q, etaP, cfg.epsilon, cfg.scheme)
    if cfg.path == "general":
        return gen
    fast = fast_metric(A, Q, etaP, cfg.epsilon, cfg.scheme)

    def fn(cid, U):
        a = gen.batch(cid, U)
        b = fast.batch(cid, U)
        dev = float(np.max(np.abs(a - b), initial=0.0))
        if dev > PATH_TOL:
            raise PathMismatch(f"fast and general paths differ for {A.name}", residual=dev)
        return a

    return MetricField(A.total, fn, gen.name, derived=True)


def path_deviation(A: ActionSpec, Q: MetricField, etaP: MetricField, eps: float, points,
                   scheme: DerivativeScheme = DerivativeScheme()) -> float:
    gen = general_metric(A, Q, etaP, eps, scheme)
    fast = fast_metric(A, Q, etaP, eps, scheme)
    worst = 0.0
    for p in points:
        worst = max(worst, float(np.max(np.abs(gen.matrix(p) - fast.matrix(p)))))
    return worst


def lift_identity_residual(A: ActionSpec, Q: MetricField, etaP: MetricField, cfg: DeformationConfig,
                           p: ManifoldPoint, X, frame: UnitArrowFrame | None = None) -> dict:
    """‖D t̄(h(p)(X)) − Ch⁻¹_ε(X)‖ and the tangency defect of h(p)(X).

    D t̄ is only defined on T(𝒢×_M P); h(p)(X) is first projected onto it by
    least squares and the size of the discarded part is reported.
    """
    fr = frame or unit_arrow_frame(A, p, cfg.scheme)
    X = np.asarray(X, dtype=float)
    h = horizontal_lift_h(A, Q, etaP, cfg, p, X, fr).components
    u, *_ = np.linalg.lstsq(fr.J_iota, h, rcond=None)
    tangency = float(np.linalg.norm(fr.J_iota @ u - h))
    ch = cheeger_tensor(A, Q, etaP, cfg, p, fr)
    dev = float(np.linalg.norm(fr.J_tbar @ u - ch.inverse @ X))
    return {"deviation": dev, "tangency": tangency}


def orthonormal_split(fr: UnitArrowFrame, Gp: np.ndarray):
    """η^P-orthonormal bases (columns) of T_p L_p and of its normal space."""
    n = Gp.shape[0]
    B = fr.orbit_matrix
    L = np.linalg.cholesky(Gp)          # Gp = L Lᵀ; w = Lᵀ v is Euclidean
    if B.shape[1]:
        qb, _ = np.linalg.qr(L.T @ B)
        qb = qb[:, : B.shape[1]]
    else:
        qb = np.zeros((n, 0))
    full, _ = np.linalg.qr(np.concatenate([qb, np.eye(n)], axis=1))
    qn = full[:, qb.shape[1]:n]
    Linv = np.linalg.inv(L.T)
    return Linv @ qb, Linv @ qn


def collapse_sweep(A: ActionSpec, Q: MetricField, etaP: MetricField, eps_grid, sample_points,
                   scheme: DerivativeScheme = DerivativeScheme(), path: str = "general") -> list[dict]:
    """η_ε-norms of η^P-orthonormal orbit and normal frames, per (point, ε)."""
    eps_grid = [float(e) for e in eps_grid]
    if any(e <= 0 for e in eps_grid) or eps_grid != sorted(eps_grid):
        raise ValueError("eps_grid must be positive and sorted")
    rows = []
    for i, p in enumerate(sample_points):
        fr = unit_arrow_frame(A, p, scheme)
        Gp = etaP.matrix(p)
        Ob, Nb = orthonormal_split(fr, Gp)
        for eps in eps_grid:
            gm = deformed_metric(A, Q, etaP, DeformationConfig(eps, scheme, path)).matrix(p)
            rows.append({
                "point": i,
                "epsilon": eps,
                "orbit_norms": [float(np.sqrt(c @ gm @ c)) for c in Ob.T],
                "normal_norms": [float(np.sqrt(c @ gm @ c)) for c in Nb.T],
            })
    return rows
