"""Validators for Riemannian groupoid metrics.

Covers Riemannian submersions, 1-metrics, 2-metrics, the normal
representation of an action and transverse invariance of a metric on P.
Normal classes are represented by their η^P-orthogonal projections.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NotTangent, RankInstability
from .groupoids import ActionSpec, GroupoidSpec, _map_jac, unit_arrow_frame
from .riemann import MetricField
from .smoothcalc import DerivativeScheme, ManifoldPoint, SmoothMap, TangentVector, kernel_basis
from .cheeger import orbit_projector, orthonormal_split

SUBMERSION_TOL = 1e-6
ISOMETRY_TOL = 1e-8
INVARIANCE_TOL = 1e-5


@dataclass
class RiemannianSubmersionCheck:
    map: SmoothMap
    total_metric: MetricField
    base_metric: MetricField
    residual: float
    samples: int
    tol: float = SUBMERSION_TOL

    @property
    def passed(self) -> bool:
        return self.residual < self.tol


@dataclass
class MetricReport:
    residuals: dict
    tols: dict
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.residuals[k] < self.tols[k] for k in self.residuals)


def _points(atlas, samples, seed):
    if isinstance(samples, int):
        return atlas.sample(np.random.default_rng(seed), samples)
    return list(samples)


def submersion_residual_at(f: SmoothMap, g_total: MetricField, g_base: MetricField, z: ManifoldPoint,
                           scheme: DerivativeScheme = DerivativeScheme()) -> float:
    """Operator-norm deviation of f*g_base from g_total on the horizontal space at z."""
    if f.target.dim == 0:
        return 0.0
    b = f(z)
    J = _map_jac(f, z, scheme, target_chart=b.chart)
    G = g_total.matrix(z)
    rank = J.shape[1] - kernel_basis(J).shape[1]
    if rank < J.shape[0]:
        raise RankInstability(f"{f.name} is not a submersion here", point=repr(z))
    # the g_total-orthocomplement of ker J is the range of G⁻¹Jᵀ
    L = np.linalg.cholesky(G)
    q, _ = np.linalg.qr(np.linalg.solve(L, J.T))
    Hb = np.linalg.solve(L.T, q)
    D = (J @ Hb).T @ g_base.matrix(b) @ (J @ Hb) - np.eye(rank)
    return float(np.linalg.norm(D, 2)) if D.size else 0.0


def check_riemannian_submersion(f: SmoothMap, g_total: MetricField, g_base: MetricField,
                                n_samples=64, scheme: DerivativeScheme = DerivativeScheme(),
                                seed: int = 0) -> RiemannianSubmersionCheck:
    """``n_samples`` may be a count (atlas sampler) or an explicit list of points."""
    pts = _points(f.source, n_samples, seed)
    worst = 0.0
    for z in pts:
        worst = max(worst, submersion_residual_at(f, g_total, g_base, z, scheme))
    return RiemannianSubmersionCheck(f, g_total, g_base, worst, len(pts))


def arrow_points(G: GroupoidSpec, n: int, seed: int = 0) -> list[ManifoldPoint]:
    rng = np.random.default_rng(seed)
    return [G.arrows.point(a) for a in G.sample_arrows(rng, n)]


def isometry_residual(f: SmoothMap, g: MetricField, points, scheme: DerivativeScheme) -> float:
    """max ‖Jᵀ g(f(z)) J − g(z)‖ for a self-map f."""
    worst = 0.0
    for z in points:
        w = f(z)
        J = _map_jac(f, z, scheme, target_chart=w.chart)
        D = J.T @ g.matrix(w) @ J - g.matrix(z)
        worst = max(worst, float(np.max(np.abs(D), initial=0.0)))
    return worst


def check_one_metric(G: GroupoidSpec, Q: MetricField, eta0: MetricField, n_samples: int = 64,
                     scheme: DerivativeScheme = DerivativeScheme(), seed: int = 0) -> MetricReport:
    pts = arrow_points(G, n_samples, seed)
    res = {
        "source_submersion": check_riemannian_submersion(G.s, Q, eta0, pts, scheme).residual,
        "target_submersion": check_riemannian_submersion(G.t, Q, eta0, pts, scheme).residual,
        "inversion_isometry": isometry_residual(G.inv, Q, pts, scheme),
    }
    tols = {"source_submersion": SUBMERSION_TOL, "target_submersion": SUBMERSION_TOL,
            "inversion_isometry": ISOMETRY_TOL}
    return MetricReport(res, tols)


def pair_maps(G: GroupoidSpec) -> dict:
    """pr1, pr2, m: 𝒢⁽²⁾ → 𝒢 and the S₃ generators on 𝒢⁽²⁾.

    (1 3)·(g, h) = (i(h), i(g)) and (2 3)·(g, h) = (i(g), gh), the
    transposition that fixes the product coordinate up to inversion.
    """
    ps = G.pairs
    A2, Ga = ps.atlas, G.arrows
    inv = G.inv.ambient
    return {
        "pr1": SmoothMap(A2, Ga, lambda w: ps.to_pair(w)[0], "pr1"),
        "pr2": SmoothMap(A2, Ga, lambda w: ps.to_pair(w)[1], "pr2"),
        "m": SmoothMap(A2, Ga, lambda w: G.mul(*ps.to_pair(w)), "m"),
        "s13": SmoothMap(A2, A2, lambda w: ps.from_pair(inv(ps.to_pair(w)[1]), inv(ps.to_pair(w)[0])), "(13)"),
        "s23": SmoothMap(A2, A2, lambda w: ps.from_pair(inv(ps.to_pair(w)[0]), G.mul(*ps.to_pair(w))), "(23)"),
    }


def check_two_metric(G: GroupoidSpec, eta2: MetricField, Q: MetricField, n_samples: int = 64,
                     scheme: DerivativeScheme = DerivativeScheme(), seed: int = 0) -> MetricReport:
    if G.pairs is None:
        raise ValueError(f"{G.name} has no composable-pair atlas")
    maps = pair_maps(G)
    pts = G.pairs.atlas.sample(np.random.default_rng(seed), n_samples)
    res, tols = {}, {}
    for k in ("pr1", "pr2", "m"):
        res[k] = check_riemannian_submersion(maps[k], eta2, Q, pts, scheme).residual
        tols[k] = SUBMERSION_TOL
    for k in ("s13", "s23"):
        res[k] = isometry_residual(maps[k], eta2, pts, scheme)
        tols[k] = ISOMETRY_TOL
    return MetricReport(res, tols)


def normal_representation(A: ActionSpec, z: ManifoldPoint, v: TangentVector, etaP: MetricField,
                          scheme: DerivativeScheme = DerivativeScheme()) -> TangentVector:
    """N(μ)_z(v): push a normal vector at s̄(z) to a normal vector at t̄(z)."""
    p = v.base
    vv = np.asarray(v.components, dtype=float)
    frp = unit_arrow_frame(A, p, scheme)
    Gp = etaP.matrix(p)
    top = orbit_projector(frp, Gp) @ vv
    if np.sqrt(max(top @ Gp @ top, 0.0)) > 1e-8 * max(1.0, float(np.sqrt(vv @ Gp @ vv))):
        raise NotTangent("vector is not orthogonal to the orbit", point=repr(p))
    Js = _map_jac(A.sbar, z, scheme, target_chart=p.chart)
    w = np.linalg.pinv(Js) @ vv
    q = A.tbar(z)
    Jt = _map_jac(A.tbar, z, scheme, target_chart=q.chart)
    out = Jt @ w
    frq = unit_arrow_frame(A, q, scheme)
    Gq = etaP.matrix(q)
    out = out - orbit_projector(frq, Gq) @ out
    return TangentVector(q, out)


def check_transverse_invariance(A: ActionSpec, etaP: MetricField, n_samples: int = 64,
                                scheme: DerivativeScheme = DerivativeScheme(), seed: int = 0) -> MetricReport:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for x in A.total.sample_ambient(rng, n_samples):
        p = A.total.point(x)
        z = A.fp.point(A.arrows_from(rng, x))
        fr = unit_arrow_frame(A, p, scheme)
        _, Nb = orthonormal_split(fr, etaP.matrix(p))
        if Nb.shape[1] == 0:
            continue
        imgs = [normal_representation(A, z, TangentVector(p, c), etaP, scheme) for c in Nb.T]
        Gq = etaP.matrix(imgs[0].base)
        M = np.array([a.components for a in imgs]).T
        worst = max(worst, float(np.max(np.abs(M.T @ Gq @ M - np.eye(M.shape[1])))))
    return MetricReport({"normal_isometry": worst}, {"normal_isometry": INVARIANCE_TOL})
