"""Metric-level geometry: Christoffel symbols, curvature, geodesics.

Curvature convention: R(X,Y) = ∇_X∇_Y − ∇_Y∇_X − ∇_[X,Y] and the
unnormalized sectional curvature K(u,v) = g(R(u,v)v, u), which is positive
on round spheres.  ``R[l, i, j, k]`` holds R^l_{ijk} with
R(∂_i, ∂_j)∂_k = R^l_{ijk} ∂_l.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Sequence

import numpy as np

from .errors import ChartExhausted, DegeneratePlane, SingularMetric
from .smoothcalc import (
    ChartAtlas,
    DerivativeScheme,
    ManifoldPoint,
    TangentVector,
    fd_gradient,
    outer_gradient,
    outer_hessian,
)
from .spaces import lift_matrix

PD_TOL = 1e-10


class MetricField:
    """Point ↦ symmetric positive-definite matrix in chart coordinates.

    ``fn(chart_id, U)`` maps a batch of chart coordinates ``(..., n)`` to
    metric matrices ``(..., n, n)``.  ``derived`` marks fields whose values
    are themselves finite-difference outputs; their derivatives are taken
    with the scheme's outer step.
    """

    def __init__(self, atlas: ChartAtlas, fn: Callable, name: str = "", derived: bool = False):
        self.atlas = atlas
        self.fn = fn
        self.name = name
        self.derived = derived

    def __repr__(self) -> str:
        return f"MetricField({self.name or '?'} on {self.atlas.name})"

    def batch(self, chart_id: Hashable, U) -> np.ndarray:
        G = np.asarray(self.fn(chart_id, np.asarray(U, dtype=float)))
        return 0.5 * (G + np.swapaxes(G, -1, -2))

    def matrix(self, p: ManifoldPoint, check: bool = True) -> np.ndarray:
        G = self.batch(p.chart, np.asarray(p.coords, dtype=float)[None])[0]
        if check:
            ev = np.linalg.eigvalsh(G) if G.size else np.ones(1)
            if ev.min() <= PD_TOL:
                raise SingularMetric(
                    f"metric {self.name} not positive definite", point=repr(p), residual=float(ev.min())
                )
        return G

    def inner(self, u: TangentVector, v: TangentVector) -> float:
        G = self.matrix(u.base)
        return float(np.asarray(u.components) @ G @ np.asarray(v.components))

    def norm(self, u: TangentVector) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def scaled(self, lam: float, name: str = "") -> "MetricField":
        f = self.fn
        return MetricField(self.atlas, lambda c, U: lam * f(c, U), name or f"{lam}·{self.name}", self.derived)

    @staticmethod
    def from_ambient(atlas: ChartAtlas, G_amb: Callable | None = None, name: str = "") -> "MetricField":
        """Pull back an ambient metric ``G_amb(x) -> (..., N, N)`` (default Euclidean)."""

        def fn(cid, U):
            c = atlas.chart(cid)
            L = lift_matrix(c, U)
            if G_amb is None:
                return np.swapaxes(L, -1, -2) @ L
            return np.swapaxes(L, -1, -2) @ G_amb(c.to_ambient(U)) @ L

        return MetricField(atlas, fn, name or f"induced({atlas.name})")

    @staticmethod
    def constant(atlas: ChartAtlas, M, name: str = "") -> "MetricField":
        M = np.asarray(M, dtype=float)
        return MetricField(atlas, lambda c, U: np.broadcast_to(M, np.shape(U)[:-1] + M.shape).copy(), name)


def block_metric(atlas: ChartAtlas, parts: Sequence[MetricField], name: str = "") -> MetricField:
    """Direct sum metric on a product atlas built from its factors."""
    dims = [f.dim for f in atlas.factors]

    def fn(cid, U):
        n = U.shape[-1]
        out = np.zeros(U.shape[:-1] + (n, n))
        start = 0
        for part, sub_id, k in zip(parts, cid, dims):
            if k:
                out[..., start:start + k, start:start + k] = part.batch(sub_id, U[..., start:start + k])
            start += k
        return out

    return MetricField(atlas, fn, name or "⊕".join(p.name for p in parts), any(p.derived for p in parts))


@dataclass(frozen=True)
class PlaneSection:
    u: TangentVector
    v: TangentVector


def _metric_gradient(gf: MetricField, chart_id, U, scheme: DerivativeScheme):
    fn = lambda V: gf.batch(chart_id, V)
    if gf.derived:
        return outer_gradient(fn, U, scheme)
    return fd_gradient(fn, U, scheme.step, scheme.stencil_order)


def metric_jet(gf: MetricField, p: ManifoldPoint, scheme: DerivativeScheme = DerivativeScheme(), order: int = 2):
    """(g, ∂g, ∂²g) at p; ``dg[k, i, j] = ∂_k g_ij``, ``d2g[k, l, i, j]``."""
    u = np.asarray(p.coords, dtype=float)
    g = gf.matrix(p)
    dg = _metric_gradient(gf, p.chart, u, scheme)
    if order == 1:
        return g, dg, None
    return g, dg, outer_hessian(lambda U: gf.batch(p.chart, U), u, scheme)


def christoffel_from_jet(g, dg) -> np.ndarray:
    """Γ[k, i, j] = Γ^k_ij."""
    gi = np.linalg.inv(g)
    # T[l, i, j] = ∂_i g_jl + ∂_j g_il − ∂_l g_ij
    T = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    return 0.5 * np.einsum("kl,lij->kij", gi, T)


def christoffel(gf: MetricField, p: ManifoldPoint, scheme: DerivativeScheme = DerivativeScheme()) -> np.ndarray:
    g, dg, _ = metric_jet(gf, p, scheme, order=1)
    G = christoffel_from_jet(g, dg)
    return 0.5 * (G + np.swapaxes(G, 1, 2))


def christoffel_batch(gf: MetricField, chart_id: Hashable, U, scheme: DerivativeScheme) -> np.ndarray:
    """Christoffel symbols at a batch of nearby points ``(B, n)``."""
    U = np.asarray(U, dtype=float)
    g = gf.batch(chart_id, U)
    dg = _metric_gradient(gf, chart_id, U, scheme)   # (B, k, i, j)
    gi = np.linalg.inv(g)
    T = np.einsum("bijl->blij", dg) + np.einsum("bjil->blij", dg) - dg
    G = 0.5 * np.einsum("bkl,blij->bkij", gi, T)
    return 0.5 * (G + np.swapaxes(G, 2, 3))


def riemann_from_jet(g, dg, d2g) -> np.ndarray:
    """R[l, i, j, k] = R^l_{ijk}."""
    gi = np.linalg.inv(g)
    T = np.einsum("ijl->lij", dg) + np.einsum("jil->lij", dg) - dg
    Gam = 0.5 * np.einsum("kl,lij->kij", gi, T)
    # ∂_m g^{kl} = −g^{ka} ∂_m g_ab g^{bl}
    dgi = -np.einsum("ka,mab,bl->mkl", gi, dg, gi)
    # ∂_m T[l,i,j] = ∂_m∂_i g_jl + ∂_m∂_j g_il − ∂_m∂_l g_ij
    dT = np.einsum("mijl->mlij", d2g) + np.einsum("mjil->mlij", d2g) - d2g
    dGam = 0.5 * (np.einsum("mkl,lij->mkij", dgi, T) + np.einsum("kl,mlij->mkij", gi, dT))
    # dGam[m, l, j, k] = ∂_m Γ^l_jk
    R = (
        np.einsum("iljk->lijk", dGam)
        - np.einsum("jlik->lijk", dGam)
        + np.einsum("lim,mjk->lijk", Gam, Gam)
        - np.einsum("ljm,mik->lijk", Gam, Gam)
    )
    return R


def riemann_tensor(gf: MetricField, p: ManifoldPoint, scheme: DerivativeScheme = DerivativeScheme()):
    g, dg, d2g = metric_jet(gf, p, scheme)
    return g, riemann_from_jet(g, dg, d2g)


def apply_R(R, u, v, w) -> np.ndarray:
    """Components of R(u, v)w."""
    return np.einsum("lijk,i,j,k->l", R, u, v, w)


def sectional_from_tensor(g, R, u, v, normalized: bool = False, tol: float = 1e-12) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    gram = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
    if gram <= tol:
        raise DegeneratePlane("plane vectors are linearly dependent", residual=float(gram))
    K = float(apply_R(R, u, v, v) @ g @ u)
    return K / gram if normalized else K


def curvature_K(
    gf: MetricField,
    plane: PlaneSection,
    scheme: DerivativeScheme = DerivativeScheme(),
    normalized: bool = False,
) -> float:
    p = plane.u.base
    v = plane.v
    if v.base.chart != p.chart:
        v = gf.atlas.vector_to_chart(v, p.chart)
    g, R = riemann_tensor(gf, p, scheme)
    return sectional_from_tensor(g, R, plane.u.components, v.components, normalized)


@dataclass
class GeodesicPath:
    points: list
    velocities: list
    speeds: np.ndarray

    def __len__(self) -> int:
        return len(self.points)


def geodesic(
    gf: MetricField,
    p: ManifoldPoint,
    v,
    time: float,
    steps: int,
    scheme: DerivativeScheme = DerivativeScheme(),
    switch_depth: float = 0.3,
    callback: Callable | None = None,
) -> GeodesicPath:
    """Fixed-step RK4 for u'' = −Γ(u', u') with chart switching.

    When the depth of the current point in its chart drops below
    ``switch_depth`` the state is moved to the preferred chart.
    """
    if steps < 100 * time:
        raise ValueError("need steps >= 100 * time")
    atlas = gf.atlas
    vec = np.asarray(v.components if isinstance(v, TangentVector) else v, dtype=float)
    if not np.any(vec):
        raise ValueError("initial velocity must be nonzero")
    dt = time / steps
    cid, u = p.chart, np.asarray(p.coords, dtype=float)

    def accel(c, uu, vv):
        G = christoffel_batch(gf, c, uu[None], scheme)[0]
        return -np.einsum("kij,i,j->k", G, vv, vv)

    pts, vels, speeds = [], [], []
    for k in range(steps + 1):
        q = ManifoldPoint(cid, u.copy())
        g = gf.matrix(q)
        pts.append(q)
        vels.append(vec.copy())
        speeds.append(float(np.sqrt(vec @ g @ vec)))
        if callback is not None:
            callback(q, vec)
        if k == steps:
            break
        k1u, k1v = vec, accel(cid, u, vec)
        k2u, k2v = vec + 0.5 * dt * k1v, accel(cid, u + 0.5 * dt * k1u, vec + 0.5 * dt * k1v)
        k3u, k3v = vec + 0.5 * dt * k2v, accel(cid, u + 0.5 * dt * k2u, vec + 0.5 * dt * k2v)
        k4u, k4v = vec + dt * k3v, accel(cid, u + dt * k3u, vec + dt * k3v)
        u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
        vec = vec + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        chart = atlas.chart(cid)
        x = chart.to_ambient(u)
        if float(chart.depth(x)) < switch_depth:
            best = atlas.preferred_chart_of(x)
            if float(atlas.chart(best).depth(x)) <= switch_depth:
                raise ChartExhausted("geodesic left every chart", point=x.tolist())
            amb = chart.lift(u, vec)
            cid = best
            u = atlas.chart(cid).from_ambient(x)
            vec = atlas.chart(cid).push(x, amb)
    return GeodesicPath(pts, vels, np.array(speeds))


def transnormality_check(
    gf: MetricField,
    orbit_tangent_basis: Callable[[ManifoldPoint], Sequence[TangentVector]],
    p: ManifoldPoint,
    v,
    time: float = 1.0,
    steps: int = 100,
    scheme: DerivativeScheme = DerivativeScheme(),
    every: int = 1,
) -> float:
    """Max |⟨γ'/|γ'|, e⟩| over the path for η-unit orbit vectors e."""
    vec = np.asarray(v.components if isinstance(v, TangentVector) else v, dtype=float)
    g0 = gf.matrix(p)
    for e in orbit_tangent_basis(p):
        ec = np.asarray(e.components)
        if abs(vec @ g0 @ ec) > 1e-8 * np.sqrt((vec @ g0 @ vec) * (ec @ g0 @ ec)):
            raise ValueError("initial velocity is not orthogonal to the orbit")
    worst = [0.0]
    counter = [0]

    def cb(q, w):
        counter[0] += 1
        if (counter[0] - 1) % every:
            return
        g = gf.matrix(q)
        wn = np.sqrt(w @ g @ w)
        for e in orbit_tangent_basis(q):
            ec = np.asarray(e.components)
            if e.base.chart != q.chart:
                ec = gf.atlas.vector_to_chart(e, q.chart).components
            en = np.sqrt(ec @ g @ ec)
            if en > 0:
                worst[0] = max(worst[0], abs(w @ g @ ec) / (wn * en))

    geodesic(gf, p, vec, time, steps, scheme, callback=cb)
    return worst[0]


def pushforward_metric(
    f,
    g_total: MetricField,
    section: Callable,
    scheme: DerivativeScheme = DerivativeScheme(),
    name: str = "",
) -> MetricField:
    """Base metric of a Riemannian submersion, read off along a section.

    At a base point b with z = section(b), the metric is (J G⁻¹ Jᵀ)⁻¹ where
    J = D_z f and G = g_total(z): the metric that makes D_z f an isometry on
    the g_total-horizontal space.
    """
    src = f.source

    def fn(cid, U):
        U = np.asarray(U, dtype=float)
        X = f.target.chart(cid).to_ambient(U)
        Z = section(X)
        zc = src.preferred_chart_of(Z.reshape(-1, Z.shape[-1])[0])
        Zc = src.chart(zc).from_ambient(Z)
        J = np.swapaxes(
            fd_gradient(lambda V: f.coords(zc, V, cid), Zc, scheme.step, scheme.stencil_order), -1, -2
        )
        Gt = g_total.batch(zc, Zc)
        cometric = J @ np.linalg.solve(Gt, np.swapaxes(J, -1, -2))
        return np.linalg.inv(cometric)

    return MetricField(f.target, fn, name or f"push({g_total.name})", derived=True)
