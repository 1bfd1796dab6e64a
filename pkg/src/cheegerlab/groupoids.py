"""Lie groupoids in coordinates and their actions.

Structure maps are written on ambient models (see ``smoothcalc``).  A
groupoid's multiplication takes a pair of ambient arrows ``(g, h)`` with
``s(g) = t(h)`` and returns the ambient arrow ``gh``.

Fibered products are never solved for numerically.  Each one comes with a
parameter atlas plus a ``join`` map (parameters → ambient pair) and a
``split`` map (ambient pair → parameters) that inverts it on the image.

Conventions: an arrow g goes from s(g) to t(g).  For pair groupoids
s(p, q) = q and t(p, q) = p, so m((p3, p2), (p2, p1)) = (p3, p1).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import ConstraintViolation, NotTangent, SamplerFailure
from .smoothcalc import (
    ChartAtlas,
    DerivativeScheme,
    ManifoldPoint,
    SmoothMap,
    TangentVector,
    column_rank,
    jacobian_coords,
    kernel_basis,
    product_atlas,
)
from .spaces import point_atlas

AXIOM_TOL = 1e-8


@dataclass
class PairSpace:
    """Explicit atlas for composable pairs 𝒢⁽²⁾ = {(g, h) : s(g) = t(h)}."""

    atlas: ChartAtlas
    to_pair: Callable          # ambient -> (g_amb, h_amb)
    from_pair: Callable        # (g_amb, h_amb) -> ambient


@dataclass
class GroupoidSpec:
    name: str
    arrows: ChartAtlas
    objects: ChartAtlas
    s: SmoothMap
    t: SmoothMap
    unit: SmoothMap
    inv: SmoothMap
    mul: Callable                              # (g_amb, h_amb) -> ambient
    arrows_from: Callable                      # (rng, x_amb) -> g_amb with s(g) = x
    pairs: PairSpace | None = None

    def sample_objects(self, rng, n):
        return self.objects.sample_ambient(rng, n)

    def sample_arrows(self, rng, n):
        return np.array([self.arrows_from(rng, x) for x in self.sample_objects(rng, n)])

    def sample_pairs(self, rng, n):
        """Composable pairs (g, h): h from a random object, then g from t(h)."""
        out = []
        for x in self.sample_objects(rng, n):
            h = self.arrows_from(rng, x)
            g = self.arrows_from(rng, self.t.ambient(h))
            out.append((g, h))
        return out

    def sample_triples(self, rng, n):
        out = []
        for g, h in self.sample_pairs(rng, n):
            f = self.arrows_from(rng, self.t.ambient(g))
            out.append((f, g, h))
        return out


@dataclass
class ActionSpec:
    """Left action of a groupoid on P along the moment map α.

    ``fp`` is the parameter atlas of 𝒢×_M P; ``join`` sends its ambient points
    to the concatenation (g_amb, p_amb) and ``split(g, p)`` inverts it.
    """

    name: str
    groupoid: GroupoidSpec
    total: ChartAtlas
    alpha: SmoothMap
    mu: Callable                               # (g_amb, p_amb) -> p_amb
    fp: ChartAtlas
    join: Callable
    split: Callable
    hypothesis_normal_in_fiber: bool
    iota: SmoothMap = field(init=False)
    tbar: SmoothMap = field(init=False)
    sbar: SmoothMap = field(init=False)
    prG: SmoothMap = field(init=False)
    ambient_product: ChartAtlas = field(init=False)

    def __post_init__(self):
        G, P = self.groupoid.arrows, self.total
        self.ambient_product = product_atlas(G, P, name=f"{G.name}×{P.name}")
        nG = G.ambient_dim
        self.iota = SmoothMap(self.fp, self.ambient_product, self.join, "ι")
        self.tbar = SmoothMap(self.fp, P, lambda z: self.mu(*self._gp(z)), "t̄")
        self.sbar = SmoothMap(self.fp, P, lambda z: self.join(z)[..., nG:], "s̄")
        self.prG = SmoothMap(self.fp, G, lambda z: self.join(z)[..., :nG], "pr_G")

    def _gp(self, z):
        w = self.join(z)
        nG = self.groupoid.arrows.ambient_dim
        return w[..., :nG], w[..., nG:]

    def unit_arrow(self, p_amb):
        g0 = self.groupoid.unit.ambient(self.alpha.ambient(p_amb))
        return self.split(g0, p_amb)

    def arrows_from(self, rng, p_amb):
        g = self.groupoid.arrows_from(rng, self.alpha.ambient(p_amb))
        return self.split(g, p_amb)

    def invariant_residuals(self, n_samples: int = 64, seed: int = 0) -> dict:
        rng = np.random.default_rng(seed)
        G = self.groupoid
        res = {"fibered": 0.0, "moment": 0.0, "unit_action": 0.0, "split_join": 0.0}
        for p in self.total.sample_ambient(rng, n_samples):
            z = self.arrows_from(rng, p)
            g, q = self._gp(z)
            res["split_join"] = max(res["split_join"], _dist(self.split(g, q), z))
            res["fibered"] = max(res["fibered"], _dist(G.s.ambient(g), self.alpha.ambient(q)))
            res["moment"] = max(res["moment"], _dist(self.alpha.ambient(self.mu(g, q)), G.t.ambient(g)))
            z0 = self.unit_arrow(p)
            res["unit_action"] = max(res["unit_action"], _dist(self.tbar.ambient(z0), p))
        return res


def cat_ambient(*parts):
    """Concatenate ambient coordinates, broadcasting the leading batch shape."""
    parts = [np.asarray(a, dtype=float) for a in parts]
    lead = np.broadcast_shapes(*[a.shape[:-1] for a in parts])
    return np.concatenate([np.broadcast_to(a, lead + a.shape[-1:]) for a in parts], axis=-1)


def _dist(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b), initial=0.0))


@dataclass
class AxiomReport:
    residuals: dict
    tol: float = AXIOM_TOL

    @property
    def passed(self) -> bool:
        return all(v < self.tol for v in self.residuals.values())

    @property
    def worst(self) -> tuple[str, float]:
        k = max(self.residuals, key=self.residuals.get)
        return k, self.residuals[k]


def check_groupoid_axioms(G: GroupoidSpec, n_samples: int = 256, seed: int = 0) -> AxiomReport:
    rng = np.random.default_rng(seed)
    try:
        triples = G.sample_triples(rng, n_samples)
    except Exception as exc:  # sampler bugs surface as a single error kind
        raise SamplerFailure(f"cannot sample composable triples: {exc}") from exc
    s, t, u, i, m = G.s.ambient, G.t.ambient, G.unit.ambient, G.inv.ambient, G.mul
    r = dict.fromkeys(
        ["sampler", "source_mul", "target_mul", "assoc", "unit_left", "unit_right",
         "unit_source", "unit_target", "inv_left", "inv_right", "inv_involution"],
        0.0,
    )

    def up(key, val):
        r[key] = max(r[key], val)

    for f, g, h in triples:
        sampler_res = max(_dist(s(g), t(h)), _dist(s(f), t(g)))
        if not np.isfinite(sampler_res) or sampler_res > 1e-6:
            raise SamplerFailure("sampler produced a non-composable tuple", residual=sampler_res)
        up("sampler", sampler_res)
        gh = m(g, h)
        up("source_mul", _dist(s(gh), s(h)))
        up("target_mul", _dist(t(gh), t(g)))
        up("assoc", _dist(m(m(f, g), h), m(f, m(g, h))))
        up("unit_left", _dist(m(u(t(g)), g), g))
        up("unit_right", _dist(m(g, u(s(g))), g))
        x = s(g)
        up("unit_source", _dist(s(u(x)), x))
        up("unit_target", _dist(t(u(x)), x))
        up("inv_left", _dist(m(i(g), g), u(s(g))))
        up("inv_right", _dist(m(g, i(g)), u(t(g))))
        up("inv_involution", _dist(i(i(g)), g))
    return AxiomReport(r)


# ---------------------------------------------------------------- builders

def build_group_groupoid(
    group: ChartAtlas, mul: Callable, inv: Callable, identity, name: str = ""
) -> GroupoidSpec:
    """A Lie group as a groupoid over a point."""
    pt = point_atlas()
    e = np.asarray(identity, dtype=float)
    to_pt = lambda g: np.zeros(np.shape(g)[:-1] + (0,))
    pairs = PairSpace(
        product_atlas(group, group),
        lambda w: (w[..., : group.ambient_dim], w[..., group.ambient_dim:]),
        lambda g, h: np.concatenate([g, h], axis=-1),
    )
    return GroupoidSpec(
        name or f"{group.name}⇉pt",
        group,
        pt,
        SmoothMap(group, pt, to_pt, "s"),
        SmoothMap(group, pt, to_pt, "t"),
        SmoothMap(pt, group, lambda x: np.broadcast_to(e, np.shape(x)[:-1] + e.shape).copy(), "1"),
        SmoothMap(group, group, inv, "i"),
        mul,
        lambda rng, x: group.sample_ambient(rng, 1)[0],
        pairs,
    )


def build_pair_groupoid(M: ChartAtlas, name: str = "") -> GroupoidSpec:
    """Pair groupoid M×M ⇉ M with s(p, q) = q, t(p, q) = p."""
    n = M.ambient_dim
    arrows = product_atlas(M, M, name=f"{M.name}×{M.name}")
    first = lambda w: w[..., :n]
    second = lambda w: w[..., n:]
    cat = cat_ambient
    triple = product_atlas(M, M, M, name=f"{M.name}³")
    pairs = PairSpace(
        triple,
        # (p3, p2, p1) -> ((p3, p2), (p2, p1))
        lambda w: (w[..., : 2 * n], w[..., n:]),
        lambda g, h: np.concatenate([g, h[..., n:]], axis=-1),
    )
    return GroupoidSpec(
        name or f"Pair({M.name})",
        arrows,
        M,
        SmoothMap(arrows, M, second, "s"),
        SmoothMap(arrows, M, first, "t"),
        SmoothMap(M, arrows, lambda x: cat(x, x), "1"),
        SmoothMap(arrows, arrows, lambda w: cat(second(w), first(w)), "i"),
        lambda g, h: cat(first(g), second(h)),
        lambda rng, x: cat(M.sample_ambient(rng, 1)[0], x),
        pairs,
    )


def build_submersion_groupoid(
    f: SmoothMap,
    fp_atlas: ChartAtlas,
    join: Callable,
    split: Callable,
    fiber_sampler: Callable,
    pairs: PairSpace | None = None,
    n_check: int = 64,
    seed: int = 0,
    name: str = "",
) -> GroupoidSpec:
    """Submersion groupoid M×_N M ⇉ M of ``f``.

    ``join`` maps arrows to ambient pairs (p, q) with f(p) = f(q); the arrow
    goes from q to p.  ``fiber_sampler(rng, x)`` returns a point of f⁻¹(f(x)).
    """
    M = f.source
    n = M.ambient_dim
    first = lambda w: join(w)[..., :n]
    second = lambda w: join(w)[..., n:]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for z in fp_atlas.sample_ambient(rng, n_check):
        w = join(z)
        worst = max(worst, _dist(f.ambient(w[:n]), f.ambient(w[n:])))
        worst = max(worst, _dist(split(w[:n], w[n:]), z))
    if worst > 1e-10:
        raise ConstraintViolation("fibered-product atlas breaks f∘pr1 = f∘pr2", residual=worst)
    return GroupoidSpec(
        name or f"Sub({f.name})",
        fp_atlas,
        M,
        SmoothMap(fp_atlas, M, second, "s"),
        SmoothMap(fp_atlas, M, first, "t"),
        SmoothMap(M, fp_atlas, lambda x: split(x, x), "1"),
        SmoothMap(fp_atlas, fp_atlas, lambda w: split(second(w), first(w)), "i"),
        lambda g, h: split(first(g), second(h)),
        lambda rng, x: split(fiber_sampler(rng, x), x),
        pairs,
    )


def build_action_groupoid(A: ActionSpec, name: str = "") -> GroupoidSpec:
    """Action groupoid 𝒢×_M P ⇉ P."""
    G = A.groupoid
    P = A.total
    nG = G.arrows.ambient_dim
    res = A.invariant_residuals(16)
    if max(res.values()) > 1e-10:
        k = max(res, key=res.get)
        raise ConstraintViolation(f"action invariant '{k}' fails", residual=res[k])

    def inv(z):
        g, p = A._gp(z)
        return A.split(G.inv.ambient(g), A.mu(g, p))

    def mul(z2, z1):
        g2, _ = A._gp(z2)
        g1, p1 = A._gp(z1)
        return A.split(G.mul(g2, g1), p1)

    return GroupoidSpec(
        name or f"{G.name}⋉{P.name}",
        A.fp,
        P,
        A.sbar,
        A.tbar,
        SmoothMap(P, A.fp, A.unit_arrow, "1̄"),
        SmoothMap(A.fp, A.fp, inv, "ī"),
        mul,
        A.arrows_from,
    )


def canonical_action(G: GroupoidSpec, hypothesis: bool, name: str = "") -> ActionSpec:
    """𝒢 acting on its objects along the identity: μ(g, s(g)) = t(g)."""
    nG = G.arrows.ambient_dim
    return ActionSpec(
        name or f"{G.name} on {G.objects.name}",
        G,
        G.objects,
        SmoothMap(G.objects, G.objects, lambda x: np.asarray(x, dtype=float), "id"),
        lambda g, p: G.t.ambient(g),
        G.arrows,
        lambda z: cat_ambient(z, G.s.ambient(z)),
        lambda g, p: np.asarray(g, dtype=float),
        hypothesis,
    )


def product_action(
    G: GroupoidSpec, P: ChartAtlas, mu: Callable, hypothesis: bool, name: str = ""
) -> ActionSpec:
    """Action of a groupoid over a point: 𝒢×_pt P is the full product."""
    fp = product_atlas(G.arrows, P, name=f"{G.arrows.name}×{P.name}")
    nG = G.arrows.ambient_dim
    return ActionSpec(
        name or f"{G.name} on {P.name}",
        G,
        P,
        SmoothMap(P, G.objects, lambda x: np.zeros(np.shape(x)[:-1] + (0,)), "α"),
        mu,
        fp,
        lambda z: np.asarray(z, dtype=float),
        cat_ambient,
        hypothesis,
    )


# ------------------------------------------------------ unit-arrow frames

@dataclass
class UnitArrowFrame:
    """Differentials of the action at z = (1_{α(p)}, p) in fixed charts.

    ``K`` holds a Euclidean-orthonormal basis of ker D s at the unit arrow
    (G-chart components), ``Xs`` the action vectors X*(k_i) as columns
    (P-chart components), ``indep`` the pivot columns spanning T_p L_p.
    """

    p: ManifoldPoint
    g0: ManifoldPoint
    z: ManifoldPoint
    prod_chart: tuple
    J_iota: np.ndarray
    J_tbar: np.ndarray
    K: np.ndarray
    Xs: np.ndarray
    indep: list

    @property
    def orbit_matrix(self) -> np.ndarray:
        return self.Xs[:, self.indep]

    def lift_to_fp(self, vec_GP) -> np.ndarray:
        """Solve Dι u = (x, X) for u ∈ T_z(𝒢×_M P); NotTangent on residual."""
        vec_GP = np.asarray(vec_GP, dtype=float)
        u, *_ = np.linalg.lstsq(self.J_iota, vec_GP, rcond=None)
        res = float(np.linalg.norm(self.J_iota @ u - vec_GP))
        if res > 1e-7 * max(1.0, float(np.linalg.norm(vec_GP))):
            raise NotTangent("vector is not tangent to the fibered product", point=repr(self.p), residual=res)
        return u


def unit_arrow_frame(
    A: ActionSpec,
    p: ManifoldPoint,
    scheme: DerivativeScheme = DerivativeScheme(),
    cutoff: float = 1e-8,
) -> UnitArrowFrame:
    G = A.groupoid
    P = A.total
    x = P.ambient(p)
    z_amb = A.unit_arrow(x)
    z = A.fp.point(z_amb)
    g0_amb = G.unit.ambient(A.alpha.ambient(x))
    g0 = G.arrows.point(g0_amb)
    prod_chart = (g0.chart, p.chart)
    o, h = scheme.stencil_order, scheme.step
    Js = _map_jac(G.s, g0, scheme)
    K = kernel_basis(Js, cutoff) if G.objects.dim else np.eye(G.arrows.dim)
    J_iota = jacobian_coords(lambda u: A.iota.coords(z.chart, u, prod_chart), z.coords, h, o)
    J_tbar = jacobian_coords(lambda u: A.tbar.coords(z.chart, u, p.chart), z.coords, h, o)
    frame = UnitArrowFrame(p, g0, z, prod_chart, J_iota, J_tbar, K, np.zeros((P.dim, K.shape[1])), [])
    cols = []
    for k in range(K.shape[1]):
        u = frame.lift_to_fp(np.concatenate([K[:, k], np.zeros(P.dim)]))
        cols.append(-J_tbar @ u)
    Xs = np.array(cols).T.reshape(P.dim, K.shape[1])
    frame.Xs = Xs
    frame.indep = _independent_columns(Xs, cutoff)
    return frame


def _map_jac(f: SmoothMap, q: ManifoldPoint, scheme: DerivativeScheme, target_chart=None) -> np.ndarray:
    if f.target.dim == 0:
        return np.zeros((0, f.source.dim))
    tc = target_chart if target_chart is not None else f(q).chart
    J = jacobian_coords(lambda u: f.coords(q.chart, u, tc), q.coords, scheme.step, scheme.stencil_order)
    return J.reshape(f.target.dim, f.source.dim)


def _independent_columns(X: np.ndarray, cutoff: float = 1e-8) -> list:
    if X.size == 0:
        return []
    r = column_rank(X, cutoff)
    if r == 0:
        return []
    _, _, piv = scipy.linalg.qr(X, pivoting=True, mode="economic")
    return sorted(int(i) for i in piv[:r])


def orbit_tangent_basis(
    A: ActionSpec, p: ManifoldPoint, scheme: DerivativeScheme = DerivativeScheme()
) -> list[TangentVector]:
    """Independent action vectors X*(p) = −D t̄(x, 0) spanning T_p L_p."""
    fr = unit_arrow_frame(A, p, scheme)
    return [TangentVector(p, fr.Xs[:, j].copy()) for j in fr.indep]


def vertical_generators(A: ActionSpec, fr: UnitArrowFrame, scheme: DerivativeScheme = DerivativeScheme()):
    """Basis of ker D t̄ at the unit arrow as fibered-product tangent vectors.

    For x ∈ ker D s the vector (x − D1(Dt x), X*(p)) lies in ker D t̄; it
    reduces to (x, X*(p)) whenever Dt x = 0.  Returned as columns in the
    fp chart (one per kernel basis vector).
    """
    G = A.groupoid
    if G.objects.dim:
        m = G.objects.point(G.t.ambient(G.arrows.ambient(fr.g0)))
        J1 = _map_jac(G.unit, m, scheme, target_chart=fr.g0.chart)
        Jt = _map_jac(G.t, fr.g0, scheme, target_chart=m.chart)
        corr = J1 @ Jt
    else:
        corr = np.zeros((G.arrows.dim, G.arrows.dim))
    cols = []
    for k in range(fr.K.shape[1]):
        x = fr.K[:, k]
        cols.append(fr.lift_to_fp(np.concatenate([x - corr @ x, fr.Xs[:, k]])))
    return np.array(cols).T.reshape(A.fp.dim, fr.K.shape[1])
