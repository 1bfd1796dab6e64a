"""Registry of concrete groupoid actions with their metrics.

Closed forms used as test oracles are collected in ``docs/scenario_notes.md``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import UnknownScenario
from .groupoids import (
    ActionSpec,
    GroupoidSpec,
    PairSpace,
    build_group_groupoid,
    build_pair_groupoid,
    build_submersion_groupoid,
    canonical_action,
    cat_ambient,
    product_action,
)
from .riemann import MetricField, block_metric
from .smoothcalc import ChartAtlas, SmoothMap, product_atlas
from .spaces import circle_atlas, point_atlas, sphere_atlas, torus_atlas

SCENARIOS = (
    "hopf_berger",
    "cylinder_pair",
    "torus_submersion",
    "sphere_pair",
    "broken_groupoid",
    "broken_invariance",
)


@dataclass
class Scenario:
    name: str
    action: ActionSpec
    Q: MetricField
    etaP: MetricField
    eta0: MetricField
    eta2: MetricField | None = None
    control: str | None = None          # which validator a negative control must fail
    notes: str = ""
    extras: dict = field(default_factory=dict)

    @property
    def groupoid(self) -> GroupoidSpec:
        return self.action.groupoid

    @property
    def hypothesis(self) -> bool:
        return self.action.hypothesis_normal_in_fiber


def _cmul(a, b):
    """Complex multiplication of ambient circle points (c, s)."""
    return np.stack(
        [a[..., 0] * b[..., 0] - a[..., 1] * b[..., 1], a[..., 0] * b[..., 1] + a[..., 1] * b[..., 0]],
        axis=-1,
    )


def _conj(a):
    return np.stack([a[..., 0], -a[..., 1]], axis=-1)


def circle_group() -> GroupoidSpec:
    S1 = circle_atlas()
    return build_group_groupoid(S1, _cmul, _conj, [1.0, 0.0], name="S1⇉pt")


def hopf_map(x):
    """S³ ⊂ C² → S² ⊂ R³, (z1, z2) ↦ (2 z1 z̄2, |z1|² − |z2|²)."""
    a, b, c, d = x[..., 0], x[..., 1], x[..., 2], x[..., 3]
    re = a * c + b * d
    im = b * c - a * d
    return np.stack([2 * re, 2 * im, a * a + b * b - c * c - d * d], axis=-1)


def hopf_action(g, x):
    """e^{iθ}·(z1, z2) with g = (cos θ, sin θ) and x = (Re z1, Im z1, Re z2, Im z2)."""
    g = np.asarray(g, dtype=float)
    x = np.asarray(x, dtype=float)
    lead = np.broadcast_shapes(g.shape[:-1], x.shape[:-1])
    g = np.broadcast_to(g, lead + (2,))
    x = np.broadcast_to(x, lead + (4,))
    return np.concatenate([_cmul(g, x[..., 0:2]), _cmul(g, x[..., 2:4])], axis=-1)


def hexagonal_two_metric(G2: ChartAtlas) -> MetricField:
    """Flat metric on T² = S¹⁽²⁾ making pr1, pr2 and m Riemannian submersions."""
    M = np.array([[4.0, 2.0], [2.0, 4.0]]) / 3.0
    return MetricField.constant(G2, M, "hex")


def _hopf() -> Scenario:
    G = circle_group()
    S3 = sphere_atlas(3)
    A = product_action(G, S3, hopf_action, True, name="hopf")
    Q = MetricField.from_ambient(G.arrows, name="dθ²")
    etaP = MetricField.from_ambient(S3, name="round S3")
    eta0 = MetricField.constant(G.objects, np.zeros((0, 0)), "pt")
    S2 = sphere_atlas(2)
    base = MetricField.from_ambient(S2, name="round S2/4").scaled(0.25, "round S2(1/2)")
    return Scenario(
        "hopf_berger",
        A,
        Q,
        etaP,
        eta0,
        eta2=hexagonal_two_metric(G.pairs.atlas),
        notes="S1 acting on S3 by e^{iθ}; classical Cheeger deformation, Berger spheres.",
        extras={
            "hopf": SmoothMap(S3, S2, hopf_map, "hopf"),
            "hopf_base": base,
            "product_two_metric": block_metric(G.pairs.atlas, [Q, Q], "Q×Q"),
        },
    )


def _circle_pair(broken: bool = False) -> GroupoidSpec:
    G = build_pair_groupoid(circle_atlas(), name="Pair(S1)")
    if broken:
        good = G.mul
        G.mul = lambda g, h: good(h, g)
        G.name = "Pair(S1) swapped"
    return G


def _cylinder(broken_invariance: bool = False) -> Scenario:
    G = _circle_pair()
    S1, S2 = circle_atlas(), sphere_atlas(2)
    P = product_atlas(S1, S2, name="S1×S2")
    # fibered product coordinates (x2, x1, q) <-> ((x2, x1), (x1, q))
    fp = product_atlas(circle_atlas(), circle_atlas(), sphere_atlas(2), name="S1×S1×S2")

    def join(z):
        return np.concatenate([z[..., 0:4], z[..., 2:4], z[..., 4:7]], axis=-1)

    def split(g, p):
        return cat_ambient(np.asarray(g)[..., 0:4], np.asarray(p)[..., 2:5])

    def mu(g, p):
        return cat_ambient(np.asarray(g)[..., 0:2], np.asarray(p)[..., 2:5])

    alpha = SmoothMap(P, S1, lambda x: np.asarray(x, float)[..., 0:2], "pr1")
    A = ActionSpec("cylinder", G, P, alpha, mu, fp, join, split, True)
    dth = MetricField.from_ambient(S1, name="dx²")
    round2 = MetricField.from_ambient(S2, name="round S2")
    Q = block_metric(G.arrows, [dth, dth], "dx2²+dx1²")
    if broken_invariance:
        def fn(cid, U):
            out = np.zeros(U.shape[:-1] + (3, 3))
            out[..., 0:1, 0:1] = dth.batch(cid[0], U[..., 0:1])
            th = S1.chart(cid[0]).to_ambient(U[..., 0:1])
            conf = 1.0 + 0.5 * th[..., 1]          # 1 + ½ sin x
            out[..., 1:, 1:] = conf[..., None, None] * round2.batch(cid[1], U[..., 1:])
            return out

        etaP = MetricField(P, fn, "dx²+(1+½sin x)g")
    else:
        etaP = block_metric(P, [dth, round2], "dx²+g")
    G3 = G.pairs.atlas
    eta2 = block_metric(G3, [dth, dth, dth], "flat T3")
    return Scenario(
        "broken_invariance" if broken_invariance else "cylinder_pair",
        A,
        Q,
        etaP,
        dth,
        eta2=eta2,
        control="transverse_invariance" if broken_invariance else None,
        notes="Pair groupoid of S1 acting on S1×S2 along pr1.",
        extras={"S2": S2, "round2": round2},
    )


def _torus() -> Scenario:
    T2 = torus_atlas(2)
    S1 = circle_atlas()
    f = SmoothMap(T2, S1, lambda x: np.asarray(x, float)[..., 0:2], "pr_x")
    T3 = torus_atlas(3)

    # (x, y1, y2) -> ((x, y1), (x, y2))
    def join(z):
        return np.concatenate([z[..., 0:4], z[..., 0:2], z[..., 4:6]], axis=-1)

    def split(p, q):
        return cat_ambient(np.asarray(p)[..., 0:4], np.asarray(q)[..., 2:4])

    def fiber(rng, x):
        return np.concatenate([x[0:2], S1.sample_ambient(rng, 1)[0]])

    # composable pairs (x, y1, y2, y3) -> ((x, y1, y2), (x, y2, y3))
    T4 = torus_atlas(4)
    pairs = PairSpace(
        T4,
        lambda w: (w[..., 0:6], np.concatenate([w[..., 0:2], w[..., 4:8]], axis=-1)),
        lambda g, h: np.concatenate([g, h[..., 4:6]], axis=-1),
    )
    G = build_submersion_groupoid(f, T3, join, split, fiber, pairs, name="Sub(T2→S1)")
    A = canonical_action(G, False, name="torus")
    dth = MetricField.from_ambient(S1, name="dθ²")
    Q = MetricField.from_ambient(T3, name="flat T3")
    etaP = MetricField.from_ambient(T2, name="flat T2")
    return Scenario(
        "torus_submersion",
        A,
        Q,
        etaP,
        etaP,
        eta2=MetricField.from_ambient(T4, name="flat T4"),
        notes="Submersion groupoid of T2→S1 acting on T2 along the identity.",
        extras={"restricted_product": MetricField.constant(T3, np.diag([2.0, 1.0, 1.0]), "2dx²+dy1²+dy2²")},
    )


def _sphere_pair() -> Scenario:
    S2 = sphere_atlas(2)
    G = build_pair_groupoid(S2, name="Pair(S2)")
    A = canonical_action(G, True, name="sphere_pair")
    g = MetricField.from_ambient(S2, name="round S2")
    Q = block_metric(G.arrows, [g, g], "g⊕g")
    return Scenario(
        "sphere_pair",
        A,
        Q,
        g,
        g,
        eta2=block_metric(G.pairs.atlas, [g, g, g], "g⊕g⊕g"),
        notes="Pair groupoid of S2 acting on S2 along the identity; one orbit.",
    )


def _broken_groupoid() -> Scenario:
    G = _circle_pair(broken=True)
    A = canonical_action(G, True, name="broken")
    S1 = circle_atlas()
    dth = MetricField.from_ambient(S1, name="dx²")
    return Scenario(
        "broken_groupoid",
        A,
        block_metric(G.arrows, [dth, dth], "flat T2"),
        dth,
        dth,
        control="axioms",
        notes="Pair groupoid of S1 with multiplication arguments swapped.",
    )


_BUILDERS: dict[str, Callable[[], Scenario]] = {
    "hopf_berger": _hopf,
    "cylinder_pair": _cylinder,
    "torus_submersion": _torus,
    "sphere_pair": _sphere_pair,
    "broken_groupoid": _broken_groupoid,
    "broken_invariance": lambda: _cylinder(broken_invariance=True),
}


def load_scenario(name: str) -> Scenario:
    try:
        return _BUILDERS[name]()
    except KeyError:
        raise UnknownScenario(f"unknown scenario {name!r}; known: {', '.join(SCENARIOS)}") from None
