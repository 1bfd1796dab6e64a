"""Chart-level smooth calculus.

Manifolds are modelled as a finite set of coordinate charts sitting over an
ambient model (a Euclidean space into which the manifold is embedded, or
parametrised).  Chart transitions are always ``from_ambient ∘ to_ambient`` of
the two charts involved, so no pairwise transition tables are needed.

Smooth maps are written once, on ambient models, and evaluated in whatever
pair of charts the caller asks for.  Every derivative in the package is a
central finite difference over such chart expressions.

All coordinate functions are batch functions: they take arrays of shape
``(..., n)`` and return ``(..., m)``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Hashable, Sequence

import numpy as np

from .errors import RankInstability, StencilEscape

Array = np.ndarray
BatchFn = Callable[[Array], Array]

__all__ = [
    "Chart",
    "ChartAtlas",
    "ManifoldPoint",
    "TangentVector",
    "SmoothMap",
    "DerivativeScheme",
    "product_atlas",
    "fd_gradient",
    "fd_hessian",
    "jacobian",
    "jacobian_coords",
    "second_partials",
    "outer_gradient",
    "outer_hessian",
    "lie_bracket",
    "kernel_basis",
]


@dataclass(frozen=True)
class Chart:
    """One coordinate chart of an atlas.

    ``depth`` is evaluated on ambient points and is positive inside the chart;
    it measures how far the point is from the chart's excluded set and is used
    to pick the preferred chart.  ``lift`` and ``push`` are the differentials
    of ``to_ambient`` and ``from_ambient``.
    """

    id: Hashable
    dim: int
    to_ambient: BatchFn
    from_ambient: BatchFn
    depth: BatchFn
    lift: Callable[[Array, Array], Array]
    push: Callable[[Array, Array], Array]


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    chart: Hashable
    coords: Array

    def __repr__(self) -> str:
        return f"ManifoldPoint({self.chart!r}, {np.array2string(np.asarray(self.coords), precision=6)})"


@dataclass(frozen=True, eq=False)
class TangentVector:
    base: ManifoldPoint
    components: Array


class ChartAtlas:
    """A manifold given by charts over an ambient model.

    ``sampler(rng, n)`` returns ``n`` ambient points on the manifold.
    ``min_depth`` is the domain predicate threshold: a chart admits a point
    when its depth exceeds it.
    """

    def __init__(
        self,
        name: str,
        dim: int,
        ambient_dim: int,
        charts: Sequence[Chart],
        sampler: Callable[[np.random.Generator, int], Array],
        min_depth: float = 1e-3,
        factors: tuple["ChartAtlas", ...] = (),
    ):
        self.name = name
        self.dim = dim
        self.ambient_dim = ambient_dim
        self.charts = {c.id: c for c in charts}
        self.sampler = sampler
        self.min_depth = min_depth
        self.factors = factors

    def __repr__(self) -> str:
        return f"ChartAtlas({self.name!r}, dim={self.dim})"

    def chart(self, chart_id: Hashable) -> Chart:
        return self.charts[chart_id]

    def depths(self, x: Array) -> dict:
        return {cid: np.asarray(c.depth(x)) for cid, c in self.charts.items()}

    def preferred_chart_of(self, x: Array) -> Hashable:
        """Chart id of greatest depth at the ambient point ``x``."""
        best, best_depth = None, -np.inf
        for cid, c in self.charts.items():
            d = float(c.depth(x))
            if d > best_depth:
                best, best_depth = cid, d
        return best

    def point(self, x: Array, chart: Hashable | None = None) -> ManifoldPoint:
        x = np.asarray(x, dtype=float)
        cid = self.preferred_chart_of(x) if chart is None else chart
        if float(self.charts[cid].depth(x)) <= self.min_depth:
            raise StencilEscape(f"point outside chart {cid!r} of {self.name}", point=x.tolist())
        return ManifoldPoint(cid, self.charts[cid].from_ambient(x))

    def ambient(self, p: ManifoldPoint) -> Array:
        return self.charts[p.chart].to_ambient(np.asarray(p.coords, dtype=float))

    def contains(self, chart_id: Hashable, coords: Array) -> Array:
        """Deep enough and round-trips through the ambient model (no wrap-around)."""
        c = self.charts[chart_id]
        coords = np.asarray(coords, dtype=float)
        x = c.to_ambient(coords)
        back = np.max(np.abs(c.from_ambient(x) - coords), axis=-1, initial=0.0)
        return (c.depth(x) > self.min_depth) & (back <= 1e-9 * (1.0 + np.max(np.abs(coords), axis=-1, initial=0.0)))

    def rechart(self, p: ManifoldPoint, chart_id: Hashable | None = None) -> ManifoldPoint:
        x = self.ambient(p)
        return self.point(x, chart_id)

    def vector_to_chart(self, v: TangentVector, chart_id: Hashable) -> TangentVector:
        p = v.base
        x = self.ambient(p)
        amb = self.charts[p.chart].lift(np.asarray(p.coords, float), np.asarray(v.components, float))
        q = self.point(x, chart_id)
        return TangentVector(q, self.charts[chart_id].push(x, amb))

    def vector_from_ambient(self, p: ManifoldPoint, v_amb: Array) -> TangentVector:
        return TangentVector(p, self.charts[p.chart].push(self.ambient(p), np.asarray(v_amb, float)))

    def vector_to_ambient(self, v: TangentVector) -> Array:
        return self.charts[v.base.chart].lift(np.asarray(v.base.coords, float), np.asarray(v.components, float))

    def sample_ambient(self, rng: np.random.Generator, n: int) -> Array:
        return np.asarray(self.sampler(rng, n), dtype=float).reshape(n, self.ambient_dim)

    def sample(self, rng: np.random.Generator, n: int) -> list[ManifoldPoint]:
        return [self.point(x) for x in self.sample_ambient(rng, n)]

    def check_transitions(self, n_samples: int = 64, seed: int = 0) -> float:
        """Max deviation of backward∘forward from the identity on overlaps."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for x in self.sample_ambient(rng, n_samples):
            inside = [cid for cid, c in self.charts.items() if float(c.depth(x)) > self.min_depth]
            for a, b in itertools.permutations(inside, 2):
                ca, cb = self.charts[a], self.charts[b]
                u = ca.from_ambient(x)
                back = ca.from_ambient(cb.to_ambient(cb.from_ambient(ca.to_ambient(u))))
                worst = max(worst, float(np.max(np.abs(back - u), initial=0.0)))
        return worst


def _split(x: Array, sizes: Sequence[int]) -> list[Array]:
    out, start = [], 0
    for k in sizes:
        out.append(x[..., start:start + k])
        start += k
    return out


def product_atlas(*factors: ChartAtlas, name: str | None = None) -> ChartAtlas:
    """Cartesian product; chart ids are tuples of factor chart ids."""
    dims = [f.dim for f in factors]
    adims = [f.ambient_dim for f in factors]
    charts = []
    for combo in itertools.product(*[list(f.charts.values()) for f in factors]):
        charts.append(_product_chart(combo, dims, adims))

    def sampler(rng, n):
        return np.concatenate([f.sample_ambient(rng, n) for f in factors], axis=-1)

    return ChartAtlas(
        name or "×".join(f.name for f in factors),
        sum(dims),
        sum(adims),
        charts,
        sampler,
        min_depth=max(f.min_depth for f in factors),
        factors=tuple(factors),
    )


def _product_chart(combo: Sequence[Chart], dims, adims) -> Chart:
    def to_ambient(u):
        return np.concatenate([c.to_ambient(p) for c, p in zip(combo, _split(u, dims))], axis=-1)

    def from_ambient(x):
        return np.concatenate([c.from_ambient(p) for c, p in zip(combo, _split(x, adims))], axis=-1)

    def depth(x):
        parts = [np.asarray(c.depth(p)) for c, p in zip(combo, _split(x, adims))]
        return np.minimum.reduce(parts) if parts else np.ones(np.shape(x)[:-1])

    def lift(u, v):
        return np.concatenate(
            [c.lift(a, b) for c, a, b in zip(combo, _split(u, dims), _split(v, dims))], axis=-1
        )

    def push(x, w):
        return np.concatenate(
            [c.push(a, b) for c, a, b in zip(combo, _split(x, adims), _split(w, adims))], axis=-1
        )

    return Chart(tuple(c.id for c in combo), sum(dims), to_ambient, from_ambient, depth, lift, push)


class SmoothMap:
    """A smooth map written on ambient models.

    ``fn`` maps source ambient points to target ambient points (batched).
    """

    def __init__(self, source: ChartAtlas, target: ChartAtlas, fn: BatchFn, name: str = ""):
        self.source = source
        self.target = target
        self.fn = fn
        self.name = name

    def __repr__(self) -> str:
        return f"SmoothMap({self.name or '?'}: {self.source.name} -> {self.target.name})"

    def ambient(self, x: Array) -> Array:
        return self.fn(np.asarray(x, dtype=float))

    def __call__(self, p: ManifoldPoint, chart: Hashable | None = None) -> ManifoldPoint:
        return self.target.point(self.ambient(self.source.ambient(p)), chart)

    def coords(self, src_chart: Hashable, u: Array, tgt_chart: Hashable, check: bool = True) -> Array:
        """Chart expression of the map, with domain checks on both sides."""
        sc = self.source.chart(src_chart)
        tc = self.target.chart(tgt_chart)
        x = sc.to_ambient(u)
        if check and not np.all(self.source.contains(src_chart, u)):
            raise StencilEscape(f"stencil left source chart {src_chart!r} of {self.source.name}")
        y = self.fn(x)
        if check and np.any(tc.depth(y) <= self.target.min_depth):
            raise StencilEscape(f"image left target chart {tgt_chart!r} of {self.target.name}")
        return tc.from_ambient(y)

    def then(self, other: "SmoothMap", name: str = "") -> "SmoothMap":
        f, g = self.fn, other.fn
        return SmoothMap(self.source, other.target, lambda x: g(f(x)), name or f"{other.name}∘{self.name}")


@dataclass(frozen=True)
class DerivativeScheme:
    """Central finite-difference settings.

    ``step`` is used for derivatives of analytic chart expressions.
    ``outer_step`` is used for second derivatives and for differentiating
    quantities that are themselves finite-difference outputs; the larger step
    keeps round-off of the inner stencil from being amplified.  Outer
    derivatives are Richardson-extrapolated over (H, H/2) when ``richardson``
    is set, which removes the leading truncation term at that larger step.
    Steps are relative: ``h = step * max(1, |x_i|)``.
    """

    stencil_order: int = 4
    step: float = 1e-4
    outer_step: float = 2e-2
    richardson: bool = True

    def __post_init__(self):
        if self.stencil_order not in (2, 4):
            raise ValueError("stencil_order must be 2 or 4")
        if not (self.step > 0 and self.outer_step > 0):
            raise ValueError("steps must be positive")

    def outer(self) -> "DerivativeScheme":
        return DerivativeScheme(self.stencil_order, self.outer_step, self.outer_step, self.richardson)

    def with_step(self, step: float) -> "DerivativeScheme":
        return DerivativeScheme(self.stencil_order, step, self.outer_step, self.richardson)


_FIRST = {
    2: (np.array([-1.0, 1.0]), np.array([-0.5, 0.5])),
    4: (np.array([-2.0, -1.0, 1.0, 2.0]), np.array([1.0, -8.0, 8.0, -1.0]) / 12.0),
}
_SECOND = {
    2: (np.array([-1.0, 0.0, 1.0]), np.array([1.0, -2.0, 1.0])),
    4: (np.array([-2.0, -1.0, 0.0, 1.0, 2.0]), np.array([-1.0, 16.0, -30.0, 16.0, -1.0]) / 12.0),
}


def _steps(x: Array, step: float) -> Array:
    return step * np.maximum(1.0, np.abs(x))


def fd_gradient(fn: BatchFn, x: Array, step: float, order: int = 4) -> Array:
    """Partial derivatives of ``fn`` at ``x``.

    Returns shape ``x.shape[:-1] + (n,) + out_shape`` where index ``n`` is the
    differentiation direction.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    offs, w = _FIRST[order]
    h = _steps(x, step)                                   # (..., n)
    eye = np.eye(n)
    # (..., K, n_dir, n)
    pts = x[..., None, None, :] + offs[:, None, None] * (h[..., None, :, None] * eye)
    vals = np.asarray(fn(pts))
    batch = x.ndim - 1
    out_shape = vals.shape[batch + 2:]
    w_b = w.reshape((len(w),) + (1,) * (1 + len(out_shape)))
    d = np.tensordot(w, vals, axes=([0], [batch])) if batch == 0 else np.sum(
        w_b * vals, axis=batch
    )
    hb = h.reshape(h.shape + (1,) * len(out_shape))
    return d / hb


def fd_hessian(fn: BatchFn, x: Array, step: float, order: int = 4) -> Array:
    """Symmetrised second partials of ``fn`` at a single point ``x`` (shape (n,)).

    Returns shape ``(n, n) + out_shape``.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    h = _steps(x, step)
    d_off, d_w = _SECOND[order]
    m_off, m_w = _FIRST[order]
    pts = [x]
    for i in range(n):
        for o in d_off:
            if o != 0:
                pts.append(x + o * h[i] * np.eye(n)[i])
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for i, j in pairs:
        for a in m_off:
            for b in m_off:
                pts.append(x + a * h[i] * np.eye(n)[i] + b * h[j] * np.eye(n)[j])
    vals = np.asarray(fn(np.array(pts)))
    f0 = vals[0]
    out = np.zeros((n, n) + f0.shape)
    k = 1
    nz = [(o, wt) for o, wt in zip(d_off, d_w) if o != 0]
    c0 = d_w[list(d_off).index(0.0)]
    for i in range(n):
        acc = c0 * f0
        for (_, wt) in nz:
            acc = acc + wt * vals[k]
            k += 1
        out[i, i] = acc / h[i] ** 2
    for i, j in pairs:
        acc = np.zeros_like(f0)
        for a_w in m_w:
            for b_w in m_w:
                acc = acc + a_w * b_w * vals[k]
                k += 1
        out[i, j] = out[j, i] = acc / (h[i] * h[j])
    return out


def _richardson(op, fn, x, step, order, enabled):
    if not enabled:
        return op(fn, x, step, order)
    coarse = op(fn, x, step, order)
    fine = op(fn, x, step / 2, order)
    k = 2.0**order
    return (k * fine - coarse) / (k - 1.0)


def outer_gradient(fn: BatchFn, x: Array, scheme: "DerivativeScheme") -> Array:
    """First partials at the outer step (for finite-difference-derived fields)."""
    return _richardson(fd_gradient, fn, x, scheme.outer_step, scheme.stencil_order, scheme.richardson)


def outer_hessian(fn: BatchFn, x: Array, scheme: "DerivativeScheme") -> Array:
    H = _richardson(fd_hessian, fn, x, scheme.outer_step, scheme.stencil_order, scheme.richardson)
    return 0.5 * (H + np.swapaxes(H, 0, 1))


def jacobian_coords(fn: BatchFn, x: Array, step: float, order: int = 4) -> Array:
    """Jacobian matrices ``(..., m, n)`` of a vector-valued batch function."""
    g = fd_gradient(fn, x, step, order)          # (..., n, m)
    return np.swapaxes(g, -1, -2)


def jacobian(
    f: SmoothMap,
    p: ManifoldPoint,
    scheme: DerivativeScheme = DerivativeScheme(),
    target_chart: Hashable | None = None,
) -> Array:
    """Coordinate Jacobian of ``f`` at ``p``.

    The source chart is ``p``'s chart; the target chart defaults to the
    preferred chart of ``f(p)``.  Shape ``(target dim, source dim)``.
    """
    if target_chart is None:
        target_chart = f(p).chart
    u = np.asarray(p.coords, dtype=float)
    if f.source.dim == 0:
        return np.zeros((f.target.dim, 0))
    J = jacobian_coords(lambda v: f.coords(p.chart, v, target_chart), u, scheme.step, scheme.stencil_order)
    return J.reshape(f.target.dim, f.source.dim)


def second_partials(
    field: BatchFn, p: ManifoldPoint | Array, scheme: DerivativeScheme = DerivativeScheme()
) -> Array:
    """Second partials of a scalar/vector/matrix field in one chart.

    ``field`` is a batch function of chart coordinates; uses ``outer_step``.
    Output ``(n, n) + field shape``, symmetric in the first two indices.
    """
    u = np.asarray(p.coords if isinstance(p, ManifoldPoint) else p, dtype=float)
    return outer_hessian(field, u, scheme)


def lie_bracket(
    X: BatchFn, Y: BatchFn, p: ManifoldPoint, scheme: DerivativeScheme = DerivativeScheme()
) -> TangentVector:
    """[X, Y]^k = X^j ∂_j Y^k − Y^j ∂_j X^k for chart-coordinate vector fields."""
    u = np.asarray(p.coords, dtype=float)
    dX = fd_gradient(X, u, scheme.step, scheme.stencil_order)    # (j, k) = ∂_j X^k
    dY = fd_gradient(Y, u, scheme.step, scheme.stencil_order)
    Xp = np.asarray(X(u[None]))[0]
    Yp = np.asarray(Y(u[None]))[0]
    return TangentVector(p, Xp @ dY - Yp @ dX)


def kernel_basis(J: Array, cutoff: float = 1e-8, gap: float = 10.0) -> Array:
    """Euclidean-orthonormal basis (columns) of ker J by SVD.

    Raises RankInstability when a singular value sits within a factor
    ``gap`` of the cutoff.
    """
    J = np.atleast_2d(np.asarray(J, dtype=float))
    m, n = J.shape
    if m == 0:
        return np.eye(n)
    if n == 0:
        return np.zeros((0, 0))
    _, s, vt = np.linalg.svd(J)
    near = s[(s > cutoff / gap) & (s < cutoff * gap)]
    if near.size:
        raise RankInstability("singular values cluster at the rank cutoff", residual=float(near[0]))
    rank = int(np.sum(s > cutoff))
    return vt[rank:].T.copy()


def column_rank(J: Array, cutoff: float = 1e-8, gap: float = 10.0) -> int:
    J = np.atleast_2d(np.asarray(J, dtype=float))
    if J.size == 0:
        return 0
    s = np.linalg.svd(J, compute_uv=False)
    near = s[(s > cutoff / gap) & (s < cutoff * gap)]
    if near.size:
        raise RankInstability("singular values cluster at the rank cutoff", residual=float(near[0]))
    return int(np.sum(s > cutoff))
