"""Concrete atlases: points, Euclidean spaces, circles, spheres, tori.

Circles use two angle charts cut at opposite points.  Spheres use the two
stereographic projections.  In both cases the preferred chart of a point has
depth at least 1, so sampled points never sit near a chart boundary.
"""

from __future__ import annotations

import numpy as np

from .smoothcalc import Chart, ChartAtlas, product_atlas


def _bshape(u, v):
    return np.broadcast_shapes(np.shape(u)[:-1], np.shape(v)[:-1])


def point_atlas(name: str = "pt") -> ChartAtlas:
    def zeros(x):
        return np.zeros(np.shape(x)[:-1] + (0,))

    def lift(u, v):
        return np.zeros(_bshape(u, v) + (0,))

    chart = Chart("pt", 0, zeros, zeros, lambda x: np.ones(np.shape(x)[:-1]), lift, lift)
    return ChartAtlas(name, 0, 0, [chart], lambda rng, n: np.zeros((n, 0)))


def euclidean_atlas(n: int, name: str | None = None, scale: float = 1.0) -> ChartAtlas:
    def ident(x):
        return np.asarray(x, dtype=float)

    def lift(u, v):
        return np.broadcast_to(v, _bshape(u, v) + (n,)).copy()

    chart = Chart("R", n, ident, ident, lambda x: np.ones(np.shape(x)[:-1]), lift, lift)
    return ChartAtlas(
        name or f"R{n}", n, n, [chart], lambda rng, k: scale * rng.standard_normal((k, n))
    )


def circle_atlas(name: str = "S1") -> ChartAtlas:
    """Unit circle in R²; angle charts cut at θ = π ("a") and θ = 0 ("b")."""

    def to_amb(u):
        th = u[..., 0]
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    def from_a(x):
        return np.arctan2(x[..., 1], x[..., 0])[..., None]

    def from_b(x):
        return (np.arctan2(-x[..., 1], -x[..., 0]) + np.pi)[..., None]

    def lift(u, v):
        th = u[..., 0:1]
        return np.concatenate([-np.sin(th) * v, np.cos(th) * v], axis=-1)

    def push(x, w):
        num = x[..., 0:1] * w[..., 1:2] - x[..., 1:2] * w[..., 0:1]
        return num / np.sum(x * x, axis=-1, keepdims=True)

    charts = [
        Chart("a", 1, to_amb, from_a, lambda x: 1.0 + x[..., 0], lift, push),
        Chart("b", 1, to_amb, from_b, lambda x: 1.0 - x[..., 0], lift, push),
    ]

    def sampler(rng, n):
        th = rng.uniform(-np.pi, np.pi, n)
        return np.stack([np.cos(th), np.sin(th)], axis=-1)

    return ChartAtlas(name, 1, 2, charts, sampler)


def _stereo_chart(cid: str, n: int, sign: float) -> Chart:
    """Projection from the pole ``sign * e_n``; depth is 1 - sign * x_n."""

    def to_amb(u):
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        xp = 2.0 * u / (1.0 + r2)
        xn = sign * (r2 - 1.0) / (1.0 + r2)
        return np.concatenate([xp, xn], axis=-1)

    def from_amb(x):
        return x[..., :n] / (1.0 - sign * x[..., n:n + 1])

    def lift(u, v):
        r2 = np.sum(u * u, axis=-1, keepdims=True)
        uv = np.sum(u * v, axis=-1, keepdims=True)
        d = 1.0 + r2
        dxp = 2.0 * v / d - 4.0 * u * uv / d**2
        dxn = sign * 4.0 * uv / d**2
        return np.concatenate([dxp, dxn], axis=-1)

    def push(x, w):
        den = 1.0 - sign * x[..., n:n + 1]
        return w[..., :n] / den + sign * x[..., :n] * w[..., n:n + 1] / den**2

    return Chart(cid, n, to_amb, from_amb, lambda x: 1.0 - sign * x[..., n], lift, push)


def sphere_atlas(n: int, name: str | None = None) -> ChartAtlas:
    """Unit n-sphere in R^{n+1} with stereographic charts "N" and "S"."""
    charts = [_stereo_chart("N", n, 1.0), _stereo_chart("S", n, -1.0)]

    def sampler(rng, k):
        x = rng.standard_normal((k, n + 1))
        return x / np.linalg.norm(x, axis=-1, keepdims=True)

    return ChartAtlas(name or f"S{n}", n, n + 1, charts, sampler)


def torus_atlas(k: int, name: str | None = None) -> ChartAtlas:
    return product_atlas(*[circle_atlas() for _ in range(k)], name=name or f"T{k}")


def lift_matrix(chart: Chart, u) -> np.ndarray:
    """Differential of ``chart.to_ambient`` at ``u``: shape (..., N, n)."""
    u = np.asarray(u, dtype=float)
    n = u.shape[-1]
    cols = chart.lift(u[..., None, :], np.eye(n))        # (..., n, N)
    return np.swapaxes(cols, -1, -2)


def push_matrix(chart: Chart, x, ambient_dim: int) -> np.ndarray:
    """Differential of ``chart.from_ambient`` at ``x``: shape (..., n, N)."""
    x = np.asarray(x, dtype=float)
    rows = chart.push(x[..., None, :], np.eye(ambient_dim))  # (..., N, n)
    return np.swapaxes(rows, -1, -2)
