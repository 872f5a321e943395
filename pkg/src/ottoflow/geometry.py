"""Closed manifolds embedded in Euclidean space.

Every catalogued manifold is a product of round spheres ("factors"), each living
in its own block of ambient coordinates.  A single factor of dimension at least
two gives a constant positive curvature sphere; products of circles (the circle
itself and the Clifford torus) are flat.  All formulas below act factor by factor
on arrays of shape ``(..., ambient_dim)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateStep, OutsideTubularNeighborhood


@dataclass(frozen=True)
class EmbeddedManifold:
    """Product of round spheres embedded in ``R^ambient_dim``.

    Parameters
    ----------
    name : str
        Catalogue identifier.
    blocks : tuple of (int, int)
        Half-open coordinate ranges ``[start, stop)`` of each sphere factor.
    radii : tuple of float
        Radius of each factor.
    tubular : tuple of float
        Admissible distance to the factor for closest point projection.
    """

    name: str
    blocks: tuple
    radii: tuple
    tubular: tuple

    @property
    def ambient_dim(self) -> int:
        return self.blocks[-1][1]

    @property
    def intrinsic_dim(self) -> int:
        return sum(b - a - 1 for a, b in self.blocks)

    @property
    def curvature_kind(self) -> str:
        return "flat" if self.is_flat else "constant_positive"

    @property
    def is_flat(self) -> bool:
        return all(b - a == 2 for a, b in self.blocks)

    @property
    def sectional_curvature(self) -> float:
        """Constant sectional curvature (0 for flat products)."""
        if self.is_flat:
            return 0.0
        if len(self.blocks) != 1:
            raise ConfigError("curvature is only catalogued for single spheres and flat tori")
        return 1.0 / self.radii[0] ** 2

    def factors(self, x: np.ndarray):
        """Yield ``(slice, radius)`` pairs for the factors."""
        for (a, b), r in zip(self.blocks, self.radii):
            yield slice(a, b), r

    def constraint(self, y: np.ndarray) -> np.ndarray:
        """Values ``|y_f|^2 - r_f^2`` per factor; zero exactly on the manifold."""
        y = np.asarray(y, dtype=float)
        return np.stack([np.sum(y[..., s] ** 2, axis=-1) - r**2 for s, r in self.factors(y)], axis=-1)

    def normals(self, x: np.ndarray) -> np.ndarray:
        """Unit outward normals, one per factor, shape ``(..., k, ambient_dim)``."""
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape[:-1] + (len(self.blocks), self.ambient_dim))
        for i, (s, r) in enumerate(self.factors(x)):
            out[..., i, s] = x[..., s] / r
        return out


def sphere(dim: int, radius: float = 1.0, name: str | None = None) -> EmbeddedManifold:
    """Round sphere ``S^dim`` of the given radius in ``R^(dim+1)``."""
    return EmbeddedManifold(name or f"sphere{dim}", ((0, dim + 1),), (float(radius),), (float(radius),))


def clifford_torus(radius: float = 1.0 / np.sqrt(2.0)) -> EmbeddedManifold:
    """Flat torus ``S^1(r) x S^1(r)`` in ``R^4``."""
    return EmbeddedManifold("torus2", ((0, 2), (2, 4)), (radius, radius), (0.5, 0.5))


def get_manifold(name: str) -> EmbeddedManifold:
    """Catalogue lookup: ``circle``, ``torus2``, ``sphere2``, ``sphere3``."""
    catalog = {
        "circle": lambda: sphere(1, name="circle"),
        "torus2": clifford_torus,
        "sphere2": lambda: sphere(2),
        "sphere3": lambda: sphere(3),
    }
    if name not in catalog:
        raise ConfigError(f"unknown manifold id {name!r}; expected one of {sorted(catalog)}")
    return catalog[name]()


def closest_point_project(M: EmbeddedManifold, y) -> np.ndarray:
    """Nearest point of ``M`` to the ambient point(s) ``y``.

    Raises
    ------
    OutsideTubularNeighborhood
        If some factor of ``y`` is farther than the tubular radius.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    for (s, r), tub in zip(M.factors(y), M.tubular):
        norm = np.linalg.norm(y[..., s], axis=-1, keepdims=True)
        if np.any((np.abs(norm - r) > tub) | (norm <= 0.0)):
            raise OutsideTubularNeighborhood(
                f"{M.name}: point at distance {np.max(np.abs(norm - r)):.3g} from a factor of radius {r}"
            )
        out[..., s] = y[..., s] * (r / norm)
    return out


def random_points(M: EmbeddedManifold, count: int, rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed points on ``M``, shape ``(count, ambient_dim)``."""
    y = rng.standard_normal((count, M.ambient_dim))
    for s, r in M.factors(y):
        y[:, s] *= r / np.linalg.norm(y[:, s], axis=-1, keepdims=True)
    return y


def random_tangent(M: EmbeddedManifold, x, rng: np.random.Generator) -> np.ndarray:
    """Gaussian tangent vectors at the points ``x``."""
    x = np.asarray(x, dtype=float)
    return tangent_project(M, x, rng.standard_normal(x.shape))


def tangent_project(M: EmbeddedManifold, x, v) -> np.ndarray:
    """Remove the normal components of ``v`` at ``x``."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.array(np.broadcast_to(v, np.broadcast_shapes(x.shape, v.shape)))
    for s, r in M.factors(x):
        n = x[..., s] / r
        out[..., s] -= np.sum(out[..., s] * n, axis=-1, keepdims=True) * n
    return out


def tangent_projector(M: EmbeddedManifold, x) -> np.ndarray:
    """Matrix of the orthogonal projection onto ``T_x M``."""
    x = np.asarray(x, dtype=float)
    d = M.ambient_dim
    P = np.broadcast_to(np.eye(d), x.shape[:-1] + (d, d)).copy()
    for s, r in M.factors(x):
        n = x[..., s] / r
        P[..., s, s] -= n[..., :, None] * n[..., None, :]
    return P


def second_fundamental_form(M: EmbeddedManifold, x, u, v) -> np.ndarray:
    """Normal part of the ambient derivative of ``v`` along ``u``.

    On a factor of radius ``r`` this is ``-<u_f, v_f> x_f / r^2``.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.zeros(np.broadcast_shapes(x.shape, u.shape, v.shape))
    for s, r in M.factors(x):
        out[..., s] = -np.sum(u[..., s] * v[..., s], axis=-1, keepdims=True) * x[..., s] / r**2
    return out


def riemann_curvature(M: EmbeddedManifold, x, u, v, w) -> np.ndarray:
    """Curvature operator ``R(u, v) w`` (zero on flat products)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    w = np.asarray(w, dtype=float)
    shape = np.broadcast_shapes(np.shape(x), u.shape, v.shape, w.shape)
    if M.is_flat:
        return np.zeros(shape)
    kappa = M.sectional_curvature
    vw = np.sum(v * w, axis=-1, keepdims=True)
    uw = np.sum(u * w, axis=-1, keepdims=True)
    return kappa * (vw * u - uw * v)


def geodesic_exp(M: EmbeddedManifold, x, v) -> np.ndarray:
    """Riemannian exponential, great-circle formula per factor."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.empty(np.broadcast_shapes(x.shape, v.shape))
    for s, r in M.factors(x):
        xs, vs = x[..., s], v[..., s]
        speed = np.linalg.norm(vs, axis=-1, keepdims=True)
        angle = speed / r
        safe = np.where(speed > 0, speed, 1.0)
        out[..., s] = np.cos(angle) * xs + np.where(speed > 0, r * np.sin(angle) / safe, 1.0) * vs
    return out


def log_map(M: EmbeddedManifold, x, y) -> np.ndarray:
    """Inverse of :func:`geodesic_exp` (minimal geodesic), factorwise."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.zeros(np.broadcast_shapes(x.shape, y.shape))
    for s, r in M.factors(x):
        a, b = x[..., s] / r, y[..., s] / r
        c = np.clip(np.sum(a * b, axis=-1, keepdims=True), -1.0, 1.0)
        w = b - c * a
        nw = np.linalg.norm(w, axis=-1, keepdims=True)
        theta = np.arctan2(nw, c)
        out[..., s] = np.where(nw > 0, r * theta * w / np.where(nw > 0, nw, 1.0), 0.0)
    return out


def distance(M: EmbeddedManifold, x, y) -> np.ndarray:
    """Geodesic distance (product metric)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    total = 0.0
    for s, r in M.factors(x):
        a, b = x[..., s] / r, y[..., s] / r
        cross = np.linalg.norm(a - b, axis=-1)
        plus = np.linalg.norm(a + b, axis=-1)
        total = total + (r * 2.0 * np.arctan2(cross, plus)) ** 2
    return np.sqrt(total)


def chord_transport(M: EmbeddedManifold, x, y, v) -> np.ndarray:
    """Transport ``v`` from ``T_x M`` to ``T_y M`` along the minimal geodesic.

    Each factor is handled by the rotation of ``span{x_f, y_f}`` that takes
    ``x_f`` to ``y_f`` and fixes the orthogonal complement, which is the exact
    Levi-Civita transport along the great circle.

    Raises
    ------
    DegenerateStep
        If ``x_f`` and ``y_f`` are antipodal for some factor.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    out = np.array(np.broadcast_to(v, np.broadcast_shapes(x.shape, y.shape, v.shape)))
    for s, r in M.factors(x):
        a, b = x[..., s] / r, y[..., s] / r
        vs = out[..., s]
        denom = 1.0 + np.sum(a * b, axis=-1, keepdims=True)
        if np.any(denom <= 1e-12):
            raise DegenerateStep(f"{M.name}: antipodal consecutive points")
        ab = a + b
        out[..., s] = vs - np.sum(ab * vs, axis=-1, keepdims=True) / denom * ab + 2.0 * np.sum(a * vs, axis=-1, keepdims=True) * b
    return out


def bump(s) -> np.ndarray:
    """C^2 bump ``(1 - s^2)^3`` on ``|s| < 1``, zero outside."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1.0, (1.0 - s**2) ** 3, 0.0)


def extend_field(M: EmbeddedManifold, field, eps: float):
    """Extend a tangent field on ``M`` to ambient space.

    The extension is ``bump(dist / eps) * field(closest_point(y))``; it agrees
    with ``field`` on ``M`` for every ``eps`` and vanishes off the
    ``eps``-tube.
    """

    def extended(y):
        y = np.asarray(y, dtype=float)
        dist = np.zeros(y.shape[:-1])
        for s, r in M.factors(y):
            dist = dist + (np.linalg.norm(y[..., s], axis=-1) - r) ** 2
        dist = np.sqrt(dist)
        weight = bump(dist / eps)
        inside = dist < min(eps, min(M.tubular))
        out = np.zeros_like(y)
        if np.any(inside):
            out[inside] = weight[inside, None] * field(closest_point_project(M, y[inside]))
        return out

    return extended
