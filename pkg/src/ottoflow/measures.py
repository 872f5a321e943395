"""Probability measures on the circle and the flat 2-torus.

Coordinates are angles in ``[0, 2 pi)``; a point of ``T^2`` is a pair of
angles.  Two representations are provided:

``GridDensity``
    Nodal values of a density with respect to the normalised volume, so the
    values have mean one and the uniform measure is ``values == 1``.
``ParticleCloud``
    Weighted points.  A cloud may carry a ``reference`` grid density, in which
    case it is *Lagrangian*: point ``j`` is the image ``phi(x_j)`` of grid node
    ``x_j`` under a smooth map, stored as a continuous lift, and has weight
    ``reference_j / n^d``.  The density of a Lagrangian cloud is known
    exactly through the Jacobian of ``phi``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _spectral as sp
from .errors import ConfigError, NonInvertibleMap, NonMonotone1D, NonSmoothDensity

TWO_PI = sp.TWO_PI
SMOOTH_FLOOR = 1e-8


@dataclass(frozen=True)
class GridDensity:
    """Density samples on the periodic grid (mean one)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim not in (1, 2) or (v.ndim == 2 and v.shape[0] != v.shape[1]):
            raise ConfigError(f"grid density must be 1-D or square 2-D, got shape {v.shape}")
        if np.any(v < 0):
            raise ConfigError("density values must be nonnegative")
        object.__setattr__(self, "values", v / v.mean())

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def smooth(self) -> bool:
        return bool(self.values.min() >= SMOOTH_FLOOR)

    @property
    def nodes(self) -> np.ndarray:
        return sp.grid(self.n) if self.dim == 1 else sp.grid2(self.n).reshape(-1, 2)

    @property
    def weights(self) -> np.ndarray:
        return self.values.ravel() / self.values.size

    def integrate(self, f_values) -> float:
        """``int f d mu`` for ``f`` sampled on the grid."""
        return float(np.mean(np.asarray(f_values) * self.values))

    def at(self, points) -> np.ndarray:
        """Trigonometric interpolant of the density at arbitrary points."""
        if self.dim == 1:
            return sp.trig_interpolate(self.values, points)
        return sp.trig_interpolate2(self.values, points)

    def to_cloud(self) -> "ParticleCloud":
        """Lagrangian cloud at the grid nodes (identity map)."""
        return ParticleCloud(self.nodes.copy(), self.weights.copy(), reference=self)

    def require_smooth(self):
        if not self.smooth:
            raise NonSmoothDensity(f"density minimum {self.values.min():.3g} below {SMOOTH_FLOOR}")
        return self


@dataclass(frozen=True)
class ParticleCloud:
    """Weighted points, optionally images of grid nodes under a smooth map."""

    points: np.ndarray
    weights: np.ndarray
    reference: GridDensity | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if pts.ndim not in (1, 2) or (pts.ndim == 2 and pts.shape[1] != 2):
            raise ConfigError(f"points must have shape (P,) or (P, 2), got {pts.shape}")
        if w.shape != pts.shape[:1] or np.any(w < 0):
            raise ConfigError("weights must be nonnegative, one per point")
        if abs(w.sum() - 1.0) > 1e-12:
            w = w / w.sum()
        if self.reference is not None and self.reference.values.size != len(w):
            raise ConfigError("a Lagrangian cloud needs one point per reference node")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return self.points.ndim

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def lagrangian(self) -> bool:
        return self.reference is not None

    @property
    def wrapped(self) -> np.ndarray:
        return np.mod(self.points, TWO_PI)

    def moved(self, points) -> "ParticleCloud":
        """Same weights (and reference) at new locations."""
        return ParticleCloud(points, self.weights, self.reference)

    def integrate(self, f_values) -> float:
        return float(np.sum(self.weights * np.asarray(f_values)))

    # Lagrangian machinery -------------------------------------------------
    @property
    def n(self) -> int:
        return self.reference.n

    def displacement(self) -> np.ndarray:
        """``phi(x) - x`` on the grid (shape ``(n,)`` or ``(2, n, n)``)."""
        self._need_reference()
        n = self.reference.n
        if self.dim == 1:
            return self.points - sp.grid(n)
        return np.moveaxis((self.points - sp.grid2(n).reshape(-1, 2)).reshape(n, n, 2), -1, 0)

    def jacobian(self) -> np.ndarray:
        """Spectral derivative of the map: ``phi'`` (1-D) or ``D phi`` of shape ``(2, 2, n, n)``."""
        d = self.displacement()
        if self.dim == 1:
            return 1.0 + sp.derivative(d)
        n = self.reference.n
        J = np.empty((2, 2, n, n))
        for a in range(2):
            for b in range(2):
                J[a, b] = (a == b) + sp.derivative(d[a], axis=b)
        return J

    def jacobian_determinant(self) -> np.ndarray:
        J = self.jacobian()
        if self.dim == 1:
            return J
        return J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]

    def node_density(self) -> np.ndarray:
        """Density of the cloud at its own points (grid-shaped)."""
        self._need_reference()
        det = self.jacobian_determinant()
        if np.min(det) <= 0:
            raise (NonMonotone1D if self.dim == 1 else NonInvertibleMap)(
                f"map Jacobian reaches {np.min(det):.3g}; the sampled map is not a diffeomorphism"
            )
        return self.reference.values / det

    def grid_density(self, n: int | None = None, bandwidth: float | None = None) -> GridDensity:
        """Density on a grid.

        Lagrangian 1-D clouds are inverted exactly; every other cloud goes
        through a periodic kernel density estimate.
        """
        if self.lagrangian and self.dim == 1 and bandwidth is None:
            n = n or self.reference.n
            y = sp.grid(n)
            x = sp.invert_monotone(self.points, y)
            disp = self.displacement()
            dens = sp.trig_interpolate(self.reference.values, x) / (1.0 + sp.trig_interpolate(disp, x, order=1))
            return GridDensity(dens)
        n = n or (self.reference.n if self.lagrangian else 256 if self.dim == 1 else 64)
        return kde(self, n, bandwidth)

    def _need_reference(self):
        if self.reference is None:
            raise NonSmoothDensity("operation requires a Lagrangian cloud with a smooth reference density")


Measure = GridDensity | ParticleCloud


def as_cloud(mu: Measure) -> ParticleCloud:
    return mu.to_cloud() if isinstance(mu, GridDensity) else mu


def kde(cloud: ParticleCloud, n: int, bandwidth: float | None = None) -> GridDensity:
    """Periodic Gaussian kernel density estimate on an ``n``-point grid.

    Mass is deposited by linear (cloud-in-cell) weights and smoothed in
    Fourier space with standard deviation ``bandwidth`` (default two grid
    spacings).
    """
    h = TWO_PI / n
    sigma = 2.0 * h if bandwidth is None else bandwidth
    s = np.mod(cloud.points, TWO_PI) / h
    i0 = np.floor(s).astype(int)
    frac = s - i0
    if cloud.dim == 1:
        grid = np.bincount(i0 % n, cloud.weights * (1 - frac), minlength=n)
        grid += np.bincount((i0 + 1) % n, cloud.weights * frac, minlength=n)
        k2 = sp.wavenumbers(n) ** 2
    else:
        grid = np.zeros(n * n)
        for dx in (0, 1):
            for dy in (0, 1):
                wx = frac[:, 0] if dx else 1 - frac[:, 0]
                wy = frac[:, 1] if dy else 1 - frac[:, 1]
                idx = ((i0[:, 0] + dx) % n) * n + (i0[:, 1] + dy) % n
                grid += np.bincount(idx, cloud.weights * wx * wy, minlength=n * n)
        grid = grid.reshape(n, n)
        k = sp.wavenumbers(n)
        k2 = k[:, None] ** 2 + k[None, :] ** 2
    smooth = np.real(np.fft.ifftn(np.fft.fftn(grid) * np.exp(-0.5 * sigma**2 * k2)))
    values = np.maximum(smooth, 0.0) * grid.size
    return GridDensity(values)


def check_monotone(lifted: np.ndarray) -> None:
    """Raise :class:`NonMonotone1D` unless the lifted samples define a circle diffeomorphism."""
    gaps = np.diff(np.concatenate([lifted, [lifted[0] + TWO_PI]]))
    if np.any(gaps <= 0):
        raise NonMonotone1D(f"sampled circle map is not strictly increasing (min gap {gaps.min():.3g})")


def pushforward(map_samples, mu: Measure) -> Measure:
    """Image measure under a map known at the nodes / particles of ``mu``.

    Parameters
    ----------
    map_samples : ndarray
        Images of the particles of a cloud, or images of the grid nodes of a
        grid density (1-D: lifted monotone values; 2-D: shape ``(n*n, 2)``).
    mu : GridDensity or ParticleCloud

    Returns
    -------
    Same representation as ``mu``.  Clouds keep their weights.  1-D grid
    densities use the exact change of variables through the trigonometric
    interpolant of the map; 2-D grid densities go through :func:`kde`.
    """
    y = np.asarray(map_samples, dtype=float)
    if isinstance(mu, ParticleCloud):
        return mu.moved(y)
    if mu.dim == 1:
        check_monotone(y)
        return ParticleCloud(y, mu.weights, mu).grid_density()
    cloud = ParticleCloud(y.reshape(-1, 2), mu.weights, mu)
    return kde(cloud, mu.n)


# --------------------------------------------------------------------------
# named measure families


def _family_values(name: str, args: list[float], n: int, dim: int) -> np.ndarray:
    x = sp.grid(n) if dim == 1 else sp.grid2(n)[..., 0]
    y = None if dim == 1 else sp.grid2(n)[..., 1]
    if name == "uniform":
        return np.ones((n,) * dim)
    if name == "cosine":
        a, k = (args + [1.0])[:2] if args else (0.5, 1.0)
        vals = 1.0 + a * np.cos(k * x)
        return vals if dim == 1 else vals * (1.0 + a * np.cos(k * y))
    if name == "vonmises":
        kappa = args[0] if args else 1.0
        mu0 = args[1] if len(args) > 1 else np.pi
        vals = np.exp(kappa * np.cos(x - mu0))
        return vals if dim == 1 else vals * np.exp(kappa * np.cos(y - mu0))
    raise ConfigError(f"unknown measure family {name!r}")


def measure_family(spec: str, n: int, dim: int = 1) -> GridDensity:
    """Parse ``"uniform"``, ``"cosine(a,k)"`` or ``"vonmises(kappa[,center])"``."""
    spec = spec.strip()
    if "(" in spec:
        name, rest = spec.split("(", 1)
        if not rest.endswith(")"):
            raise ConfigError(f"malformed measure family {spec!r}")
        try:
            args = [float(a) for a in rest[:-1].split(",") if a.strip()]
        except ValueError as exc:
            raise ConfigError(f"malformed measure family {spec!r}") from exc
    else:
        name, args = spec, []
    return GridDensity(_family_values(name.strip(), args, n, dim))


@dataclass(frozen=True)
class TangentPotential:
    """Mean-zero potential ``phi`` on the grid; the tangent vector is ``grad phi``."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v - v.mean())

    @property
    def dim(self) -> int:
        return self.values.ndim

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def gradient(self) -> np.ndarray:
        return sp.gradient(self.values)

    def value_at(self, points) -> np.ndarray:
        if self.dim == 1:
            return sp.trig_interpolate(self.values, points)
        return sp.trig_interpolate2(self.values, points)

    def gradient_at(self, points) -> np.ndarray:
        """``grad phi`` at points: shape ``(P,)`` in 1-D, ``(P, 2)`` in 2-D."""
        if self.dim == 1:
            return sp.trig_interpolate(self.values, points, order=1)
        g = self.gradient()
        return np.stack([sp.trig_interpolate2(g[0], points), sp.trig_interpolate2(g[1], points)], axis=-1)

    def hessian_at(self, points) -> np.ndarray:
        if self.dim == 1:
            return sp.trig_interpolate(self.values, points, order=2)
        H = [[sp.derivative(sp.derivative(self.values, axis=a), axis=b) for b in range(2)] for a in range(2)]
        return np.stack([np.stack([sp.trig_interpolate2(H[a][b], points) for b in range(2)], -1) for a in range(2)], -2)

    def norm(self, mu: GridDensity) -> float:
        """Otto norm ``sqrt(int |grad phi|^2 d mu)``."""
        g = self.gradient()
        sq = g**2 if self.dim == 1 else np.sum(g**2, axis=0)
        return float(np.sqrt(mu.integrate(sq)))

    def __add__(self, other: "TangentPotential") -> "TangentPotential":
        return TangentPotential(self.values + other.values)

    def __sub__(self, other: "TangentPotential") -> "TangentPotential":
        return TangentPotential(self.values - other.values)

    def __mul__(self, c: float) -> "TangentPotential":
        return TangentPotential(c * self.values)

    __rmul__ = __mul__
