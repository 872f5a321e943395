"""Trigonometric potentials and measure-dependent vector fields.

Fields are evaluated in angle coordinates: on the circle a vector is a real
number per point, on ``T^2`` a pair.  Every catalogued field is of gradient
form ``Z(x, mu) = grad_x phi(x, mu)`` except :class:`ConstantField`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from . import _spectral as sp
from .errors import ConfigError
from .measures import GridDensity, Measure, ParticleCloud


@dataclass(frozen=True)
class TrigPotential:
    """Finite sum ``sum_j c_j cos(k_j . x)`` / ``c_j sin(k_j . x)`` with integer ``k_j``."""

    terms: tuple  # of (coef, "cos" | "sin", tuple of ints)

    @property
    def dim(self) -> int:
        return len(self.terms[0][2]) if self.terms else 1

    def _phase(self, x, k):
        x = np.asarray(x, dtype=float)
        return k[0] * x if len(k) == 1 else x[..., 0] * k[0] + x[..., 1] * k[1]

    def value(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape if self.dim == 1 else x.shape[:-1])
        for c, kind, k in self.terms:
            ph = self._phase(x, k)
            out = out + c * (np.cos(ph) if kind == "cos" else np.sin(ph))
        return out

    def grad(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape)
        for c, kind, k in self.terms:
            ph = self._phase(x, k)
            g = -c * np.sin(ph) if kind == "cos" else c * np.cos(ph)
            out = out + (g * k[0] if self.dim == 1 else g[..., None] * np.asarray(k, float))
        return out

    def hess(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = np.zeros(x.shape if self.dim == 1 else x.shape + (2,))
        for c, kind, k in self.terms:
            ph = self._phase(x, k)
            g = -c * (np.cos(ph) if kind == "cos" else np.sin(ph))
            kk = np.outer(k, k).astype(float)
            out = out + (g * kk[0, 0] if self.dim == 1 else g[..., None, None] * kk)
        return out

    def on_grid(self, n: int) -> np.ndarray:
        pts = sp.grid(n) if self.dim == 1 else sp.grid2(n)
        return self.value(pts)

    def convolve(self, mu: Measure) -> "TrigPotential":
        """``x -> int K(x - y) d mu(y)`` for this kernel ``K``, as a new potential."""
        out = []
        for c, kind, k in self.terms:
            if isinstance(mu, GridDensity):
                ph = self._phase(mu.nodes, k)
                w = mu.weights
            else:
                ph = self._phase(mu.points, k)
                w = mu.weights
            C = float(np.sum(w * np.cos(ph)))
            S = float(np.sum(w * np.sin(ph)))
            if kind == "cos":
                out += [(c * C, "cos", k), (c * S, "sin", k)]
            else:
                out += [(c * C, "sin", k), (-c * S, "cos", k)]
        return TrigPotential(tuple(out))

    def scaled(self, s: float) -> "TrigPotential":
        return TrigPotential(tuple((s * c, kind, k) for c, kind, k in self.terms))

    def __add__(self, other: "TrigPotential") -> "TrigPotential":
        return TrigPotential(self.terms + other.terms)

    @property
    def sup_gradient(self) -> float:
        """Upper bound of ``|grad f|`` from the coefficients."""
        return float(sum(abs(c) * np.linalg.norm(k) for c, _, k in self.terms))


_TERM = re.compile(r"\s*([+-])?\s*(?:(\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+)\s*\*\s*)?(cos|sin)\s*(\(\s*-?\d+\s*(?:,\s*-?\d+\s*)?\)|\d+)?")


def parse_potential(expr: str, dim: int = 1) -> TrigPotential:
    """Parse expressions such as ``"cos"``, ``"0.5*sin2"``, ``"cos(1,0) - 0.3*sin(1,1)"``.

    In 2-D a bare ``cos``/``sin`` (or ``cosK``) means the sum over both axes.
    """
    text = expr.replace(" ", "")
    if not text:
        raise ConfigError("empty potential expression")
    terms, pos = [], 0
    while pos < len(text):
        m = _TERM.match(text, pos)
        if not m or m.end() == pos:
            raise ConfigError(f"cannot parse potential expression {expr!r} at position {pos}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        coef = sign * float(m.group(2)) if m.group(2) else sign
        kind, arg = m.group(3), m.group(4)
        if arg and arg.startswith("("):
            k = tuple(int(a) for a in arg[1:-1].split(","))
            if len(k) != dim:
                raise ConfigError(f"wavevector {k} does not match dimension {dim}")
            terms.append((coef, kind, k))
        else:
            kk = int(arg) if arg else 1
            if dim == 1:
                terms.append((coef, kind, (kk,)))
            else:
                terms += [(coef, kind, (kk, 0)), (coef, kind, (0, kk))]
        pos = m.end()
    return TrigPotential(tuple(terms))


# --------------------------------------------------------------------------
# measure vector fields


class MeasureVectorField:
    """Vector field ``Z(x, mu)`` on the circle or the 2-torus.

    Attributes
    ----------
    form : str
        ``"gradient"`` when ``Z = grad phi(., mu)``.
    needs_density : bool
        Whether evaluation requires a density (as opposed to moments of the
        measure).
    measure_independent : bool
    """

    form = "gradient"
    needs_density = False
    measure_independent = False
    smooth = True

    def __call__(self, points, mu: Measure) -> np.ndarray:
        raise NotImplementedError

    def at_particles(self, mu: ParticleCloud) -> np.ndarray:
        """Field at the cloud's own points."""
        return self(mu.points, mu)

    def jacobian(self, points, mu: Measure) -> np.ndarray:
        """Spatial derivative ``D_x Z``: ``(P,)`` in 1-D, ``(P, 2, 2)`` in 2-D."""
        raise NotImplementedError

    def jacobian_at_particles(self, mu: ParticleCloud) -> np.ndarray:
        return self.jacobian(mu.points, mu)

    def potential_grid(self, mu: Measure, n: int) -> np.ndarray:
        """``phi(., mu)`` sampled on the ``n``-grid (gradient form only)."""
        raise NotImplementedError

    def grid_values(self, mu: Measure, n: int, dim: int) -> np.ndarray:
        """Field on the grid: ``(n,)`` or ``(2, n, n)``."""
        pts = sp.grid(n) if dim == 1 else sp.grid2(n).reshape(-1, 2)
        v = self(pts, mu)
        return v if dim == 1 else np.moveaxis(v.reshape(n, n, 2), -1, 0)


class PotentialField(MeasureVectorField):
    """``Z = strength * grad f`` for a fixed trigonometric potential ``f``."""

    measure_independent = True

    def __init__(self, potential: TrigPotential, strength: float = 1.0):
        self.f = potential.scaled(strength)

    def __call__(self, points, mu=None):
        return self.f.grad(points)

    def jacobian(self, points, mu=None):
        return self.f.hess(points)

    def potential_grid(self, mu, n):
        v = self.f.on_grid(n)
        return v - v.mean()


class InteractionField(MeasureVectorField):
    """``Z(x, mu) = -strength * grad_x int K(x - y) d mu(y)``.

    Evaluated through Fourier moments of ``mu``, so the cost is linear in the
    number of particles.
    """

    def __init__(self, kernel: TrigPotential, strength: float = 1.0):
        self.kernel = kernel
        self.strength = strength

    def potential(self, mu: Measure) -> TrigPotential:
        return self.kernel.convolve(mu).scaled(-self.strength)

    def __call__(self, points, mu):
        return self.potential(mu).grad(points)

    def jacobian(self, points, mu):
        return self.potential(mu).hess(points)

    def potential_grid(self, mu, n):
        v = self.potential(mu).on_grid(n)
        return v - v.mean()


def _lagrangian_log_density(mu: ParticleCloud):
    rho = mu.node_density()
    return np.log(rho)


class EntropyDrift(MeasureVectorField):
    """``Z(x, mu) = -strength * grad log rho``; the descent direction of the entropy.

    At the points of a Lagrangian cloud the gradient is computed exactly from
    the map Jacobian; elsewhere the density is read from a kernel estimate.
    """

    needs_density = True

    def __init__(self, strength: float = 1.0, kde_n: int | None = None):
        self.strength = strength
        self.kde_n = kde_n

    def _grid_log(self, mu: Measure):
        dens = as_density(mu, mu.n if isinstance(mu, GridDensity) else self.kde_n)
        return np.log(np.maximum(dens.values, 1e-300))

    def __call__(self, points, mu):
        L = self._grid_log(mu)
        if L.ndim == 1:
            return -self.strength * sp.trig_interpolate(L, points, order=1)
        g = sp.gradient2(L)
        return -self.strength * np.stack([sp.trig_interpolate2(g[0], points), sp.trig_interpolate2(g[1], points)], -1)

    def at_particles(self, mu: ParticleCloud) -> np.ndarray:
        if not mu.lagrangian:
            return self(mu.points, mu)
        L = _lagrangian_log_density(mu)
        if mu.dim == 1:
            return -self.strength * sp.derivative(L) / mu.jacobian()
        J = mu.jacobian()
        gx = np.stack([sp.derivative(L, axis=0), sp.derivative(L, axis=1)])
        grad = _solve_transpose(J, gx)
        return -self.strength * np.moveaxis(grad, 0, -1).reshape(-1, 2)

    def jacobian_at_particles(self, mu: ParticleCloud) -> np.ndarray:
        if mu.lagrangian and mu.dim == 1:
            L = _lagrangian_log_density(mu)
            J = mu.jacobian()
            first = sp.derivative(L) / J
            return -self.strength * sp.derivative(first) / J
        return self.jacobian(mu.points, mu)

    def jacobian(self, points, mu):
        L = self._grid_log(mu)
        if L.ndim == 1:
            return -self.strength * sp.trig_interpolate(L, points, order=2)
        H = [[sp.derivative(sp.derivative(L, axis=a), axis=b) for b in range(2)] for a in range(2)]
        return -self.strength * np.stack(
            [np.stack([sp.trig_interpolate2(H[a][b], points) for b in range(2)], -1) for a in range(2)], -2
        )

    def potential_grid(self, mu, n):
        v = -self.strength * np.log(as_density(mu, n).require_smooth().values)
        return v - v.mean()


def _solve_transpose(J, g):
    """Solve ``J^T v = g`` pointwise; ``J`` has shape ``(2, 2, ...)``."""
    det = J[0, 0] * J[1, 1] - J[0, 1] * J[1, 0]
    v0 = (J[1, 1] * g[0] - J[1, 0] * g[1]) / det
    v1 = (-J[0, 1] * g[0] + J[0, 0] * g[1]) / det
    return np.stack([v0, v1])


def as_density(mu: Measure, n: int | None) -> GridDensity:
    """Grid density of ``mu`` on an ``n``-grid (spectral resampling or inversion/KDE)."""
    if isinstance(mu, GridDensity):
        if n is None or n == mu.n:
            return mu
        if mu.dim == 1:
            return GridDensity(np.maximum(sp.resample(mu.values, n), 0.0))
        raise ConfigError("2-D grid densities cannot be resampled")
    return mu.grid_density(n)


class ConstantField(MeasureVectorField):
    """Spatially constant vector (a harmonic, non-gradient field on the torus)."""

    form = "general"
    measure_independent = True

    def __init__(self, vector):
        self.vector = np.atleast_1d(np.asarray(vector, dtype=float))

    def __call__(self, points, mu=None):
        pts = np.asarray(points, dtype=float)
        if self.vector.size == 1:
            return np.full(pts.shape, self.vector[0])
        return np.broadcast_to(self.vector, pts.shape).copy()

    def jacobian(self, points, mu=None):
        pts = np.asarray(points, dtype=float)
        return np.zeros(pts.shape if self.vector.size == 1 else pts.shape + (2,))


class SumField(MeasureVectorField):
    """Pointwise sum of fields."""

    def __init__(self, *parts: MeasureVectorField):
        self.parts = parts
        self.form = "gradient" if all(p.form == "gradient" for p in parts) else "general"
        self.needs_density = any(p.needs_density for p in parts)
        self.measure_independent = all(p.measure_independent for p in parts)

    def __call__(self, points, mu):
        return sum(p(points, mu) for p in self.parts)

    def at_particles(self, mu):
        return sum(p.at_particles(mu) for p in self.parts)

    def jacobian(self, points, mu):
        return sum(p.jacobian(points, mu) for p in self.parts)

    def jacobian_at_particles(self, mu):
        return sum(p.jacobian_at_particles(mu) for p in self.parts)

    def potential_grid(self, mu, n):
        return sum(p.potential_grid(mu, n) for p in self.parts)


class ZeroField(ConstantField):
    form = "gradient"

    def __init__(self, dim: int = 1):
        super().__init__(np.zeros(dim))

    def potential_grid(self, mu, n):
        return np.zeros((n,) * (1 if self.vector.size == 1 else 2))


def _split_args(text: str) -> list[str]:
    depth, cur, out = 0, "", []
    for ch in text:
        if ch == "," and depth == 0:
            out.append(cur)
            cur = ""
            continue
        depth += ch == "("
        depth -= ch == ")"
        cur += ch
    out.append(cur)
    return [s.strip() for s in out if s.strip()]


def field_from_catalog(entry: str, dim: int = 1) -> MeasureVectorField:
    """Build a field from a catalogue string.

    Recognised entries::

        zero
        gradient_potential(<expr>[, strength])
        interaction(<kernel expr>, strength)
        entropy_drift(strength)
        constant(v) / constant(v1, v2)
    """
    entry = entry.strip()
    if entry == "zero":
        return ZeroField(dim)
    m = re.fullmatch(r"(\w+)\((.*)\)", entry)
    if not m:
        raise ConfigError(f"unrecognised field entry {entry!r}")
    name, args = m.group(1), _split_args(m.group(2))
    try:
        if name == "gradient_potential":
            strength = float(args[1]) if len(args) > 1 else 1.0
            return PotentialField(parse_potential(args[0], dim), strength)
        if name == "interaction":
            return InteractionField(parse_potential(args[0], dim), float(args[1]) if len(args) > 1 else 1.0)
        if name == "entropy_drift":
            return EntropyDrift(float(args[0]) if args else 1.0)
        if name == "constant":
            vals = [float(a) for a in args]
            if len(vals) != dim:
                raise ConfigError(f"constant field needs {dim} components")
            return ConstantField(vals)
    except (IndexError, ValueError) as exc:
        raise ConfigError(f"bad arguments in field entry {entry!r}") from exc
    raise ConfigError(f"unknown field kind {name!r}")
